"""CSV / JSON / binary writers shared by the experiments and the CLI.

CSV files have a header row and print floats with 17 significant digits so
doubles round-trip exactly.  JSON documents use sorted keys.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeField, Window


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, ensure_ascii=False)


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc) + "\n", encoding="utf-8")
    return path


def config_hash(doc) -> str:
    """Git blob hash of the canonical JSON form of ``doc``."""
    body = json.dumps(_jsonable(doc), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


# lattice fields -------------------------------------------------------------


def field_rows(field: LatticeField):
    vals = field.values if field.values.ndim > 1 else field.values[:, None]
    for x, v in zip(field.window.sites, vals):
        yield list(x) + list(v)


def write_field_csv(path, field: LatticeField) -> Path:
    """Rows ``x1..xd, value1..valuek``; metadata goes to ``<path>.json``."""
    d = field.window.d
    k = field.arity
    header = [f"x{i + 1}" for i in range(d)] + (["value"] if k == 1 else
                                                [f"value{j + 1}" for j in range(k)])
    out = write_csv(path, header, field_rows(field))
    if field.meta:
        write_json(str(out) + ".json", {"d": d, "r": field.window.r, "arity": k, **field.meta})
    return out


_FIELD_MAGIC = b"CWLF"


def write_field_binary(path, field: LatticeField) -> Path:
    """Header ``magic, d, r, arity, len(meta)``, JSON metadata, then float64 values."""
    meta = json.dumps(_jsonable(field.meta), sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(struct.pack("<IIII", field.window.d, field.window.r, field.arity, len(meta)))
        fh.write(meta)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> LatticeField:
    with open(path, "rb") as fh:
        if fh.read(4) != _FIELD_MAGIC:
            raise ValueError("not a lattice-field dump")
        d, r, arity, nmeta = struct.unpack("<IIII", fh.read(16))
        meta = json.loads(fh.read(nmeta) or b"{}")
        window = Window(d, r)
        vals = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    if arity > 1:
        vals = vals.reshape(window.size, arity)
    return LatticeField(window, vals, meta)
