import json
import os
import subprocess
import sys

import pytest

from condwalk import cli
from condwalk.config import ConfigError, bundled_configs, load, parse_text


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV_VAR, str(tmp_path / "out"))
    return tmp_path / "out"


def test_bundled_configs_load():
    names = bundled_configs()
    assert {"constant-d2", "iid-d2", "periodic-d1", "quasi-d1"} <= set(names)
    for name in names:
        assert load(name).environment is not None


def test_nested_environment_sections():
    cfg = parse_text("""
[environment]
kind = shifted
base = pert
offset = 3, 0

[environment.pert]
kind = perturbed
base = core
replacement = 9

[environment.core]
kind = iid
d = 2
distribution = uniform:0.5,2
seed = 7
""")
    env = cfg.environment
    assert env.values([[-3, 4]], [0])[0] == 9.0


def test_unknown_and_missing_keys_listed():
    with pytest.raises(ConfigError, match="unknown keys: bar, foo"):
        parse_text("[environment]\nkind = constant\nd = 2\nfoo = 1\nbar = 2\n")
    with pytest.raises(ConfigError, match="missing required keys: d, distribution"):
        parse_text("[environment]\nkind = iid\n")
    with pytest.raises(ConfigError, match="unknown sections: nonsense"):
        parse_text("[environment]\nkind = constant\nd = 1\n[nonsense]\n")
    with pytest.raises(ConfigError, match="missing required keys: r"):
        parse_text("[environment]\nkind = constant\nd = 1\n[sigma]\n").operation("sigma")


def test_negative_conductance_is_hard_error(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[environment]\nkind = periodic\nvalues = 1, -2\n")
    with pytest.raises(ConfigError, match="positive"):
        load(str(p))
    assert cli.main(["validate", str(p)]) == 1


def test_validate_ok_and_warning(tmp_path, capsys):
    assert cli.main(["validate", "constant-d2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok") and "sites" in out and "steps" in out
    p = tmp_path / "w.ini"
    p.write_text("[environment]\nkind = constant\nd = 3\n[moments]\np = 1\nq = 1\n")
    assert cli.main(["validate", str(p)]) == 0
    assert "1/p + 1/q < 2/d" in capsys.readouterr().out


def test_sigma_on_constant(out_root):
    assert cli.main(["sigma", "constant-d2"]) == 0
    doc = json.loads((out_root / "sigma" / "sigma.json").read_text())
    S = doc["sigma"]
    assert abs(S[0][0] - 0.5) <= 1e-10 and abs(S[1][1] - 0.5) <= 1e-10
    assert abs(S[0][1]) <= 1e-10 and abs(S[1][0]) <= 1e-10
    manifest = json.loads((out_root / "sigma" / "manifest.json").read_text())
    assert manifest["status"] == "done" and manifest["exit_code"] == 0
    assert manifest["finished"] is not None and manifest["versions"]["numpy"]


def test_quadratic_identity_subcommand_on_iid(out_root):
    assert cli.main(["lemma35", "iid-d2"]) == 0
    doc = json.loads((out_root / "lemma35" / "lemma35.json").read_text())
    assert max(doc["gaps"]) <= 1e-8


def test_iip_single_replica_gated(out_root, capsys):
    assert cli.main(["iip", "constant-d2", "--set", "iip.M=1", "--set", "iip.n=100"]) == 0
    assert "insufficient sample" in capsys.readouterr().err
    doc = json.loads((out_root / "iip" / "iip.json").read_text())
    assert doc["summary"]["passed"] is None


def test_assertion_failure_exit_2(out_root):
    code = cli.main(["lemma35", "iid-d2", "--set", "lemma35.max_gap=0"])
    assert code == 2
    manifest = json.loads((out_root / "lemma35" / "manifest.json").read_text())
    assert manifest["status"] == "failed"


def test_usage_errors_exit_1():
    assert cli.main(["no-such-command", "constant-d2"]) == 1
    assert cli.main(["sigma", "no-such-config"]) == 1
    assert cli.main(["sigma", "constant-d2", "--set", "sigma.bogus=1"]) == 1
    assert cli.main(["sigma", "constant-d2", "--set", "novalue"]) == 1


def test_out_flag_beats_environment_variable(tmp_path):
    target = tmp_path / "explicit"
    assert cli.main(["sigma", "constant-d2", "--out", str(target)]) == 0
    assert (target / "sigma" / "sigma.csv").exists()


def test_worker_count_does_not_change_outputs(tmp_path):
    outs = []
    for w in ("1", "4"):
        root = tmp_path / w
        assert cli.main(["lln", "constant-d2", "--workers", w, "--out", str(root),
                         "--set", "lln.M=200", "--seed", "5"]) == 0
        outs.append((root / "lln" / "lln.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("args", [
    ["env-report", "quasi-d1"], ["sigma-scan", "iid-d2"], ["corrector-1d", "periodic-d1"],
    ["chi", "periodic-d1"], ["theta", "iid-d2"], ["dirichlet", "iid-d2"],
    ["ergodic-avg", "periodic-d1", "--set", "ergodic-avg.n=10000"],
    ["conversion", "periodic-d1", "--set", "conversion.n_list=1000,10000"],
    ["exit-tail", "constant-d2", "--set", "exit-tail.M=300"],
    ["oscillation", "constant-d2", "--set", "oscillation.M=50", "--set", "oscillation.n_list=2000"],
    ["heat-kernel", "constant-d2", "--set", "heat-kernel.M=5000"],
])
def test_subcommands_run(args, out_root):
    assert cli.main(args) == 0
    manifest = json.loads((out_root / args[0] / "manifest.json").read_text())
    assert manifest["outputs"] and all(os.path.exists(p) for p in manifest["outputs"])


def test_console_entry_point(tmp_path):
    env = dict(os.environ, CONDWALK_OUT=str(tmp_path))
    res = subprocess.run([sys.executable, "-m", "condwalk", "sigma", "periodic-d1"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    doc = json.loads((tmp_path / "sigma" / "sigma.json").read_text())
    assert abs(doc["sigma"][0][0] - 8 / 9) <= 1e-10
