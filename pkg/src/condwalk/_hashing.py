"""Counter-based hashing used for every source of randomness in the package.

All random numbers are pure functions of a 64-bit key and a small number of
integer counters, so values can be recomputed anywhere (different processes,
different chunkings of a batch) without replaying a generator.
"""
import numpy as np
from numba import njit, vectorize

_U64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


def as_seed(seed):
    """Map any Python integer onto the unsigned 64-bit key space."""
    return np.uint64(int(seed) & _U64)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def combine(h, v):
    return mix64(h ^ (v * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))


@njit(cache=True, inline="always")
def to_unit(h):
    """Top 53 bits of ``h`` as a float in [0, 1)."""
    return float(h >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def stream_uniform(seed, counter, stream):
    """Uniform in [0, 1) keyed by (seed, counter, stream)."""
    h = mix64(seed ^ _GOLDEN)
    h = combine(h, counter)
    h = combine(h, stream)
    return to_unit(h)


@njit(cache=True)
def _edge_uniforms(seed, coords, axes):
    n, d = coords.shape
    out = np.empty(n)
    base = mix64(seed ^ np.uint64(0xD1B54A32D192ED03))
    for k in range(n):
        h = base
        for i in range(d):
            h = combine(h, np.uint64(coords[k, i]))
        h = combine(h, np.uint64(axes[k]))
        out[k] = to_unit(h)
    return out


def edge_uniforms(seed, coords, axes):
    """Uniforms keyed by (seed, canonical edge) for arrays of edges.

    Parameters
    ----------
    seed : int
        64-bit key.
    coords : (n, d) int64 array
        Base sites of the edges.
    axes : (n,) int array
        Edge axes, 0-based.
    """
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    axes = np.ascontiguousarray(axes, dtype=np.int64)
    return _edge_uniforms(as_seed(seed), coords, axes)


@vectorize(["float64(uint64, int64, int64)"], cache=True)
def uniform_array(seed, counter, stream):
    return stream_uniform(seed, np.uint64(counter), np.uint64(stream))
