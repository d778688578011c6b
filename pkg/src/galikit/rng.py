"""Counter-based deterministic Gaussian noise.

Every draw is a pure function of its key tuple (seed, layer, head,
decode step, query index, key index), so results do not depend on how
many values were drawn before, on matrix shapes, or on any evaluation
schedule. The generator hashes the key with chained splitmix64 rounds
and converts two derived 64-bit words to a standard normal via
Box-Muller.

All arithmetic is modular uint64; NumPy wraps silently for array
operands, which is exactly what the mixer needs.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_WORD1 = np.uint64(0xA0761D6478BD642F)
_WORD2 = np.uint64(0xE7037ED1A0B428DB)

_INV_2_53 = 1.0 / float(1 << 53)
_TWO_PI = 2.0 * np.pi


def _mix(z):
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _to_u64(value):
    if isinstance(value, np.ndarray):
        return value.astype(np.int64).view(np.uint64) if value.dtype != np.uint64 else value
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def _derive(*components):
    """Fold key components (ints or broadcastable int arrays) into one
    uint64 hash per broadcast cell."""
    h = _GOLDEN
    with np.errstate(over="ignore"):
        for c in components:
            h = _mix((h + _GOLDEN) ^ _to_u64(c))
    return h


def standard_normal(*key):
    """Standard normal draw(s) keyed by the given components.

    Scalar components give a scalar; array components broadcast to an
    array of independent draws, one per broadcast cell.
    """
    with np.errstate(over="ignore"):
        h = _derive(*key)
        w1 = _mix(h ^ _WORD1)
        w2 = _mix(h ^ _WORD2)
    # u1 in (0, 1] so the log is finite; u2 in [0, 1).
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def noise_field(seed, layer, head, step, rows, cols):
    """Matrix of standard normals for cells (i, j) with i from ``rows``
    and j from ``cols`` (1-D integer arrays), keyed per cell."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    return standard_normal(seed, layer, head, step, rows[:, np.newaxis], cols[np.newaxis, :])
