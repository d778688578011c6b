"""Pure NumPy fallback for the compiled kernel core.

Every function here mirrors a routine in ``_core.pyx`` and must keep the
same per-element operation order. Matrix products accumulate along the
inner dimension in index order (one rounding per multiply, one per add),
which is why the obvious ``a @ b`` is not used: BLAS reorders the
accumulation and would break bit-level agreement with the compiled core.

Sums that feed a final scalar (RMS statistics, softmax denominators) go
through ``cumsum``, whose running-total semantics pin the same sequential
order the compiled loops use.
"""

import numpy as np

# Additive surrogate for -inf on masked logits: large enough that exp()
# underflows to exactly 0.0 after row-max subtraction, small enough to
# survive the subtraction without producing NaN.
MASK_SENTINEL = -1e30


def matmul(a, b, out):
    out[:] = 0.0
    for k in range(a.shape[1]):
        out += a[:, k, np.newaxis] * b[k, :]


def matmul_nt(a, b, out):
    """out = a @ b.T with the same accumulation order as matmul."""
    out[:] = 0.0
    for k in range(a.shape[1]):
        out += a[:, k, np.newaxis] * b[:, k]


def causal_softmax(logits, offset, out):
    """Row-wise softmax over the causal region j <= i + offset.

    Masked entries are exactly 0 in the result.
    """
    rows, cols = logits.shape
    shifted = logits.copy()
    for i in range(rows):
        shifted[i, i + offset + 1 :] += MASK_SENTINEL
    shifted -= shifted.max(axis=1)[:, np.newaxis]
    np.exp(shifted, out=out)
    denom = np.cumsum(out, axis=1)[:, -1]
    out /= denom[:, np.newaxis]


def rms_norm_rows(x, gamma, eps, out):
    sq = np.cumsum(x * x, axis=1)[:, -1]
    scale = 1.0 / np.sqrt(sq / x.shape[1] + eps)
    np.multiply(x * scale[:, np.newaxis], gamma, out=out)


def apply_rotary(x, cos, sin, out):
    """Rotate rows: out = x * cos + rotate_half(x) * sin.

    rotate_half maps (x1..xh, xh+1..xd) to (-xh+1..-xd, x1..xh) where
    h = d/2.
    """
    half = x.shape[1] // 2
    np.multiply(x, cos, out=out)
    out[:, :half] -= x[:, half:] * sin[:, :half]
    out[:, half:] += x[:, :half] * sin[:, half:]


def swiglu(gate, up, out):
    """out = silu(gate) * up, elementwise."""
    np.multiply(gate / (1.0 + np.exp(-gate)), up, out=out)
