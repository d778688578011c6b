"""Dense numeric kernels: matrix product, causal masked softmax, RMS
normalization, rotary rotation, SwiGLU.

All arithmetic is double precision with a fixed accumulation order, so
results are bit-reproducible across runs on one platform. Matrices are
2-D C-contiguous float64 ``numpy.ndarray`` (row-major); vectors are 1-D
float64 arrays.

Two interchangeable backends provide the inner loops: a compiled Cython
core (``galikit._core``) and a pure NumPy fallback (``_pykernels``). The
compiled core is picked at import when present; set ``GALIKIT_BACKEND``
to ``python`` or ``compiled`` to force one. The backends agree bitwise
on every operation that avoids exp(); softmax and SwiGLU may differ in
the last ulp because libm and NumPy round exp() differently.

All functions are pure: inputs are never mutated, and calls are safe
from multiple threads.
"""

import os
from dataclasses import dataclass

import numpy as np

from galikit._pykernels import MASK_SENTINEL  # noqa: F401  (re-exported)


def _select_backend():
    forced = os.environ.get("GALIKIT_BACKEND", "").strip().lower()
    if forced in ("", "auto"):
        try:
            from galikit import _core

            return _core, "compiled"
        except ImportError:
            from galikit import _pykernels

            return _pykernels, "python"
    if forced == "compiled":
        from galikit import _core

        return _core, "compiled"
    if forced == "python":
        from galikit import _pykernels

        return _pykernels, "python"
    raise RuntimeError(
        f"GALIKIT_BACKEND={forced!r} not recognized (use 'compiled', 'python' or 'auto')"
    )


_impl, _BACKEND_NAME = _select_backend()


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return _BACKEND_NAME


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D C-contiguous float64 array, rejecting bad shapes."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def as_vector(x, name: str = "vector") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class CausalMask:
    """Causal attention mask over a sequence: entry (i, j) is permitted
    iff j <= i. When applied to a logits block with fewer rows than
    columns, the rows are taken to be the trailing queries of the
    sequence (the decode case)."""

    seq_len: int

    def __post_init__(self):
        if self.seq_len < 1:
            raise ValueError(f"mask seq_len must be >= 1, got {self.seq_len}")


def matmul(a, b) -> np.ndarray:
    """Standard matrix product with sequential inner-loop accumulation."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]}"
        )
    out = np.empty((a.shape[0], b.shape[1]))
    _impl.matmul(a, b, out)
    return out


def matmul_nt(a, b) -> np.ndarray:
    """a @ b.T without materializing the transpose; same per-cell
    accumulation order as ``matmul(a, b.T)``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"matmul_nt dimension mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]}"
        )
    out = np.empty((a.shape[0], b.shape[0]))
    _impl.matmul_nt(a, b, out)
    return out


def masked_softmax(logits, mask: CausalMask) -> np.ndarray:
    """Row-wise softmax over causally permitted entries.

    Each row sums to 1 over its permitted entries; masked entries are
    exactly 0. Stabilized by subtracting the row maximum over permitted
    entries; masked entries are pushed out with an additive -1e30
    sentinel rather than a true -inf (avoids NaN in the subtraction).
    """
    logits = as_matrix(logits, "logits")
    rows, cols = logits.shape
    if cols != mask.seq_len:
        raise ValueError(
            f"logits have {cols} columns but mask covers seq_len={mask.seq_len}"
        )
    if rows > cols:
        raise ValueError(
            f"logits rows ({rows}) exceed key length ({cols}): "
            "some rows would have zero permitted entries"
        )
    offset = cols - rows
    out = np.empty_like(logits)
    _impl.causal_softmax(logits, offset, out)
    return out


def rms_norm(x, gamma, eps: float = 0.0) -> np.ndarray:
    """y_i = gamma_i * x_i / sqrt(mean(x^2) + eps) for a single vector."""
    x = as_vector(x, "x")
    gamma = as_vector(gamma, "gamma")
    if x.shape[0] == 0:
        raise ValueError("rms_norm on a zero-length vector")
    if x.shape != gamma.shape:
        raise ValueError(f"x has length {x.shape[0]} but gamma has {gamma.shape[0]}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    out = np.empty((1, x.shape[0]))
    _impl.rms_norm_rows(x[np.newaxis, :], gamma, eps, out)
    return out[0]


def rms_norm_rows(x, gamma, eps: float = 0.0) -> np.ndarray:
    """rms_norm applied independently to each row of a matrix."""
    x = as_matrix(x, "x")
    gamma = as_vector(gamma, "gamma")
    if x.shape[1] == 0:
        raise ValueError("rms_norm on zero-length rows")
    if x.shape[1] != gamma.shape[0]:
        raise ValueError(f"rows have length {x.shape[1]} but gamma has {gamma.shape[0]}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    out = np.empty_like(x)
    _impl.rms_norm_rows(x, gamma, eps, out)
    return out


def rotate_rows(x, cos, sin) -> np.ndarray:
    """Per-row rotation x*cos + rotate_half(x)*sin (see rope module)."""
    x = as_matrix(x, "x")
    cos = as_matrix(cos, "cos")
    sin = as_matrix(sin, "sin")
    if x.shape[1] % 2 != 0:
        raise ValueError(f"rotation needs an even width, got {x.shape[1]}")
    if cos.shape != x.shape or sin.shape != x.shape:
        raise ValueError(
            f"table shape {cos.shape} does not match input shape {x.shape}"
        )
    out = np.empty_like(x)
    _impl.apply_rotary(x, cos, sin, out)
    return out


def swiglu(gate, up) -> np.ndarray:
    """silu(gate) * up, elementwise."""
    gate = as_matrix(gate, "gate")
    up = as_matrix(up, "up")
    if gate.shape != up.shape:
        raise ValueError(f"gate shape {gate.shape} != up shape {up.shape}")
    out = np.empty_like(gate)
    _impl.swiglu(gate, up, out)
    return out
