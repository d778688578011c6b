# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: dense double-precision loops with a fixed
accumulation order.

Each routine is the bit-exact twin of the matching function in
``_pykernels.py`` (compiled with fp-contraction disabled, so no fused
multiply-add sneaks in). The only tolerated divergence between the two
backends is the last ulp of exp(), which libm and NumPy round
differently on some inputs.
"""

from libc.math cimport exp, sqrt

cdef double MASK_SENTINEL = -1e30


def matmul(const double[:, ::1] a, const double[:, ::1] b, double[:, ::1] out):
    # i-k-j loop order for contiguous access; per-cell accumulation is
    # still sequential in k, so results match the naive i-j-k loop bit
    # for bit.
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    cdef double aik
    for i in range(m):
        for j in range(n):
            out[i, j] = 0.0
        for k in range(kk):
            aik = a[i, k]
            for j in range(n):
                out[i, j] = out[i, j] + aik * b[k, j]


def matmul_nt(const double[:, ::1] a, const double[:, ::1] b, double[:, ::1] out):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[0]
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(kk):
                acc = acc + a[i, k] * b[j, k]
            out[i, j] = acc


def causal_softmax(const double[:, ::1] logits, Py_ssize_t offset, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = logits.shape[0], cols = logits.shape[1]
    cdef Py_ssize_t last
    cdef double rowmax, v, denom
    for i in range(rows):
        last = i + offset            # last permitted column
        if last >= cols:
            last = cols - 1
        rowmax = logits[i, 0]
        for j in range(1, last + 1):
            if logits[i, j] > rowmax:
                rowmax = logits[i, j]
        # Masked columns get the additive sentinel; after the shared
        # row-max subtraction their exp underflows to exactly 0.
        denom = 0.0
        for j in range(cols):
            if j <= last:
                v = logits[i, j] - rowmax
            else:
                v = logits[i, j] + MASK_SENTINEL - rowmax
            v = exp(v)
            out[i, j] = v
            denom = denom + v
        for j in range(cols):
            out[i, j] = out[i, j] / denom


def rms_norm_rows(const double[:, ::1] x, const double[::1] gamma, double eps,
                  double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = x.shape[0], d = x.shape[1]
    cdef double sq, scale
    for i in range(rows):
        sq = 0.0
        for j in range(d):
            sq = sq + x[i, j] * x[i, j]
        scale = 1.0 / sqrt(sq / d + eps)
        for j in range(d):
            out[i, j] = x[i, j] * scale * gamma[j]


def apply_rotary(const double[:, ::1] x, const double[:, ::1] cos,
                 const double[:, ::1] sin, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t half = d // 2
    for i in range(rows):
        for j in range(half):
            out[i, j] = x[i, j] * cos[i, j] - x[i, j + half] * sin[i, j]
        for j in range(half, d):
            out[i, j] = x[i, j] * cos[i, j] + x[i, j - half] * sin[i, j]


def swiglu(const double[:, ::1] gate, const double[:, ::1] up, double[:, ::1] out):
    cdef Py_ssize_t i, j
    for i in range(gate.shape[0]):
        for j in range(gate.shape[1]):
            out[i, j] = gate[i, j] / (1.0 + exp(-gate[i, j])) * up[i, j]
