"""Rotary position embedding: frequency vector, cosine/sine tables for
real-valued position IDs, rotation application, and attention logits for
integer positions.

Logits produced here depend only on the relative distance between query
and key positions, never on absolute positions, and carry the 1/sqrt(d)
scale so every logit producer in the package is on one scale.
"""

import math
from dataclasses import dataclass

import numpy as np

from galikit import kernels


@dataclass(frozen=True)
class RopeParams:
    """Rotation frequencies for one head dimension.

    theta[j] = base**(-2j/d) for j = 0..d/2-1: strictly decreasing,
    starting at exactly 1.
    """

    head_dim: int
    base: float
    theta: np.ndarray


def rope_theta(head_dim: int, base: float = 10000.0) -> RopeParams:
    if head_dim < 2 or head_dim % 2 != 0:
        raise ValueError(f"head_dim must be even and >= 2, got {head_dim}")
    if not base > 0:
        raise ValueError(f"base must be positive, got {base}")
    exponents = np.arange(0, head_dim, 2, dtype=np.float64) / head_dim
    theta = base ** -exponents
    theta.flags.writeable = False
    return RopeParams(head_dim=head_dim, base=float(base), theta=theta)


@dataclass(frozen=True)
class RotaryTables:
    """Per-position cos/sin tables in the rotate-half lane layout: each
    of the d/2 frequencies fills two lanes (j and j + d/2)."""

    positions: np.ndarray
    cos: np.ndarray
    sin: np.ndarray


def rotary_tables(positions, params: RopeParams) -> RotaryTables:
    """Build cos/sin tables for arbitrary real-valued position IDs."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if positions.ndim != 1:
        raise ValueError(f"positions must be 1-D, got shape {positions.shape}")
    if not np.all(np.isfinite(positions)):
        raise ValueError("positions must be finite")
    angles = positions[:, np.newaxis] * params.theta[np.newaxis, :]
    half_cos = np.cos(angles)
    half_sin = np.sin(angles)
    cos = np.concatenate([half_cos, half_cos], axis=1)
    sin = np.concatenate([half_sin, half_sin], axis=1)
    return RotaryTables(positions=positions, cos=cos, sin=sin)


def apply_rotary(x, tables: RotaryTables) -> np.ndarray:
    """Rotate row m by the angle block for tables.positions[m]:
    x*cos + rotate_half(x)*sin. Row norms are preserved."""
    x = kernels.as_matrix(x, "x")
    if x.shape[0] != tables.cos.shape[0]:
        raise ValueError(
            f"x has {x.shape[0]} rows but tables cover {tables.cos.shape[0]} positions"
        )
    if x.shape[1] != tables.cos.shape[1]:
        raise ValueError(
            f"x has width {x.shape[1]} but tables are for head_dim {tables.cos.shape[1]}"
        )
    return kernels.rotate_rows(x, tables.cos, tables.sin)


def suffix_tables(tables: RotaryTables, n_rows: int) -> RotaryTables:
    """View of the trailing n_rows positions of a table."""
    start = tables.cos.shape[0] - n_rows
    return RotaryTables(
        positions=tables.positions[start:],
        cos=tables.cos[start:],
        sin=tables.sin[start:],
    )


def logits_with_tables(q, k, tables: RotaryTables) -> np.ndarray:
    """Scaled attention logits with both sides rotated by prebuilt
    tables covering the key rows; q rows take the trailing positions
    (decode convention)."""
    q = kernels.as_matrix(q, "q")
    k = kernels.as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"q width {q.shape[1]} != k width {k.shape[1]}")
    if tables.cos.shape[0] != k.shape[0]:
        raise ValueError(
            f"tables cover {tables.cos.shape[0]} positions for {k.shape[0]} key rows"
        )
    if q.shape[0] > k.shape[0]:
        raise ValueError(f"q has more rows ({q.shape[0]}) than keys ({k.shape[0]})")
    q_rot = apply_rotary(q, suffix_tables(tables, q.shape[0]))
    k_rot = apply_rotary(k, tables)
    return kernels.matmul_nt(q_rot, k_rot) / math.sqrt(q.shape[1])


def positional_logits(q, k, positions, params: RopeParams) -> np.ndarray:
    """Scaled attention logits with q and k rotated at the given
    (possibly fractional) position IDs.

    ``positions`` covers the key rows; q may have fewer rows, in which
    case its rows take the trailing positions (decode convention).
    """
    q = kernels.as_matrix(q, "q")
    k = kernels.as_matrix(k, "k")
    d = params.head_dim
    if q.shape[1] != d or k.shape[1] != d:
        raise ValueError(
            f"q width {q.shape[1]} / k width {k.shape[1]} must equal head_dim {d}"
        )
    return logits_with_tables(q, k, rotary_tables(positions, params))


def exact_logits(q, k, positions, params: RopeParams) -> np.ndarray:
    """positional_logits restricted to integer position IDs (the
    reference logit computation)."""
    positions = np.asarray(positions)
    if positions.dtype.kind not in "iu":
        as_float = np.asarray(positions, dtype=np.float64)
        if not np.all(as_float == np.floor(as_float)):
            raise ValueError("exact_logits requires integer-valued positions")
        positions = as_float
    return positional_logits(q, k, positions, params)
