"""Chunk-wise fractional position-ID interpolation and direct
attention-logit interpolation.

The method extends a model's usable context without training: input
beyond the training window is processed chunk by chunk, each chunk
receiving freshly interpolated position IDs for the whole prefix, and
attention logits at fractional relative distances are obtained by
linearly interpolating between the logits at the neighboring integer
distances (optionally perturbed by distance-scaled Gaussian noise)
instead of evaluating rotary embeddings at untrained angles.

Position IDs are exact rationals, stored as integer numerators over the
group size, so floor/ceil and the "is this ID an integer" test are never
subject to floating-point fuzz.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from galikit import kernels, rng, rope

NOISE_SEQ_LEN = "seq-len"          # std(i, j) = (i - j) / seq_len on token indices
NOISE_TRAIN_WINDOW = "train-window"  # std(i, j) = (id_i - id_j) / train_window
NOISE_OFF = "off"
NOISE_MODES = (NOISE_SEQ_LEN, NOISE_TRAIN_WINDOW, NOISE_OFF)


@dataclass(frozen=True)
class GaliConfig:
    """Interpolation settings: training window, prefill chunk size,
    local window kept at native spacing, noise law, RNG seed."""

    train_window: int = 64
    chunk_size: int = 16
    local_window: int = 8
    noise_mode: str = NOISE_SEQ_LEN
    seed: int = 0

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 < self.local_window < self.train_window:
            raise ValueError(
                f"need 0 < local_window < train_window, got "
                f"local_window={self.local_window}, train_window={self.train_window}"
            )
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(
                f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}"
            )


@dataclass(frozen=True)
class ChunkPlan:
    """Chunk lengths partitioning a prefill input: first chunk covers
    the training window, later chunks have the configured size, the last
    one truncated so the sum matches the input length."""

    sizes: tuple

    @property
    def total(self) -> int:
        return sum(self.sizes)


def plan_chunks(prefill_len: int, cfg: GaliConfig) -> ChunkPlan:
    if prefill_len < 1:
        raise ValueError(f"prefill_len must be >= 1, got {prefill_len}")
    sizes = [cfg.train_window]
    covered = cfg.train_window
    while covered < prefill_len:
        sizes.append(cfg.chunk_size)
        covered += cfg.chunk_size
    sizes[-1] -= covered - prefill_len
    return ChunkPlan(sizes=tuple(sizes))


def group_size(target_len: int, cfg: GaliConfig) -> int:
    """Minimal number of fractional IDs per integer interval needed to
    fit target_len IDs while keeping a native-spaced local window."""
    if target_len < cfg.train_window:
        raise ValueError(
            f"target_len {target_len} is below the training window "
            f"{cfg.train_window}; interpolation is undefined there"
        )
    span = cfg.train_window - cfg.local_window
    return -((-(target_len - cfg.local_window)) // span)


@dataclass(frozen=True)
class PositionIds:
    """Exact rational position IDs: ids[t] = numerators[t] / group_size.

    Strictly increasing from 0 to train_window - 1 with gaps <= 1; the
    trailing run of integer-valued IDs covers at least the local window.
    """

    numerators: np.ndarray
    group_size: int
    train_window: int

    def __len__(self) -> int:
        return int(self.numerators.shape[0])

    def __getitem__(self, index: int) -> Fraction:
        return Fraction(int(self.numerators[index]), self.group_size)

    @property
    def ids(self) -> tuple:
        g = self.group_size
        return tuple(Fraction(int(n), g) for n in self.numerators)

    def floor_ids(self) -> np.ndarray:
        return self.numerators // self.group_size

    def ceil_ids(self) -> np.ndarray:
        g = self.group_size
        return (self.numerators + g - 1) // g

    def integer_tail_len(self) -> int:
        """Length of the trailing run of integer-valued IDs."""
        frac = self.numerators % self.group_size != 0
        nz = np.nonzero(frac)[0]
        return len(self) if nz.size == 0 else len(self) - int(nz[-1]) - 1

    def validate(self) -> None:
        nums = self.numerators
        g = self.group_size
        if nums.shape[0] == 0:
            raise ValueError("empty position IDs")
        if nums[0] != 0:
            raise ValueError(f"first ID must be 0, got {Fraction(int(nums[0]), g)}")
        if nums[-1] != (self.train_window - 1) * g:
            raise ValueError(
                f"last ID must be train_window-1={self.train_window - 1}, "
                f"got {Fraction(int(nums[-1]), g)}"
            )
        gaps = np.diff(nums)
        if np.any(gaps <= 0):
            raise ValueError("IDs must be strictly increasing")
        if np.any(gaps > g):
            raise ValueError("consecutive ID gaps must be <= 1")


def interpolate_position_ids(cur_len: int, add_token: int, cfg: GaliConfig) -> PositionIds:
    """Fractional position IDs for a sequence grown to cur_len +
    add_token tokens.

    Integer intervals below the local window are each filled with a
    group of evenly spaced fractional IDs [i, i + 1/g, ..., i + (g-1)/g]
    until enough IDs exist; the surplus is truncated and the remaining
    integer IDs up to train_window - 1 form the tail.
    """
    if add_token < 1:
        raise ValueError(f"add_token must be >= 1, got {add_token}")
    target = cur_len + add_token
    if target < cfg.train_window:
        raise ValueError(
            f"total length {target} is below the training window "
            f"{cfg.train_window}; native IDs apply there"
        )
    g = group_size(target, cfg)
    groups = []
    total_len = cfg.train_window
    i = 0
    while total_len < target:
        groups.append(i * g + np.arange(g, dtype=np.int64))
        i += 1
        total_len = cfg.train_window - i + g * i
    keep = target - (cfg.train_window - i)
    if groups:
        head = np.concatenate(groups)[:keep]
    else:
        head = np.empty(0, dtype=np.int64)
    tail = np.arange(i, cfg.train_window, dtype=np.int64) * g
    numerators = np.concatenate([head, tail])
    numerators.flags.writeable = False
    return PositionIds(numerators=numerators, group_size=g, train_window=cfg.train_window)


@dataclass(frozen=True)
class RelativeDistance:
    """Ceil/floor views of the position IDs plus the interpolation
    coefficient of each key column.

    The coefficient of cell (m, n) is (ceil(id_m) - id_n) mod 1. Because
    ceil(id_m) is an integer the value only depends on the key, so it is
    stored once per column (numerator over group_size).
    """

    ceil_ids: np.ndarray
    floor_ids: np.ndarray
    key_coef_numerators: np.ndarray
    group_size: int

    def coef_entry(self, m: int, n: int) -> Fraction:
        if not 0 <= m < self.ceil_ids.shape[0]:
            raise IndexError(f"query index {m} out of range")
        return Fraction(int(self.key_coef_numerators[n]), self.group_size)

    def coef_columns(self) -> np.ndarray:
        """Per-key coefficients as float64 (exact: numerator/group_size)."""
        return self.key_coef_numerators / float(self.group_size)

    def fractional_keys(self) -> np.ndarray:
        """Boolean per key: True where the key ID is non-integer (and so
        the coefficient is nonzero)."""
        return self.key_coef_numerators != 0


def relative_structure(ids: PositionIds) -> RelativeDistance:
    nums = ids.numerators
    g = ids.group_size
    return RelativeDistance(
        ceil_ids=(nums + g - 1) // g,
        floor_ids=nums // g,
        key_coef_numerators=(-nums) % g,
        group_size=g,
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations and placement mask for the interpolation
    noise over an N x N (query, key) grid of token indices.

    Noise lands only where the mask is true: causally permitted cells
    whose interpolation coefficient is nonzero.
    """

    mode: str
    std_matrix: np.ndarray
    mask: np.ndarray


def noise_spec(seq_len: int, ids: PositionIds, cfg: GaliConfig) -> NoiseSpec:
    if seq_len != len(ids):
        raise ValueError(f"seq_len {seq_len} does not match {len(ids)} position IDs")
    rel = relative_structure(ids)
    tril = np.tril(np.ones((seq_len, seq_len), dtype=bool))
    if cfg.noise_mode == NOISE_SEQ_LEN:
        idx = np.arange(seq_len, dtype=np.int64)
        dist = idx[:, np.newaxis] - idx[np.newaxis, :]
        std = np.where(tril, dist / seq_len, 0.0)
    elif cfg.noise_mode == NOISE_TRAIN_WINDOW:
        nums = ids.numerators
        diff = nums[:, np.newaxis] - nums[np.newaxis, :]
        std = np.where(tril, diff / float(ids.group_size * cfg.train_window), 0.0)
    elif cfg.noise_mode == NOISE_OFF:
        std = np.zeros((seq_len, seq_len))
    else:  # pragma: no cover - GaliConfig already validates
        raise ValueError(f"unknown noise mode {cfg.noise_mode!r}")
    mask = tril & rel.fractional_keys()[np.newaxis, :]
    return NoiseSpec(mode=cfg.noise_mode, std_matrix=std, mask=mask)


def interpolate_logits(attn_floor, attn_ceil, coef):
    """Linear interpolation attn_floor - (attn_floor - attn_ceil)*coef.

    Where coef is exactly 0 the result is attn_floor bit for bit.
    """
    return attn_floor - (attn_floor - attn_ceil) * coef


def gali_logits(
    q,
    k_unrotated,
    ids: PositionIds,
    params: rope.RopeParams,
    cfg: GaliConfig,
    noise: NoiseSpec,
    *,
    layer: int = 0,
    head: int = 0,
    step: int = 0,
    rel: RelativeDistance = None,
    tables_ceil: rope.RotaryTables = None,
    tables_floor: rope.RotaryTables = None,
) -> np.ndarray:
    """Two-pass interpolated attention logits.

    Queries (the trailing rows of the ID assignment) are rotated at
    ceil(ids); the unrotated keys are rotated twice, at ceil(ids) and at
    floor(ids), giving the logits at the floor and ceil of each relative
    distance; cells with fractional distances blend the two and receive
    keyed Gaussian noise. Cells at integer distances reproduce the
    reference logits exactly.

    ``rel`` and the two tables may be passed in when the caller already
    computed them for this ID assignment (they are shared across layers
    and heads).
    """
    q = kernels.as_matrix(q, "q")
    k = kernels.as_matrix(k_unrotated, "k_unrotated")
    d = params.head_dim
    n_keys = len(ids)
    n_q = q.shape[0]
    if q.shape[1] != d or k.shape[1] != d:
        raise ValueError(
            f"q width {q.shape[1]} / k width {k.shape[1]} must equal head_dim {d}"
        )
    if k.shape[0] != n_keys:
        raise ValueError(f"{k.shape[0]} key rows for {n_keys} position IDs")
    if not 1 <= n_q <= n_keys:
        raise ValueError(
            f"query span of {n_q} rows does not fit the {n_keys}-ID suffix"
        )
    if noise.std_matrix.shape != (n_keys, n_keys):
        raise ValueError(
            f"noise grid {noise.std_matrix.shape} does not cover seq_len {n_keys}"
        )

    if rel is None:
        rel = relative_structure(ids)
    if tables_ceil is None:
        tables_ceil = rope.rotary_tables(rel.ceil_ids.astype(np.float64), params)
    if tables_floor is None:
        tables_floor = rope.rotary_tables(rel.floor_ids.astype(np.float64), params)

    q_ceil = rope.apply_rotary(q, rope.suffix_tables(tables_ceil, n_q))
    k_ceil = rope.apply_rotary(k, tables_ceil)
    k_floor = rope.apply_rotary(k, tables_floor)

    sqrt_d = math.sqrt(d)
    attn_floor = kernels.matmul_nt(q_ceil, k_ceil) / sqrt_d
    attn_ceil = kernels.matmul_nt(q_ceil, k_floor) / sqrt_d
    out = interpolate_logits(attn_floor, attn_ceil, rel.coef_columns()[np.newaxis, :])

    if noise.mode != NOISE_OFF:
        row_idx = np.arange(n_keys - n_q, n_keys, dtype=np.int64)
        sub_mask = noise.mask[n_keys - n_q :, :]
        if sub_mask.any():
            z = rng.noise_field(cfg.seed, layer, head, step, row_idx,
                                np.arange(n_keys, dtype=np.int64))
            out = out + z * noise.std_matrix[n_keys - n_q :, :] * sub_mask
    return out
