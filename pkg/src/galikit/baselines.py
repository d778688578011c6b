"""Training-free comparison methods: exact rotary reference, position
interpolation (linear ID rescaling), NTK (static base rescaling) and
Dyn-NTK (length-dependent base rescaling).

With factor 1 and a sequence inside the training window every method
collapses to the exact reference bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from galikit import rope

METHODS = ("exact", "pi", "ntk", "dyn-ntk")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    train_window: int
    factor: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.factor < 1.0:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if self.train_window < 1:
            raise ValueError(f"train_window must be >= 1, got {self.train_window}")


def pi_position_ids(seq_len: int, train_window: int) -> np.ndarray:
    """Linearly rescaled position IDs: ids[i] = i * train_window /
    max(seq_len, train_window), so every ID stays strictly below the
    training window."""
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    denom = max(seq_len, train_window)
    return np.arange(seq_len, dtype=np.float64) * train_window / denom


def ntk_theta(params: rope.RopeParams, factor: float) -> rope.RopeParams:
    """Rescale the frequency base: base' = base * factor**(d/(d-2))."""
    if factor < 1.0:
        raise ValueError(f"factor must be >= 1, got {factor}")
    d = params.head_dim
    if d == 2:
        raise ValueError("NTK base rescaling is singular at head_dim 2")
    new_base = params.base * factor ** (d / (d - 2))
    return rope.rope_theta(d, new_base)


def dyn_ntk_factor(seq_len: int, train_window: int) -> float:
    """Length-dependent rescaling factor max(1, seq_len/train_window)."""
    if seq_len < 1 or train_window < 1:
        raise ValueError(
            f"seq_len and train_window must be >= 1, got {seq_len}, {train_window}"
        )
    return max(1.0, seq_len / train_window)


def method_positions_and_params(seq_len, cfg: BaselineConfig, params: rope.RopeParams):
    """Resolve a baseline to the (position IDs, rotary params) pair its
    logits are computed with."""
    if cfg.method == "exact":
        return np.arange(seq_len, dtype=np.float64), params
    if cfg.method == "pi":
        return pi_position_ids(seq_len, cfg.train_window), params
    if cfg.method == "ntk":
        return np.arange(seq_len, dtype=np.float64), ntk_theta(params, cfg.factor)
    if cfg.method == "dyn-ntk":
        factor = dyn_ntk_factor(seq_len, cfg.train_window)
        return np.arange(seq_len, dtype=np.float64), ntk_theta(params, factor)
    raise ValueError(f"unknown baseline method {cfg.method!r}")


def baseline_logits(q, k, seq_len: int, cfg: BaselineConfig,
                    params: rope.RopeParams) -> np.ndarray:
    """Scaled attention logits under the selected baseline."""
    positions, eff_params = method_positions_and_params(seq_len, cfg, params)
    return rope.positional_logits(q, k, positions, eff_params)
