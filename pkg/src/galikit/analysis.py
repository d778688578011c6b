"""Measurement tooling: attention-distribution comparison between
methods, long-distance logit decay curves, and perplexity evaluation.

The distribution comparison runs a method with a restricted training
window, extends it back to the reference length, and measures how far
its attention probabilities drift from an unrestricted exact run of the
same weights: the closer, the better the method preserves the model's
native attention behavior.
"""

import math
from dataclasses import dataclass

import numpy as np

from galikit import baselines, gali, kernels, model as model_mod, rope


@dataclass(frozen=True)
class AttentionRecordSet:
    """Post-softmax probability matrices for every (layer, head) of one
    run, with enough metadata to reproduce it."""

    probs: dict
    method: str
    seq_len: int
    seed: int
    noise_mode: str = "off"

    def __post_init__(self):
        for (layer, head), mat in self.probs.items():
            if mat.shape != (self.seq_len, self.seq_len):
                raise ValueError(
                    f"record for layer {layer} head {head} has shape "
                    f"{mat.shape}, expected ({self.seq_len}, {self.seq_len})"
                )

    def mean_matrix(self) -> np.ndarray:
        """Probability matrix averaged over all layers and heads."""
        acc = np.zeros((self.seq_len, self.seq_len))
        for mat in self.probs.values():
            acc += mat
        return acc / len(self.probs)


def _check_comparable(a: AttentionRecordSet, b: AttentionRecordSet):
    if a.seq_len != b.seq_len:
        raise ValueError(
            f"record sets cover different lengths: {a.seq_len} vs {b.seq_len}"
        )
    if set(a.probs) != set(b.probs):
        raise ValueError("record sets cover different (layer, head) pairs")


def attn_matrix_diff(a: AttentionRecordSet, b: AttentionRecordSet) -> float:
    """Sum of elementwise absolute differences between the layer/head
    averaged probability matrices of two runs."""
    _check_comparable(a, b)
    return float(np.abs(a.mean_matrix() - b.mean_matrix()).sum())


def row_entropy(matrix, trim_percentiles=None) -> np.ndarray:
    """Shannon entropy of each row (natural log, 0*ln(0) = 0).

    ``trim_percentiles``, when given as (low, high), drops entries
    outside those percentiles of each row before the entropy sum; the
    default applies no trimming.
    """
    mat = np.asarray(matrix, dtype=np.float64)
    ent = np.empty(mat.shape[0])
    for i, row in enumerate(mat):
        vals = row
        if trim_percentiles is not None:
            lo, hi = np.percentile(row, trim_percentiles)
            vals = row[(row >= lo) & (row <= hi)]
        pos = vals[vals > 0]
        ent[i] = float(-(pos * np.log(pos)).sum())
    return ent


def row_entropy_diff(a: AttentionRecordSet, b: AttentionRecordSet,
                     trim_percentiles=None) -> np.ndarray:
    """Per-row entropy difference (a minus b) between the layer/head
    averaged matrices of two runs."""
    _check_comparable(a, b)
    return (row_entropy(a.mean_matrix(), trim_percentiles)
            - row_entropy(b.mean_matrix(), trim_percentiles))


@dataclass(frozen=True)
class DecaySeries:
    """Attention logit as a function of relative distance."""

    distances: np.ndarray
    logits: np.ndarray


def decay_curve(q, k, params: rope.RopeParams, max_dist: int) -> DecaySeries:
    """logit(r) for r = 0..max_dist with the query at position r and the
    key at position 0 (a pure relative-distance sweep)."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    if q.ndim != 1 or k.ndim != 1:
        raise ValueError("q and k must be vectors")
    if q.shape[0] != params.head_dim or k.shape[0] != params.head_dim:
        raise ValueError(
            f"q/k length {q.shape[0]}/{k.shape[0]} must equal head_dim "
            f"{params.head_dim}"
        )
    if max_dist < 0:
        raise ValueError(f"max_dist must be >= 0, got {max_dist}")
    distances = np.arange(max_dist + 1, dtype=np.int64)
    q_rows = np.tile(q, (max_dist + 1, 1))
    tables = rope.rotary_tables(distances.astype(np.float64), params)
    q_rot = rope.apply_rotary(q_rows, tables)
    logits = kernels.matmul_nt(q_rot, k[np.newaxis, :])[:, 0] / math.sqrt(params.head_dim)
    return DecaySeries(distances=distances, logits=logits)


def _token_nll(logit_row, token: int) -> float:
    """Negative log-likelihood of one token under a logit row."""
    shifted = logit_row - logit_row.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[token])


def perplexity(model: model_mod.Model, tokens, mode: model_mod.RunMode,
               context: int) -> float:
    """exp of the mean negative log-likelihood of each token given its
    windowed prefix (at most ``context`` preceding tokens) under the
    selected attention mode.

    When the sequence fits in the window, one prefill scores every
    position; otherwise each token beyond the window is scored by a
    fresh forward pass over its own trailing window.
    """
    if context < 1:
        raise ValueError(f"context must be >= 1, got {context}")
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size < 2:
        raise ValueError(f"need at least 2 tokens, got {tokens.size}")
    nlls = []
    if tokens.size <= context:
        result = model_mod.forward_prefill(model, tokens, mode)
        for t in range(tokens.size - 1):
            nlls.append(_token_nll(result.logits[t], int(tokens[t + 1])))
    else:
        for t in range(1, tokens.size):
            window = tokens[max(0, t - context) : t]
            result = model_mod.forward_prefill(model, window, mode)
            nlls.append(_token_nll(result.logits[-1], int(tokens[t])))
    return float(np.exp(np.mean(nlls)))


def record_run(model: model_mod.Model, tokens, mode: model_mod.RunMode,
               seed: int) -> AttentionRecordSet:
    """Prefill with attention recording enabled, wrapped as a record set."""
    run_mode = model_mod.RunMode(
        attention=mode.attention, gali=mode.gali, baseline=mode.baseline,
        record_attention=True,
    )
    result = model_mod.forward_prefill(model, tokens, run_mode)
    noise = mode.gali.noise_mode if mode.gali is not None else "off"
    return AttentionRecordSet(
        probs=result.records, method=mode.attention, seq_len=len(tokens),
        seed=seed, noise_mode=noise,
    )


def comparison_modes(train_window: int, target_len: int, chunk_size: int,
                     local_window: int, seed: int,
                     gali_noise_modes=(gali.NOISE_OFF, gali.NOISE_SEQ_LEN)):
    """The method roster for a distribution comparison: each method
    restricted to ``train_window`` and extended back to ``target_len``.

    Returns (label, noise_label, RunMode) triples; the exact reference
    is run separately with its native full-length IDs.
    """
    modes = []
    for noise_mode in gali_noise_modes:
        cfg = gali.GaliConfig(
            train_window=train_window, chunk_size=chunk_size,
            local_window=local_window, noise_mode=noise_mode, seed=seed,
        )
        modes.append(("gali", noise_mode,
                      model_mod.RunMode(attention="gali", gali=cfg)))
    factor = max(1.0, target_len / train_window)
    for method in ("pi", "ntk", "dyn-ntk"):
        cfg = baselines.BaselineConfig(method=method, train_window=train_window,
                                       factor=factor)
        modes.append((method, "off",
                      model_mod.RunMode(attention=method, baseline=cfg)))
    return modes


def distribution_comparison(model: model_mod.Model, tokens, train_window: int,
                            *, chunk_size: int, local_window: int, seed: int,
                            gali_noise_modes=(gali.NOISE_OFF, gali.NOISE_SEQ_LEN),
                            trim_percentiles=None):
    """Compare every method's attention distribution against the exact
    full-length reference on one token stream.

    Returns a list of result dicts (method, noise_mode, matrix_diff,
    entropy_diff) ordered as produced, plus the reference record set.
    ``trim_percentiles`` is forwarded to the entropy computation; the
    matrix difference never trims.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    reference = record_run(
        model, tokens, model_mod.RunMode(attention="exact"), seed
    )
    results = []
    for label, noise_label, mode in comparison_modes(
        train_window, tokens.size, chunk_size, local_window, seed,
        gali_noise_modes,
    ):
        records = record_run(model, tokens, mode, seed)
        results.append({
            "method": label,
            "noise_mode": noise_label,
            "matrix_diff": attn_matrix_diff(records, reference),
            "entropy_diff": row_entropy_diff(records, reference,
                                             trim_percentiles),
        })
    return results, reference
