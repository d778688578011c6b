"""Toy decoder-only transformer (embedding, pre-norm blocks with
multi-head attention and SwiGLU, output head) with a KV cache and the
attention-method dispatch.

The cache stores keys unrotated. Interpolated modes reassign position
IDs to the whole prefix on every chunk and decode step, so any rotation
baked into the cache would be stale after one step; instead keys are
(re-)rotated inside each attention call. Hidden states of earlier
chunks are frozen once computed and never revisited.

Tokens are byte-level (vocab 256) plus one pad id; no external
tokenizer assets are needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from galikit import baselines, gali, kernels, rope
from galikit.weights import ModelSpec, init_weights

ATTENTION_MODES = ("exact", "gali", "pi", "ntk", "dyn-ntk")


@dataclass(frozen=True)
class RunMode:
    """Attention-method selection for one inference session."""

    attention: str = "exact"
    gali: gali.GaliConfig = None
    baseline: baselines.BaselineConfig = None
    record_attention: bool = False

    def __post_init__(self):
        if self.attention not in ATTENTION_MODES:
            raise ValueError(
                f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}"
            )
        if (self.attention == "gali") != (self.gali is not None):
            raise ValueError("a GaliConfig is required exactly when attention='gali'")
        needs_baseline = self.attention in ("pi", "ntk", "dyn-ntk")
        if needs_baseline != (self.baseline is not None):
            raise ValueError(
                "a BaselineConfig is required exactly when attention is a "
                "rescaling baseline"
            )


class Model:
    """Weight container plus derived rotary parameters."""

    def __init__(self, spec: ModelSpec, weights: dict):
        self.spec = spec
        self.weights = weights
        self.rope_params = rope.rope_theta(spec.head_dim, spec.rope_base)

    def layer(self, i: int) -> dict:
        prefix = f"layer{i}."
        return {
            name[len(prefix):]: w
            for name, w in self.weights.items()
            if name.startswith(prefix)
        }


def build_toy_model(spec: ModelSpec = None, seed: int = 0) -> Model:
    """Seeded random model; the asset-free default used by the CLI."""
    spec = spec or ModelSpec()
    return Model(spec, init_weights(spec, seed=seed))


class KvCache:
    """Per-layer cached values and unrotated keys."""

    def __init__(self, layers: int):
        self.layers = layers
        self._keys = [None] * layers
        self._values = [None] * layers
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def _extend(self, store, layer, rows):
        if store[layer] is None:
            store[layer] = rows.copy()
        else:
            store[layer] = np.concatenate([store[layer], rows])

    def append(self, layer: int, norm_rows, k_rows, v_rows) -> None:
        self._extend(self._keys, layer, k_rows)
        self._extend(self._values, layer, v_rows)
        if layer == self.layers - 1:
            self._count += k_rows.shape[0]

    def keys(self, layer: int) -> np.ndarray:
        return self._keys[layer]

    def values(self, layer: int) -> np.ndarray:
        return self._values[layer]


class RecomputeKvCache:
    """Cache-equivalence oracle: stores the normed block inputs instead
    of projections and recomputes every key/value from scratch on each
    read. Numerically interchangeable with KvCache because per-row
    projections do not depend on neighboring rows."""

    def __init__(self, model: Model):
        self.layers = model.spec.layers
        self._model = model
        self._norm_inputs = [None] * self.layers
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def append(self, layer: int, norm_rows, k_rows, v_rows) -> None:
        if self._norm_inputs[layer] is None:
            self._norm_inputs[layer] = norm_rows.copy()
        else:
            self._norm_inputs[layer] = np.concatenate(
                [self._norm_inputs[layer], norm_rows]
            )
        if layer == self.layers - 1:
            self._count += norm_rows.shape[0]

    def keys(self, layer: int) -> np.ndarray:
        return kernels.matmul(self._norm_inputs[layer], self._model.layer(layer)["wk"])

    def values(self, layer: int) -> np.ndarray:
        return kernels.matmul(self._norm_inputs[layer], self._model.layer(layer)["wv"])


class _SpanContext:
    """Per-span attention inputs precomputed once and shared across all
    layers and heads: position tables for the native/baseline paths, or
    the interpolation structures for the fractional path."""

    def __init__(self, model: Model, mode: RunMode, seq_len: int):
        self.seq_len = seq_len
        in_window = mode.attention == "gali" and seq_len <= mode.gali.train_window
        if mode.attention == "exact" or in_window:
            self.kind = "native"
            positions = np.arange(seq_len, dtype=np.float64)
            self.tables = rope.rotary_tables(positions, model.rope_params)
        elif mode.attention == "gali":
            self.kind = "gali"
        else:
            self.kind = "baseline"
            positions, eff = baselines.method_positions_and_params(
                seq_len, mode.baseline, model.rope_params
            )
            self.tables = rope.rotary_tables(positions, eff)

    def attach_gali(self, model: Model, cfg: gali.GaliConfig, new_tokens: int):
        """Build the interpolation structures for a fractional-ID span."""
        self.cfg = cfg
        self.ids = gali.interpolate_position_ids(
            self.seq_len - new_tokens, new_tokens, cfg
        )
        self.rel = gali.relative_structure(self.ids)
        self.noise = gali.noise_spec(self.seq_len, self.ids, cfg)
        params = model.rope_params
        self.tables_ceil = rope.rotary_tables(
            self.rel.ceil_ids.astype(np.float64), params
        )
        self.tables_floor = rope.rotary_tables(
            self.rel.floor_ids.astype(np.float64), params
        )

    def head_logits(self, model, qh, kh, layer, head, step):
        if self.kind == "gali":
            return gali.gali_logits(
                qh, kh, self.ids, model.rope_params, self.cfg, self.noise,
                layer=layer, head=head, step=step,
                rel=self.rel, tables_ceil=self.tables_ceil,
                tables_floor=self.tables_floor,
            )
        return rope.logits_with_tables(qh, kh, self.tables)


def _make_span_context(model, mode, seq_len, new_tokens):
    ctx = _SpanContext(model, mode, seq_len)
    if ctx.kind == "gali":
        ctx.attach_gali(model, mode.gali, new_tokens)
    return ctx


class _AttentionRecorder:
    """Collects per-(layer, head) probability rows during prefill and
    assembles square matrices padded with causal zeros."""

    def __init__(self):
        self._rows = {}

    def add(self, layer, head, start_row, probs):
        self._rows.setdefault((layer, head), []).append((start_row, probs))

    def finalize(self, seq_len):
        out = {}
        for key, blocks in self._rows.items():
            mat = np.zeros((seq_len, seq_len))
            for start_row, probs in blocks:
                mat[start_row : start_row + probs.shape[0], : probs.shape[1]] = probs
            out[key] = mat
        return out


def _process_span(model, cache, span_tokens, mode, step, recorder):
    """Run one contiguous block of new tokens through every layer,
    appending its keys/values to the cache; returns the block's final
    hidden states."""
    spec = model.spec
    seq_len = len(cache) + span_tokens.shape[0]
    new_tokens = span_tokens.shape[0]
    ctx = _make_span_context(model, mode, seq_len, new_tokens)
    mask = kernels.CausalMask(seq_len)
    d = spec.head_dim

    x = model.weights["embed"][span_tokens]
    for li in range(spec.layers):
        lw = model.layer(li)
        nx = kernels.rms_norm_rows(x, lw["attn_norm"], spec.norm_eps)
        q = kernels.matmul(nx, lw["wq"])
        k = kernels.matmul(nx, lw["wk"])
        v = kernels.matmul(nx, lw["wv"])
        cache.append(li, nx, k, v)
        keys = cache.keys(li)
        values = cache.values(li)

        attn = np.empty_like(q)
        for hi in range(spec.heads):
            sl = slice(hi * d, (hi + 1) * d)
            qh = np.ascontiguousarray(q[:, sl])
            kh = np.ascontiguousarray(keys[:, sl])
            vh = np.ascontiguousarray(values[:, sl])
            logits = ctx.head_logits(model, qh, kh, li, hi, step)
            probs = kernels.masked_softmax(logits, mask)
            if recorder is not None:
                recorder.add(li, hi, seq_len - new_tokens, probs)
            attn[:, sl] = kernels.matmul(probs, vh)
        x = x + kernels.matmul(attn, lw["wo"])

        nx2 = kernels.rms_norm_rows(x, lw["mlp_norm"], spec.norm_eps)
        mlp = kernels.swiglu(
            kernels.matmul(nx2, lw["w_gate"]), kernels.matmul(nx2, lw["w_up"])
        )
        x = x + kernels.matmul(mlp, lw["w_down"])
    return x


def _output_logits(model, hidden_rows):
    final = kernels.rms_norm_rows(hidden_rows, model.weights["final_norm"],
                                  model.spec.norm_eps)
    return kernels.matmul(final, model.weights["head"])


def _check_tokens(tokens, vocab):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ValueError(f"token stream must be 1-D, got shape {tokens.shape}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab):
        raise ValueError(
            f"token ids must be in [0, {vocab}), got range "
            f"[{tokens.min()}, {tokens.max()}]"
        )
    return tokens


@dataclass
class PrefillResult:
    logits: np.ndarray            # (n_tokens, vocab) next-token logits per position
    cache: object
    records: dict = None          # (layer, head) -> (N, N) probabilities


def forward_prefill(model: Model, tokens, mode: RunMode, cache=None) -> PrefillResult:
    """Process a prompt, returning per-position output logits and the
    populated cache.

    Interpolating mode splits any input beyond the training window into
    chunks: the first covers the window with native IDs, each later
    chunk reassigns fresh fractional IDs to the whole prefix before
    attending. Other modes run the input as a single span.
    """
    tokens = _check_tokens(tokens, model.spec.vocab)
    if tokens.size == 0:
        raise ValueError("empty input")
    if cache is None:
        cache = KvCache(model.spec.layers)
    elif len(cache) != 0:
        raise ValueError("prefill requires an empty cache; use decode_step "
                         "to extend a populated one")
    recorder = _AttentionRecorder() if mode.record_attention else None

    if mode.attention == "gali":
        plan = gali.plan_chunks(tokens.size, mode.gali)
        sizes = plan.sizes
    else:
        sizes = (tokens.size,)

    hidden_blocks = []
    start = 0
    for size in sizes:
        span = tokens[start : start + size]
        hidden_blocks.append(_process_span(model, cache, span, mode, 0, recorder))
        start += size
    hidden = np.concatenate(hidden_blocks)
    records = recorder.finalize(tokens.size) if recorder is not None else None
    return PrefillResult(logits=_output_logits(model, hidden), cache=cache,
                         records=records)


def decode_step(model: Model, cache, token: int, mode: RunMode, step: int):
    """Process one generated token as a chunk of size 1, returning its
    next-token logits and the updated cache.

    In interpolating mode the whole sequence gets fresh position IDs, so
    the new token's query always sits at the last trained position; the
    step counter keys the noise draw."""
    if len(cache) == 0:
        raise ValueError("decode_step requires a non-empty cache")
    if not 0 <= int(token) < model.spec.vocab:
        raise ValueError(f"token id {token} outside vocab [0, {model.spec.vocab})")
    span = np.asarray([int(token)], dtype=np.int64)
    hidden = _process_span(model, cache, span, mode, step, None)
    return _output_logits(model, hidden)[0], cache


def generate(model: Model, prompt, n: int, mode: RunMode) -> np.ndarray:
    """Greedy continuation of the prompt by n tokens (argmax with
    lowest-index tie-break)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    result = forward_prefill(model, prompt, mode)
    out = []
    logits = result.logits[-1]
    for step in range(1, n + 1):
        token = int(np.argmax(logits))
        out.append(token)
        if step == n:
            break
        logits, _ = decode_step(model, result.cache, token, mode, step)
    return np.asarray(out, dtype=np.int64)
