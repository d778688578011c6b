"""Built-in invariant suite behind the ``selftest`` subcommand.

Each check is small and self-contained; the suite is meant as a quick
post-install health check, not a replacement for the full test suite.
"""

import numpy as np

from galikit import analysis, baselines, gali, kernels, model as model_mod, rope, weights


def _triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def _checks(seed: int):
    gen = np.random.default_rng(seed)

    def check_matmul_identity():
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        return np.array_equal(kernels.matmul(np.eye(2), m), m)

    def check_matmul_oracle():
        a = gen.standard_normal((8, 8))
        b = gen.standard_normal((8, 8))
        return np.array_equal(kernels.matmul(a, b), _triple_loop(a, b))

    def check_softmax_uniform():
        probs = kernels.masked_softmax(np.zeros((2, 2)), kernels.CausalMask(2))
        return np.array_equal(probs, np.array([[1.0, 0.0], [0.5, 0.5]]))

    def check_rms_constant():
        out = kernels.rms_norm(np.full(5, 3.0), np.ones(5), 0.0)
        return np.allclose(out, 1.0, atol=1e-12)

    def check_rotary_identity():
        params = rope.rope_theta(8)
        x = gen.standard_normal((1, 8))
        tables = rope.rotary_tables(np.zeros(1), params)
        return np.array_equal(rope.apply_rotary(x, tables), x)

    def check_rotary_isometry():
        params = rope.rope_theta(16)
        x = gen.standard_normal((6, 16))
        tables = rope.rotary_tables(np.arange(6.0) * 3.7, params)
        rot = rope.apply_rotary(x, tables)
        return np.allclose(np.linalg.norm(rot, axis=1),
                           np.linalg.norm(x, axis=1), atol=1e-12)

    def check_shift_invariance():
        params = rope.rope_theta(8)
        q = gen.standard_normal((5, 8))
        k = gen.standard_normal((5, 8))
        base = rope.exact_logits(q, k, np.arange(5), params)
        shifted = rope.exact_logits(q, k, np.arange(5) + 17, params)
        return np.allclose(base, shifted, atol=1e-9)

    def check_chunk_plan():
        cfg = gali.GaliConfig(train_window=4, chunk_size=2, local_window=2)
        return (gali.plan_chunks(6, cfg).sizes == (4, 2)
                and gali.plan_chunks(4, cfg).sizes == (4,)
                and gali.plan_chunks(5, cfg).sizes == (4, 1))

    def check_id_trace():
        from fractions import Fraction as F

        cfg = gali.GaliConfig(train_window=4, chunk_size=2, local_window=2)
        a = gali.interpolate_position_ids(4, 2, cfg).ids
        b = gali.interpolate_position_ids(6, 1, cfg).ids
        return (a == (F(0), F(1, 2), F(1), F(3, 2), F(2), F(3))
                and b == (F(0), F(1, 3), F(2, 3), F(1), F(4, 3), F(2), F(3)))

    def check_window_consistency():
        spec = weights.ModelSpec(layers=2, heads=2, head_dim=8, mlp_hidden=32)
        toy = model_mod.Model(spec, weights.init_weights(spec, seed=seed))
        tokens = gen.integers(0, 256, size=12)
        cfg = gali.GaliConfig(train_window=16, chunk_size=4, local_window=4)
        exact = model_mod.forward_prefill(toy, tokens, model_mod.RunMode())
        interp = model_mod.forward_prefill(
            toy, tokens, model_mod.RunMode(attention="gali", gali=cfg))
        return np.array_equal(exact.logits, interp.logits)

    def check_prob_rows():
        spec = weights.ModelSpec(layers=2, heads=2, head_dim=8, mlp_hidden=32)
        toy = model_mod.Model(spec, weights.init_weights(spec, seed=seed))
        tokens = gen.integers(0, 256, size=24)
        cfg = gali.GaliConfig(train_window=16, chunk_size=4, local_window=4)
        mode = model_mod.RunMode(attention="gali", gali=cfg, record_attention=True)
        result = model_mod.forward_prefill(toy, tokens, mode)
        return all(np.allclose(mat.sum(axis=1), 1.0, atol=1e-9)
                   for mat in result.records.values())

    def check_noise_std():
        cfg = gali.GaliConfig(train_window=8, chunk_size=2, local_window=2, seed=seed)
        ids = gali.interpolate_position_ids(8, 4, cfg)
        spec = gali.noise_spec(12, ids, cfg)
        from galikit import rng

        i, j = 10, 3
        if not spec.mask[i, j]:
            return False
        draws = rng.standard_normal(np.arange(20000), 0, 0, 0, i, j)
        emp = float(np.std(draws))
        return abs(emp - 1.0) < 0.05

    def check_baseline_collapse():
        params = rope.rope_theta(8)
        q = gen.standard_normal((4, 8))
        k = gen.standard_normal((4, 8))
        ref = rope.exact_logits(q, k, np.arange(4), params)
        for method in baselines.METHODS:
            cfg = baselines.BaselineConfig(method=method, train_window=8, factor=1.0)
            if not np.array_equal(baselines.baseline_logits(q, k, 4, cfg, params), ref):
                return False
        return True

    def check_decay_peak():
        params = rope.rope_theta(64)
        series = analysis.decay_curve(np.ones(64), np.ones(64), params, 200)
        return int(np.argmax(np.abs(series.logits))) == 0

    return [
        ("matmul identity", check_matmul_identity),
        ("matmul triple-loop oracle", check_matmul_oracle),
        ("softmax uniform row", check_softmax_uniform),
        ("rms constant vector", check_rms_constant),
        ("rotary position-0 identity", check_rotary_identity),
        ("rotary isometry", check_rotary_isometry),
        ("logit shift invariance", check_shift_invariance),
        ("chunk plan traces", check_chunk_plan),
        ("position-id traces", check_id_trace),
        ("window consistency", check_window_consistency),
        ("probability rows sum to 1", check_prob_rows),
        ("noise std calibration", check_noise_std),
        ("baseline collapse at factor 1", check_baseline_collapse),
        ("decay peak at distance 0", check_decay_peak),
    ]


def run_selftest(seed: int = 0, printer=print) -> bool:
    """Run every check, print one line each, return overall success."""
    all_ok = True
    for name, check in _checks(seed):
        try:
            ok = bool(check())
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            printer(f"FAIL {name}: {type(exc).__name__}: {exc}")
            all_ok = False
            continue
        printer(f"{'ok  ' if ok else 'FAIL'} {name}")
        all_ok = all_ok and ok
    return all_ok
