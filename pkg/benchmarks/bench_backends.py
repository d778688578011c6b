"""Benchmark the compiled kernel core against the pure NumPy fallback.

Times the individual kernels at a few sizes plus one end-to-end prefill,
and prints a table with the speedup. Run from the repo root:

    python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from galikit import _pykernels

try:
    from galikit import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    cases = []
    for n in (64, 128, 256):
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        out = np.empty((n, n))
        cases.append((f"matmul {n}x{n}", lambda i, a=a, b=b, o=out: i.matmul(a, b, o)))
    logits = rng.standard_normal((256, 256))
    sm = np.empty_like(logits)
    cases.append(("softmax 256x256",
                  lambda i, l=logits, o=sm: i.causal_softmax(l, 0, o)))
    x = rng.standard_normal((256, 64))
    gamma = np.ones(64)
    nrm = np.empty_like(x)
    cases.append(("rms_norm 256x64",
                  lambda i, x=x, g=gamma, o=nrm: i.rms_norm_rows(x, g, 1e-6, o)))
    cos = np.cos(rng.standard_normal((256, 64)))
    sin = np.sin(rng.standard_normal((256, 64)))
    rot = np.empty_like(x)
    cases.append(("rotary 256x64",
                  lambda i, x=x, c=cos, s=sin, o=rot: i.apply_rotary(x, c, s, o)))
    return cases


def bench_prefill(repeats):
    """End-to-end chunked prefill timing via the public engine (uses
    whatever backend is active for this process)."""
    from galikit import gali, kernels, model

    toy = model.build_toy_model(seed=0)
    cfg = gali.GaliConfig(train_window=64, chunk_size=16, local_window=8)
    mode = model.RunMode(attention="gali", gali=cfg)
    tokens = np.random.default_rng(0).integers(0, 256, 192)
    t = _time(lambda: model.forward_prefill(toy, tokens, mode), repeats)
    print(f"{'prefill 192 (gali, ' + kernels.backend_name() + ')':<34} {t * 1e3:9.2f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<34} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in kernel_cases(rng):
        t_py = _time(lambda: call(_pykernels), args.repeats)
        if _core is None:
            print(f"{name:<34} {t_py * 1e3:9.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        t_c = _time(lambda: call(_core), args.repeats)
        print(f"{name:<34} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.1f}x")
    print()
    bench_prefill(args.repeats)


if __name__ == "__main__":
    main()
