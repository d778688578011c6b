"""Command-line entry point.

Subcommands: selftest, generate, ppl, analyze-attn, decay, sweep. Every
file-producing command writes ``<out>.csv`` and ``<out>.json``; both
embed the resolved configuration (including the seed and an argv echo),
and re-running the echoed arguments reproduces the files byte for byte
on the same backend.

Noise-law flag values map to the internal modes as: alg3 = noise std
scaled by token distance over sequence length, eq3 = noise std scaled
by interpolated distance over the training window, off = disabled.
"""

import argparse
import json
import sys

import numpy as np

from galikit import __version__, analysis, baselines, gali, kernels
from galikit import model as model_mod
from galikit import rope, selftest, weights

NOISE_CLI_TO_MODE = {
    "alg3": gali.NOISE_SEQ_LEN,
    "eq3": gali.NOISE_TRAIN_WINDOW,
    "off": gali.NOISE_OFF,
}
NOISE_MODE_TO_CLI = {v: k for k, v in NOISE_CLI_TO_MODE.items()}


class CliError(Exception):
    """Command-line usage error (bad flag, bad value)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def read_token_file(path) -> np.ndarray:
    """Read a newline-delimited unsigned-integer token stream."""
    tokens = []
    with open(path, "r", encoding="ascii") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if not line.isdigit():
                raise ValueError(f"{path}:{ln}: not an unsigned integer: {line!r}")
            tokens.append(int(line))
    return np.asarray(tokens, dtype=np.int64)


def write_token_file(path, tokens) -> None:
    with open(path, "w", encoding="ascii") as f:
        for t in tokens:
            f.write(f"{int(t)}\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _write_outputs(out_base, command, config, argv_echo, header, rows, results):
    meta = {
        "schema_version": 1,
        "command": command,
        "config": config,
        "argv_echo": argv_echo,
    }
    csv_lines = ["# " + json.dumps(meta, sort_keys=True)]
    csv_lines.append(",".join(header))
    for row in rows:
        csv_lines.append(",".join(_fmt(v) for v in row))
    with open(out_base + ".csv", "w", encoding="ascii") as f:
        f.write("\n".join(csv_lines) + "\n")
    payload = dict(meta, results=results)
    with open(out_base + ".json", "w", encoding="ascii") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _add_model_flags(sub):
    sub.add_argument("--model", default=None,
                     help="weight file; omitted = seeded random toy model")
    sub.add_argument("--layers", type=int, default=4)
    sub.add_argument("--heads", type=int, default=4)
    sub.add_argument("--head-dim", type=int, default=16)
    sub.add_argument("--mlp-hidden", type=int, default=None,
                     help="default: 2 * heads * head_dim")


def _add_mode_flags(sub):
    sub.add_argument("--mode", default="exact",
                     choices=model_mod.ATTENTION_MODES)
    sub.add_argument("--train-window", type=int, default=64)
    sub.add_argument("--chunk-size", type=int, default=16)
    sub.add_argument("--local-window", type=int, default=8)
    sub.add_argument("--noise-mode", default="alg3",
                     choices=sorted(NOISE_CLI_TO_MODE))
    sub.add_argument("--factor", type=float, default=None,
                     help="rescaling factor for ntk; default max(1, len/train_window)")
    sub.add_argument("--record-attention", action="store_true")


def _resolve_model(args, seed):
    if args.model is not None:
        spec, w = weights.load_weights(args.model)
        return model_mod.Model(spec, w), {"model": args.model}
    mlp_hidden = args.mlp_hidden
    if mlp_hidden is None:
        mlp_hidden = 2 * args.heads * args.head_dim
    spec = weights.ModelSpec(layers=args.layers, heads=args.heads,
                             head_dim=args.head_dim, mlp_hidden=mlp_hidden)
    cfg = {"model": None, "layers": args.layers, "heads": args.heads,
           "head_dim": args.head_dim, "mlp_hidden": mlp_hidden}
    return model_mod.build_toy_model(spec, seed=seed), cfg


def _resolve_mode(args, seq_len_hint):
    """Build the RunMode plus its config echo from parsed flags."""
    echo = {"mode": args.mode, "seed": args.seed}
    if args.mode == "gali":
        cfg = gali.GaliConfig(
            train_window=args.train_window, chunk_size=args.chunk_size,
            local_window=args.local_window,
            noise_mode=NOISE_CLI_TO_MODE[args.noise_mode], seed=args.seed,
        )
        echo.update(train_window=args.train_window, chunk_size=args.chunk_size,
                    local_window=args.local_window, noise_mode=args.noise_mode)
        return model_mod.RunMode(attention="gali", gali=cfg,
                                 record_attention=args.record_attention), echo
    if args.mode in ("pi", "ntk", "dyn-ntk"):
        factor = args.factor
        if factor is None:
            factor = max(1.0, seq_len_hint / args.train_window)
        cfg = baselines.BaselineConfig(method=args.mode,
                                       train_window=args.train_window,
                                       factor=factor)
        echo.update(train_window=args.train_window, factor=factor)
        return model_mod.RunMode(attention=args.mode, baseline=cfg,
                                 record_attention=args.record_attention), echo
    return model_mod.RunMode(record_attention=args.record_attention), echo


def _mode_argv_echo(args, echo):
    argv = ["--mode", echo["mode"], "--seed", str(echo["seed"])]
    if "train_window" in echo:
        argv += ["--train-window", str(echo["train_window"])]
    if "chunk_size" in echo:
        argv += ["--chunk-size", str(echo["chunk_size"]),
                 "--local-window", str(echo["local_window"]),
                 "--noise-mode", echo["noise_mode"]]
    if "factor" in echo:
        argv += ["--factor", repr(echo["factor"])]
    if args.record_attention:
        argv += ["--record-attention"]
    if args.model is not None:
        argv += ["--model", args.model]
    else:
        argv += ["--layers", str(args.layers), "--heads", str(args.heads),
                 "--head-dim", str(args.head_dim)]
        if args.mlp_hidden is not None:
            argv += ["--mlp-hidden", str(args.mlp_hidden)]
    return argv


def _attention_entropy_summary(model, tokens, mode):
    """Row entropies of the layer/head-averaged attention over one
    recorded prefill (the --record-attention payload)."""
    recording = model_mod.RunMode(attention=mode.attention, gali=mode.gali,
                                  baseline=mode.baseline, record_attention=True)
    records = model_mod.forward_prefill(model, tokens, recording).records
    mean = sum(records.values()) / len(records)
    return [float(v) for v in analysis.row_entropy(mean)]


def _base_config(echo, model_cfg):
    cfg = dict(echo)
    cfg.update(model_cfg)
    cfg["backend"] = kernels.backend_name()
    cfg["version"] = __version__
    return cfg


def _random_tokens(seed, length):
    return np.random.default_rng(seed ^ 0xC0FFEE).integers(0, 256, size=length)


def _cmd_selftest(args):
    ok = selftest.run_selftest(seed=args.seed)
    print("selftest:", "all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1


def _cmd_generate(args):
    toy, model_cfg = _resolve_model(args, args.seed)
    if args.tokens is not None:
        prompt = read_token_file(args.tokens)
    else:
        prompt = _random_tokens(args.seed, args.prompt_len)
    mode, echo = _resolve_mode(args, len(prompt) + args.n_new)
    run_mode = model_mod.RunMode(attention=mode.attention, gali=mode.gali,
                                 baseline=mode.baseline)
    continuation = model_mod.generate(toy, prompt, args.n_new, run_mode)
    config = _base_config(echo, model_cfg)
    config.update(n_new=args.n_new, prompt_len=int(len(prompt)),
                  tokens=args.tokens, record_attention=args.record_attention)
    argv_echo = ["generate", "--n-new", str(args.n_new)] + _mode_argv_echo(args, echo)
    if args.tokens is not None:
        argv_echo += ["--tokens", args.tokens]
    else:
        argv_echo += ["--prompt-len", str(args.prompt_len)]
    rows = [(i, int(t)) for i, t in enumerate(continuation)]
    results = {"continuation": [int(t) for t in continuation]}
    if args.record_attention:
        results["prompt_attention_row_entropy"] = _attention_entropy_summary(
            toy, prompt, mode)
    _write_outputs(args.out, "generate", config, argv_echo,
                   ("step", "token"), rows, results)
    return 0


def _cmd_ppl(args):
    toy, model_cfg = _resolve_model(args, args.seed)
    if args.tokens is not None:
        tokens = read_token_file(args.tokens)
    else:
        tokens = _random_tokens(args.seed, args.eval_len)
    mode, echo = _resolve_mode(args, min(len(tokens), args.context))
    run_mode = model_mod.RunMode(attention=mode.attention, gali=mode.gali,
                                 baseline=mode.baseline)
    value = analysis.perplexity(toy, tokens, run_mode, args.context)
    config = _base_config(echo, model_cfg)
    config.update(context=args.context, eval_len=int(len(tokens)),
                  tokens=args.tokens, record_attention=args.record_attention)
    argv_echo = ["ppl", "--context", str(args.context)] + _mode_argv_echo(args, echo)
    if args.tokens is not None:
        argv_echo += ["--tokens", args.tokens]
    else:
        argv_echo += ["--eval-len", str(args.eval_len)]
    results = {"perplexity": value}
    if args.record_attention:
        # summary of the leading evaluation window
        window = tokens[: min(len(tokens), args.context)]
        results["window_attention_row_entropy"] = _attention_entropy_summary(
            toy, window, mode)
    rows = [("perplexity", value)]
    _write_outputs(args.out, "ppl", config, argv_echo,
                   ("metric", "value"), rows, results)
    return 0


def _cmd_analyze_attn(args):
    toy, model_cfg = _resolve_model(args, args.seed)
    tokens = _random_tokens(args.seed, args.target_len)
    noise_modes = (gali.NOISE_OFF, NOISE_CLI_TO_MODE[args.noise_mode])
    if noise_modes[1] == gali.NOISE_OFF:
        noise_modes = (gali.NOISE_OFF,)
    trim = None
    if args.entropy_trim is not None:
        lo, hi = (float(v) for v in args.entropy_trim.split(","))
        trim = (lo, hi)
    results, _ = analysis.distribution_comparison(
        toy, tokens, args.train_window, chunk_size=args.chunk_size,
        local_window=args.local_window, seed=args.seed,
        gali_noise_modes=noise_modes, trim_percentiles=trim,
    )
    config = _base_config({"seed": args.seed}, model_cfg)
    config.update(target_len=args.target_len, train_window=args.train_window,
                  chunk_size=args.chunk_size, local_window=args.local_window,
                  noise_mode=args.noise_mode, entropy_trim=args.entropy_trim)
    argv_echo = ["analyze-attn", "--target-len", str(args.target_len),
                 "--train-window", str(args.train_window),
                 "--chunk-size", str(args.chunk_size),
                 "--local-window", str(args.local_window),
                 "--noise-mode", args.noise_mode,
                 "--seed", str(args.seed)] + _model_argv(args)
    if args.entropy_trim is not None:
        argv_echo += ["--entropy-trim", args.entropy_trim]
    rows = []
    summary = {}
    for entry in results:
        label = entry["method"]
        noise = NOISE_MODE_TO_CLI[entry["noise_mode"]]
        rows.append((label, noise, "matrix_diff", None, entry["matrix_diff"]))
        for idx, val in enumerate(entry["entropy_diff"]):
            rows.append((label, noise, "row_entropy_diff", idx, val))
        summary[f"{label}[{noise}]"] = {"matrix_diff": entry["matrix_diff"]}
    _write_outputs(args.out, "analyze-attn", config, argv_echo,
                   ("method", "noise_mode", "metric", "row_index", "value"),
                   rows, summary)
    return 0


def _model_argv(args):
    if args.model is not None:
        return ["--model", args.model]
    argv = ["--layers", str(args.layers), "--heads", str(args.heads),
            "--head-dim", str(args.head_dim)]
    if args.mlp_hidden is not None:
        argv += ["--mlp-hidden", str(args.mlp_hidden)]
    return argv


def _cmd_decay(args):
    params = rope.rope_theta(args.dim, args.base)
    embedding = np.ones(args.dim)
    series = analysis.decay_curve(embedding, embedding, params, args.max_dist)
    config = {"dim": args.dim, "base": args.base, "max_dist": args.max_dist,
              "embedding": "ones", "seed": args.seed,
              "backend": kernels.backend_name(), "version": __version__}
    argv_echo = ["decay", "--dim", str(args.dim), "--max-dist",
                 str(args.max_dist), "--base", repr(args.base),
                 "--seed", str(args.seed)]
    rows = list(zip(series.distances.tolist(), series.logits.tolist()))
    results = {
        "peak_distance": int(np.argmax(np.abs(series.logits))),
        "peak_abs_logit": float(np.abs(series.logits).max()),
    }
    _write_outputs(args.out, "decay", config, argv_echo,
                   ("distance", "logit"), rows, results)
    return 0


def _cmd_sweep(args):
    toy, model_cfg = _resolve_model(args, args.seed)
    tokens = _random_tokens(args.seed, args.target_len)
    chunk_sizes = [int(s) for s in args.chunk_sizes.split(",") if s]
    local_windows = [int(s) for s in args.local_windows.split(",") if s]
    if not chunk_sizes or not local_windows:
        raise ValueError("sweep needs at least one chunk size and local window")
    reference = analysis.record_run(
        toy, tokens, model_mod.RunMode(attention="exact"), args.seed)
    noise_mode = NOISE_CLI_TO_MODE[args.noise_mode]
    rows = []
    summary = {}
    for s in chunk_sizes:
        for lw in local_windows:
            cfg = gali.GaliConfig(train_window=args.train_window, chunk_size=s,
                                  local_window=lw, noise_mode=noise_mode,
                                  seed=args.seed)
            mode = model_mod.RunMode(attention="gali", gali=cfg)
            records = analysis.record_run(toy, tokens, mode, args.seed)
            diff = analysis.attn_matrix_diff(records, reference)
            rows.append((s, lw, args.noise_mode, diff))
            summary[f"s={s},lw={lw}"] = diff
    config = _base_config({"seed": args.seed}, model_cfg)
    config.update(train_window=args.train_window, target_len=args.target_len,
                  chunk_sizes=chunk_sizes, local_windows=local_windows,
                  noise_mode=args.noise_mode)
    argv_echo = ["sweep", "--chunk-sizes", ",".join(map(str, chunk_sizes)),
                 "--local-windows", ",".join(map(str, local_windows)),
                 "--target-len", str(args.target_len),
                 "--train-window", str(args.train_window),
                 "--noise-mode", args.noise_mode,
                 "--seed", str(args.seed)] + _model_argv(args)
    _write_outputs(args.out, "sweep", config, argv_echo,
                   ("chunk_size", "local_window", "noise_mode", "matrix_diff"),
                   rows, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="galikit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("selftest", help="run the built-in invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_selftest)

    p = subs.add_parser("generate", help="greedy continuation of a prompt")
    _add_model_flags(p)
    _add_mode_flags(p)
    p.add_argument("--tokens", default=None, help="prompt token file")
    p.add_argument("--prompt-len", type=int, default=8,
                   help="random prompt length when no token file is given")
    p.add_argument("--n-new", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output base path")
    p.set_defaults(func=_cmd_generate)

    p = subs.add_parser("ppl", help="perplexity under a windowed prefix")
    _add_model_flags(p)
    _add_mode_flags(p)
    p.add_argument("--tokens", default=None)
    p.add_argument("--eval-len", type=int, default=48,
                   help="random stream length when no token file is given")
    p.add_argument("--context", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ppl)

    p = subs.add_parser("analyze-attn",
                        help="attention-distribution comparison against exact")
    _add_model_flags(p)
    p.add_argument("--target-len", type=int, default=128)
    p.add_argument("--train-window", type=int, default=64)
    p.add_argument("--chunk-size", type=int, default=16)
    p.add_argument("--local-window", type=int, default=8)
    p.add_argument("--noise-mode", default="alg3",
                   choices=sorted(NOISE_CLI_TO_MODE))
    p.add_argument("--entropy-trim", default=None, metavar="LO,HI",
                   help="percentile trim for the entropy rows (default: none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze_attn)

    p = subs.add_parser("decay", help="logit decay over relative distance")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--max-dist", type=int, default=819)
    p.add_argument("--base", type=float, default=10000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decay)

    p = subs.add_parser("sweep",
                        help="chunk-size / local-window ablation grid")
    _add_model_flags(p)
    p.add_argument("--chunk-sizes", default="8,16,32")
    p.add_argument("--local-windows", default="4,8")
    p.add_argument("--target-len", type=int, default=128)
    p.add_argument("--train-window", type=int, default=64)
    p.add_argument("--noise-mode", default="off",
                   choices=sorted(NOISE_CLI_TO_MODE))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def _emit_error(kind, message):
    record = {"error": kind, "message": str(message)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def run(argv=None) -> int:
    """Execute one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        _emit_error("usage", exc)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        _emit_error(type(exc).__name__, exc)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
