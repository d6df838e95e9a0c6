"""Command-line front end: ``fbls gen | train | predict | grow | bench``.

Every tunable flag may also come from a flat ``key=value`` file passed
with ``--config``; keys are the flag names with dashes replaced by
underscores, and flags given on the command line win.

Exit codes: 0 ok, 1 usage or validation error, 2 I/O or data error,
3 feature-count mismatch, 4 model/state inconsistency.
"""
import argparse
import os
import sys
import time

from . import __version__
from .bls import NetworkConfig, add_feature_and_enhancement, train
from .data import SynthSpec, atomic_write, gen_synth_spectra, load_csv, read_kv, read_table, save_csv, split, write_kv
from .errors import DataError, FBLSError, ShapeMismatchError, StateMismatchError
from .eval import accuracy, benchmark, evaluate, format_steps, report_values, write_confusion
from .model_io import load_model, load_model_and_state, save_model, state_path

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SHAPE, EXIT_STATE = 0, 1, 2, 3, 4
MODES = {"bls": "random_sparse", "random_sparse": "random_sparse", "fuzzy_ts": "fuzzy_ts"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _increments(text):
    steps = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            feat, enh = part.split(":")
            steps.append((int(feat), int(enh)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad increment {part!r}, expected FEAT:ENH") from None
    return tuple(steps)


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_pair(text):
    try:
        lo, hi = (float(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


# (flag, type, default, help); defaults are applied after the config file
NETWORK_FLAGS = [
    ("--mode", str, "bls", "feature extractor: bls (sparse random) or fuzzy_ts"),
    ("--n1", int, 20, "feature nodes per window"),
    ("--n2", int, 10, "number of feature windows"),
    ("--n3", int, 2000, "enhancement nodes"),
    ("--zoom", float, 0.8, "enhancement shrink factor"),
    ("--lasso-lambda", float, 1e-3, "L1 weight of the sparse autoencoder"),
    ("--ridge-lambda", float, 2.0**-10, "ridge weight of the output layer"),
    ("--pinv-lambda", float, 2.0**-10, "ridge floor of the retained pseudoinverse"),
    ("--lasso-max-iters", int, 50, "ISTA iteration cap"),
    ("--lasso-tol", float, 1e-5, "ISTA stopping tolerance"),
]
SEED_FLAG = [("--seed", int, 0, "seed for all randomness")]
LABEL_FLAG = [("--label-col", str, "label", "name of the label column")]
SYNTH_FLAGS = [
    ("--classes", int, 8, "number of classes"),
    ("--per-class", _int_list, (500,), "samples per class, one value or one per class"),
    ("--features", int, 256, "spectral points per sample"),
    ("--bands", int, 3, "absorption bands per class"),
    ("--noise", float, 0.01, "white-noise sigma"),
    ("--wavenumber-range", _float_pair, (3800.0, 10000.0), "LO,HI of the spectral axis"),
]


def _add(parser, specs):
    for flag, typ, default, text in specs:
        parser.add_argument(flag, type=typ, default=None, help=f"{text} (default {default})")


def _defaults(specs):
    return {flag[2:].replace("-", "_"): (typ, default) for flag, typ, default, _ in specs}


def build_parser():
    p = _Parser(prog="fbls", description="Broad learning system and its fuzzy variant.")
    p.add_argument("--version", action="version", version=f"fbls {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic spectra CSV")
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--config")
    _add(g, SYNTH_FLAGS + SEED_FLAG + LABEL_FLAG)
    g.set_defaults(specs=SYNTH_FLAGS + SEED_FLAG + LABEL_FLAG, run=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--test", help="held-out CSV to evaluate after training")
    t.add_argument("--out", default="model.fbls")
    t.add_argument("--config")
    _add(t, NETWORK_FLAGS + SEED_FLAG + LABEL_FLAG)
    t.set_defaults(specs=NETWORK_FLAGS + SEED_FLAG + LABEL_FLAG, run=cmd_train)

    r = sub.add_parser("predict", help="predict labels for a CSV")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", default="predictions.csv")
    r.add_argument("--scores", action="store_true", help="also write one score column per class")
    r.add_argument("--config")
    _add(r, LABEL_FLAG)
    r.set_defaults(specs=LABEL_FLAG, run=cmd_predict)

    w = sub.add_parser("grow", help="add nodes to a trained model")
    w.add_argument("--model", required=True)
    w.add_argument("--data", required=True, help="the training CSV")
    w.add_argument("--out", help="output model path (default: overwrite --model)")
    w.add_argument("--add-feat", type=int, default=0)
    w.add_argument("--add-enh", type=int, default=0)
    w.add_argument("--config")
    _add(w, LABEL_FLAG)
    w.set_defaults(specs=LABEL_FLAG, run=cmd_grow)

    b = sub.add_parser("bench", help="time initial training and incremental steps")
    b.add_argument("--data", help="CSV to train on (default: generate synthetic spectra)")
    b.add_argument("--mode", choices=["bls", "fuzzy_ts", "both"], default=None, help="(default both)")
    b.add_argument("--increments", type=_increments, default=None, help="e.g. 10:1000,10:1000")
    b.add_argument("--test-fraction", type=float, default=None, help="held-out share (default 0)")
    b.add_argument("--report", help="write a key=value report here")
    b.add_argument("--config")
    bench_specs = [s for s in NETWORK_FLAGS if s[0] != "--mode"] + SYNTH_FLAGS + SEED_FLAG + LABEL_FLAG
    _add(b, bench_specs)
    b.set_defaults(
        specs=bench_specs + [
            ("--mode", str, "both", ""),
            ("--increments", _increments, (), ""),
            ("--test-fraction", float, 0.0, ""),
        ],
        run=cmd_bench,
    )
    return p


def resolve(args):
    """Fill unset flags from ``--config`` and then from built-in defaults."""
    table = _defaults(args.specs)
    from_file = {}
    if args.config:
        _require_file(args.config)
        from_file = read_kv(args.config)
        unknown = sorted(set(from_file) - set(table))
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {', '.join(unknown)}")
    for key, (typ, default) in table.items():
        if getattr(args, key, None) is not None:
            continue
        if key in from_file:
            try:
                value = typ(from_file[key])
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{args.config}: bad value for {key}: {exc}") from None
        else:
            value = default
        setattr(args, key, value)
    return args


def _require_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")


def _require_out_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise FileNotFoundError(f"output directory does not exist: {d}")


def network_config(args, mode=None):
    mode = args.mode if mode is None else mode
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}; choose bls or fuzzy_ts")
    return NetworkConfig(
        n1=args.n1, n2=args.n2, n3=args.n3, zoom=args.zoom,
        lasso_lambda=args.lasso_lambda, ridge_lambda=args.ridge_lambda,
        pinv_lambda=args.pinv_lambda, seed=args.seed, feature_mode=MODES[mode],
        lasso_max_iters=args.lasso_max_iters, lasso_tol=args.lasso_tol,
    )


def synth_spec(args):
    return SynthSpec(
        n_classes=args.classes, samples_per_class=args.per_class, n_features=args.features,
        wavenumber_range=args.wavenumber_range, bands_per_class=args.bands,
        noise_sigma=args.noise, seed=args.seed,
    )


def report_path(model_path):
    return os.path.splitext(model_path)[0] + ".report"


def _write_report(path, values):
    atomic_write(path, lambda fh: write_kv(fh, values))


def _write_confusion(path, report):
    atomic_write(path, lambda fh: write_confusion(fh, report))


# ------------------------------------------------------------ commands

def cmd_gen(args):
    spec = synth_spec(args)
    _require_out_dir(args.out)
    ds = gen_synth_spectra(spec)
    save_csv(ds, args.out, args.label_col)
    print(f"wrote {ds.n_samples} samples x {ds.n_features} features, {ds.n_classes} classes to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = network_config(args)
    _require_file(args.data)
    if args.test:
        _require_file(args.test)
    _require_out_dir(args.out)
    ds = load_csv(args.data, args.label_col)
    test = load_csv(args.test, args.label_col) if args.test else None
    if test is not None and test.n_features != ds.n_features:
        raise ShapeMismatchError(
            f"{args.test} has {test.n_features} features, training data has {ds.n_features}"
        )

    t0 = time.perf_counter()
    model, state = train(ds, cfg)
    train_time = time.perf_counter() - t0
    save_model(model, args.out, state)

    train_rep, _ = evaluate(model, ds)
    values = {
        "model": os.path.basename(args.out),
        "feature_mode": cfg.feature_mode,
        "n1": cfg.n1, "n2": cfg.n2, "n3": cfg.n3, "seed": cfg.seed,
        "n_feature_nodes": model.n_feature_nodes,
        "n_enhancement_nodes": model.n_enhancement_nodes,
        "train_time_s": repr(train_time),
        "steps": 0,
    }
    values.update(report_values(train_rep, "train."))
    print(f"train P_a = {train_rep.p_a:.6f} ({train_rep.n_r}/{train_rep.n_t}), {train_time:.3f} s")
    root = os.path.splitext(args.out)[0]
    _write_confusion(root + ".confusion.csv", train_rep)
    if test is not None:
        test_rep, test_time = evaluate(model, test)
        values.update(report_values(test_rep, "test."))
        values["test.time_s"] = repr(test_time)
        print(f"test  P_a = {test_rep.p_a:.6f} ({test_rep.n_r}/{test_rep.n_t})")
        _write_confusion(root + ".test.confusion.csv", test_rep)
    _write_report(report_path(args.out), values)
    return EXIT_OK


def _write_predictions(fh, labels, scores, class_labels):
    head = ["predicted"] + ([f"score_{c}" for c in class_labels] if scores is not None else [])
    fh.write(",".join(head) + "\n")
    for i, label in enumerate(labels):
        row = [label]
        if scores is not None:
            row += [repr(float(v)) for v in scores[i]]
        fh.write(",".join(row) + "\n")


def cmd_predict(args):
    from .bls import predict

    _require_file(args.model)
    _require_file(args.data)
    _require_out_dir(args.out)
    model = load_model(args.model)
    x, truth, _ = read_table(args.data, args.label_col, require_label=False)
    if x.shape[1] != model.n_features:
        raise ShapeMismatchError(
            f"feature mismatch: model expects f={model.n_features}, {args.data} has f={x.shape[1]}"
        )
    labels, scores = predict(model, x)
    atomic_write(
        args.out,
        lambda fh: _write_predictions(fh, labels, scores if args.scores else None, model.class_labels),
    )
    print(f"wrote {len(labels)} predictions to {args.out}")
    if truth is not None:
        rep = accuracy(labels, truth)
        print(f"P_a = {rep.p_a:.6f} ({rep.n_r}/{rep.n_t})")
    return EXIT_OK


def cmd_grow(args):
    _require_file(args.model)
    _require_file(state_path(args.model))
    _require_file(args.data)
    out = args.out or args.model
    _require_out_dir(out)
    if args.add_feat < 0 or args.add_enh < 0:
        raise UsageError("--add-feat and --add-enh must be non-negative")
    if args.add_feat == 0 and args.add_enh == 0:
        print("nothing to add; files left unchanged")
        return EXIT_OK

    model, state = load_model_and_state(args.model)
    ds = load_csv(args.data, args.label_col)
    if ds.n_features != model.n_features:
        raise ShapeMismatchError(
            f"feature mismatch: model expects f={model.n_features}, {args.data} has f={ds.n_features}"
        )
    t0 = time.perf_counter()
    model, state = add_feature_and_enhancement(model, state, ds, args.add_feat, args.add_enh)
    step_time = time.perf_counter() - t0
    save_model(model, out, state)

    rep, _ = evaluate(model, ds)
    old = report_path(args.model)
    values = read_kv(old) if os.path.isfile(old) else {}
    step = int(values.get("steps", 0)) + 1
    times = [float(values[f"step.{i}.time_s"]) for i in range(1, step) if f"step.{i}.time_s" in values]
    values.update({
        "model": os.path.basename(out),
        "steps": step,
        f"step.{step}.add_feat": args.add_feat,
        f"step.{step}.add_enh": args.add_enh,
        f"step.{step}.time_s": repr(step_time),
        f"step.{step}.train.p_a": repr(rep.p_a),
        "n_feature_nodes": model.n_feature_nodes,
        "n_enhancement_nodes": model.n_enhancement_nodes,
    })
    values.update(report_values(rep, "train."))
    if "train_time_s" in values:
        values["total_time_s"] = repr(float(values["train_time_s"]) + sum(times) + step_time)
    _write_report(report_path(out), values)
    print(
        f"step {step}: +{args.add_feat} feature, +{args.add_enh} enhancement nodes in {step_time:.3f} s; "
        f"train P_a = {rep.p_a:.6f}"
    )
    return EXIT_OK


def cmd_bench(args):
    if args.data:
        _require_file(args.data)
    if args.report:
        _require_out_dir(args.report)
    modes = ["bls", "fuzzy_ts"] if args.mode == "both" else [args.mode]
    configs = {mode: network_config(args, mode) for mode in modes}

    ds = load_csv(args.data, args.label_col) if args.data else gen_synth_spectra(synth_spec(args))
    test = None
    if args.test_fraction > 0:
        ds, test = split(ds, args.test_fraction, args.seed)

    values, reports = {}, {}
    for mode in modes:
        rep = benchmark(ds, configs[mode], args.increments, test)
        reports[mode] = rep
        print(f"[{mode}] {ds.n_samples} training samples, increments {list(args.increments) or 'none'}")
        print(format_steps(rep))
        for i, ratio in enumerate(rep.step_ratios, start=1):
            verdict = "pass" if ratio < 0.5 else "FAIL"
            print(f"  step {i}: extra time / initial time = {ratio:.3f} < 0.5 {verdict}")
        print()
        for key, value in report_values(rep, "test." if test is not None else "train.").items():
            values[f"{mode}.{key}"] = value
    if len(modes) == 2:
        slow, fast = reports["fuzzy_ts"].train_time_s, reports["bls"].train_time_s
        verdict = "pass" if slow > fast else "FAIL"
        print(f"fuzzy_ts train time {slow:.3f} s > bls train time {fast:.3f} s {verdict}")
    if args.report:
        _write_report(args.report, values)
    return EXIT_OK


# ------------------------------------------------------------ entry point

def _limit_threads():
    raw = os.environ.get("FBLS_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FBLS_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"FBLS_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        limiter = _limit_threads()
        try:
            return args.run(resolve(args))
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except StateMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except (OSError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FBLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
