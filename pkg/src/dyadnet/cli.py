"""Command line entry point: ``dyadnet <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (the message starts with the
error class name) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .data import RelationshipLabel, load_dataset, split_dataset, write_dataset
from .errors import DyadError
from .evaluation import (
    confusion,
    format_predictions,
    infer_space,
    load_percent_fixture,
    merge_confusion,
    read_predictions,
    render_percent_values,
    report_text,
)
from .features import FEATURE_NAMES, Standardizer, experiment_to_vector
from .models import format_lr, load_model, load_spec_file, registry_lookup, registry_table, save_model
from .synthgen import MODES, REFERENCE_COUNTS, default_profiles, generate, load_profiles, parse_counts
from .training import DEFAULT_BATCH_SIZE, DEFAULT_L2_LAMBDA, DEFAULT_TRAIN_FRACTION, TrainConfig, evaluate, train

log = logging.getLogger("dyadnet")

MODEL_FILE = "model.dyadnn"
STANDARDIZER_FILE = "model.std"
TRAIN_LOG_FILE = "train_log.tsv"
PRED_TRAIN_FILE = "predictions_train.tsv"
PRED_TEST_FILE = "predictions_test.tsv"
MANIFEST_FILE = "manifest.txt"
CURVE_FILE = "training_curve.png"

FIXTURES_DIR = Path(__file__).with_name("fixtures")


def _counts_text(counts) -> str:
    return ",".join(f"{lab.key}={counts.get(lab, 0)}" for lab in RelationshipLabel)


def _hidden(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(x) for x in text.split("-"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"hidden sizes must look like 25-12, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden sizes must be positive")
    return sizes


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie strictly between 0 and 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadnet",
        description="Classify the social relationship of walking pedestrian pairs "
                    "with from-scratch dense and LSTM networks.")
    parser.add_argument("--version", action="version", version=f"dyadnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="write a synthetic labelled dataset CSV")
    p.add_argument("--counts", default=_counts_text(REFERENCE_COUNTS),
                   help="experiments per label, e.g. colleagues=267,couple=96 (default: %(default)s)")
    p.add_argument("--mode", choices=MODES, default="separable", help="profile set (default: %(default)s)")
    p.add_argument("--profiles", help="INI file overriding the packaged profiles for --mode")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default: %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads; output does not depend on it")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("features", help="write the averaged 16-feature vector of every experiment")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="output feature CSV")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a registry model or a spec file on a dataset")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--model", help="registry name, e.g. RN2-3 (see 'models list')")
    which.add_argument("--spec-file", help="INI file with a [network] section")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--seed", type=int, default=0, help="seed for split, init and batches (default: %(default)s)")
    p.add_argument("--out-dir", default=".", help="directory for all outputs (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE, help="mini-batch size (default: %(default)s)")
    p.add_argument("--l2-lambda", type=float, default=DEFAULT_L2_LAMBDA,
                   help="L2 coefficient for specs with L2 enabled (default: %(default)s)")
    p.add_argument("--train-fraction", type=_fraction, default=DEFAULT_TRAIN_FRACTION,
                   help="share of experiments used for training (default: %(default)s)")
    p.add_argument("--epochs", type=int, help="override the model's epoch count")
    p.add_argument("--hidden", type=_hidden, help="override hidden sizes, e.g. 64-32")
    p.add_argument("--learning-rate", type=float, help="override the model's learning rate")
    p.add_argument("--figure", action="store_true", help=f"also write {CURVE_FILE}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p.add_argument("--model-file", required=True, help="model written by 'train'")
    p.add_argument("--standardizer", help=f"standardizer file (default: {STANDARDIZER_FILE} beside the model)")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--split", choices=("all", "train", "test"), default="all",
                   help="which part of the seeded split to evaluate (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="split seed used with --split (default: %(default)s)")
    p.add_argument("--train-fraction", type=_fraction, default=DEFAULT_TRAIN_FRACTION,
                   help="split fraction used with --split (default: %(default)s)")
    p.add_argument("--out", help="write predictions TSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="confusion tables and accuracies from a predictions TSV")
    p.add_argument("--predictions", required=True, help="exp_id<TAB>true<TAB>pred file")
    p.add_argument("--merge-binary", action="store_true", help="merge couple/family/friendship into intimate")
    p.add_argument("--compare", help="published matrix to print alongside: fixture name or TSV path")
    p.add_argument("--figure", help="write a confusion-matrix PNG here")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("models", help="model registry")
    msub = p.add_subparsers(dest="models_command", required=True, metavar="ACTION")
    pl = msub.add_parser("list", help="print every registry model and its hyperparameters")
    pl.set_defaults(func=cmd_models_list)

    p = sub.add_parser("selftest", help="gradient checks and numeric invariants")
    p.add_argument("--trials", type=int, default=20, help="random configurations per check (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for the random configurations (default: %(default)s)")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", help="manifest file written by a previous run")
    p.set_defaults(func=cmd_replay)
    return parser


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def _canonical_argv(args, parser_actions) -> list[str]:
    argv = [args.command]
    for action in parser_actions:
        if not action.option_strings or action.dest in ("help",):
            continue
        value = getattr(args, action.dest, None)
        flag = action.option_strings[-1]
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, tuple):
            argv += [flag, "-".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def manifest_text(args, resolved: dict) -> str:
    lines = [
        "# format: manifest/1",
        f"subcommand\t{args.command}",
        f"toolkit_version\t{__version__}",
        f"timestamp\t{_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"argv\t{shlex.join(args.canonical_argv)}",
    ]
    lines += [f"{k}\t{v}" for k, v in resolved.items()]
    return "\n".join(lines) + "\n"


def _emit_manifest(args, resolved: dict, out_path: Path | None = None) -> None:
    text = manifest_text(args, resolved)
    sys.stdout.write(text)
    if out_path is not None:
        out_path.write_text(text, encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            key, _, value = line.partition("\t")
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    counts = parse_counts(args.counts)
    profiles = load_profiles(args.profiles, args.mode) if args.profiles else default_profiles(args.mode)
    _emit_manifest(args, {"counts": _counts_text(counts), "mode": args.mode, "seed": args.seed,
                          "profiles": args.profiles or "packaged", "out": args.out})
    ds = generate(profiles, counts, args.seed, jobs=args.jobs)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds)} experiments to {args.out}")
    return 0


def cmd_features(args) -> int:
    ds = load_dataset(args.data)
    _emit_manifest(args, {"data": args.data, "out": args.out})
    lines = [",".join(FEATURE_NAMES + ("label",))]
    for e in ds:
        vec = experiment_to_vector(e)
        lines.append(",".join([*(repr(float(v)) for v in vec), e.label.key]))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(ds)} feature rows to {args.out}")
    return 0


def _resolve_spec(args):
    spec = load_spec_file(args.spec_file) if args.spec_file else registry_lookup(args.model)
    overrides = []
    if args.hidden is not None:
        spec = spec.replace(hidden_sizes=args.hidden)
        overrides.append("hidden")
    if args.epochs is not None:
        spec = spec.replace(epochs=args.epochs)
        overrides.append("epochs")
    if args.learning_rate is not None:
        spec = spec.replace(learning_rate=args.learning_rate)
        overrides.append("learning_rate")
    return spec, overrides


def cmd_train(args) -> int:
    spec, overrides = _resolve_spec(args)
    cfg = TrainConfig.for_spec(spec, batch_size=args.batch_size, l2_lambda=args.l2_lambda,
                               seed=args.seed, train_fraction=args.train_fraction)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "model": spec.name,
        "type": "lstm" if spec.first_hidden_is_lstm else "dense",
        "hidden": "-".join(map(str, spec.hidden_sizes)),
        "output_size": spec.output_size,
        "epochs": cfg.epochs,
        "learning_rate": format_lr(cfg.learning_rate),
        "l2_enabled": spec.l2_enabled,
        "l2_lambda": repr(cfg.l2_lambda),
        "dropout_rate": repr(cfg.dropout_rate),
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "train_fraction": repr(cfg.train_fraction),
        "overrides": ",".join(overrides) or "none",
        "data": args.data,
        "out_dir": str(out_dir),
    }
    _emit_manifest(args, resolved, out_dir / MANIFEST_FILE)
    ds = load_dataset(args.data)
    net, report = train(spec, ds, cfg)
    train_ds, test_ds = split_dataset(ds, cfg.train_fraction, cfg.seed)
    _, train_pred = evaluate(net, train_ds, report.standardizer)
    _, test_pred = evaluate(net, test_ds, report.standardizer)

    save_model(net, out_dir / MODEL_FILE)
    (out_dir / STANDARDIZER_FILE).write_text(report.standardizer.to_text(), encoding="utf-8")
    (out_dir / TRAIN_LOG_FILE).write_text(report.to_text(), encoding="utf-8")
    (out_dir / PRED_TRAIN_FILE).write_text(format_predictions(train_pred), encoding="utf-8")
    (out_dir / PRED_TEST_FILE).write_text(format_predictions(test_pred), encoding="utf-8")
    if args.figure:
        from .plotting import plot_training_curve

        plot_training_curve(report, out_dir / CURVE_FILE)
    print(f"train_accuracy\t{report.train_accuracy:.2f}")
    print(f"test_accuracy\t{report.test_accuracy:.2f}")
    print(f"wall_seconds\t{report.wall_seconds:.1f}")
    return 0


def cmd_eval(args) -> int:
    model_path = Path(args.model_file)
    std_path = Path(args.standardizer) if args.standardizer else model_path.with_name(STANDARDIZER_FILE)
    _emit_manifest(args, {"model_file": str(model_path), "standardizer": str(std_path),
                          "data": args.data, "split": args.split, "seed": args.seed,
                          "train_fraction": repr(args.train_fraction)})
    net = load_model(model_path)
    try:
        standardizer = Standardizer.from_text(std_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DyadError(f"{std_path}: {exc}") from None
    ds = load_dataset(args.data)
    if args.split != "all":
        train_ds, test_ds = split_dataset(ds, args.train_fraction, args.seed)
        ds = train_ds if args.split == "train" else test_ds
    accuracy, predictions = evaluate(net, ds, standardizer)
    if args.out:
        Path(args.out).write_text(format_predictions(predictions), encoding="utf-8")
    print(f"examples\t{len(predictions)}")
    print(f"accuracy\t{accuracy:.2f}")
    return 0


def _reference_table(name: str, merged: bool):
    path = Path(name)
    if not path.exists():
        path = FIXTURES_DIR / f"{name.lower()}.tsv"
    if not path.exists():
        known = sorted(p.stem for p in FIXTURES_DIR.glob("*.tsv"))
        raise DyadError(f"no fixture {name!r}; packaged fixtures: {', '.join(known)}")
    labels, values, title = load_percent_fixture(path)
    if merged != (len(labels) == 2):
        raise DyadError(f"fixture {name!r} has {len(labels)} classes, report has {2 if merged else 4}")
    return title or path.stem, render_percent_values(labels, values)


def cmd_report(args) -> int:
    _emit_manifest(args, {"predictions": args.predictions, "merge_binary": args.merge_binary,
                          "compare": args.compare or "none", "figure": args.figure or "none"})
    preds = read_predictions(args.predictions)
    space = infer_space(preds)
    cm = confusion(preds, space)
    if args.merge_binary and space is RelationshipLabel:
        cm = merge_confusion(cm)
    reference = _reference_table(args.compare, len(cm.space) == 2) if args.compare else None
    text = report_text(cm, reference)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.figure:
        from .plotting import plot_confusion

        plot_confusion(cm, args.figure)
    return 0


def cmd_models_list(args) -> int:
    sys.stdout.write(registry_table())
    return 0


def cmd_selftest(args) -> int:
    from .gradcheck import run_gradient_checks, run_invariant_checks

    failures = 0
    for result in run_gradient_checks(trials=args.trials, seed=args.seed):
        print(result.line())
        failures += not result.passed
    for name, ok in run_invariant_checks(seed=args.seed):
        print(f"{'PASS' if ok else 'FAIL'}  invariant {name}")
        failures += not ok
    print(f"{failures} failure(s)")
    return 1 if failures else 0


def cmd_replay(args) -> int:
    manifest = read_manifest(args.manifest)
    if "argv" not in manifest:
        raise DyadError(f"{args.manifest}: no argv line")
    return main(shlex.split(manifest["argv"]))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # the chosen subparser's actions define the canonical command line
    sub_actions = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_actions.choices[args.command]
    actions = list(subparser._actions)
    if args.command == "models":
        args.canonical_argv = ["models", args.models_command]
    else:
        args.canonical_argv = _canonical_argv(args, actions)
        if args.command == "replay":
            args.canonical_argv = ["replay", args.manifest]
    try:
        return args.func(args)
    except DyadError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
