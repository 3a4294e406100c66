"""Command-line entry point: ``histoclass <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 input/output or dataset error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import acnn, evaluation, svm, synth, texfeat
from .imaging import DatasetError, expand, load_dataset, to_grayscale

log = logging.getLogger("histoclass")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "ACNN_SEED"


class UsageError(Exception):
    pass


# -- config file -----------------------------------------------------------

def read_config(path: Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _config_defaults(parser: argparse.ArgumentParser, config: dict[str, str]) -> dict:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "command", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = low in _TRUE
            continue
        try:
            converted = action.type(value) if action.type else value
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
        if action.choices is not None and converted not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        defaults[key] = converted
    return defaults


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    """Comma-separated values; ``2^k`` is accepted as a power of two."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        out.append(2.0 ** float(item[2:]) if item.startswith("2^") else float(item))
    return tuple(out)


# -- commands --------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        spec = synth.SyntheticSpec(images_per_class=args.images_per_class, width=args.width,
                                   height=args.height, noise=args.noise,
                                   seed=resolve_seed(args.seed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    images = synth.generate(spec)
    synth.write_dataset(images, args.out)
    print(f"wrote {len(images)} images to {args.out}")
    return EXIT_OK


def _build_method(args, seed: int):
    if args.method == "acnn":
        topo = acnn.Topology(activation=args.activation, pooling=args.pooling)
        cfg = acnn.TrainingConfig(learning_rate=args.learning_rate,
                                  max_iterations=args.iterations,
                                  min_train_error=args.min_train_error, seed=seed)
        return evaluation.AcnnMethod(topo, cfg)
    kernel = svm.KernelSpec(args.kernel, gamma=args.gamma if args.gamma else 1.0,
                            degree=args.degree, coef0=args.coef0)
    return evaluation.SvmMethod(args.feature, kernel, C=args.C, Cs=args.grid_c,
                                gammas=args.grid_gamma, seed=seed,
                                search_gamma=args.gamma is None)


def cmd_run(args) -> int:
    seed = resolve_seed(args.seed)
    if args.method == "acnn" and (args.feature or args.kernel):
        raise UsageError("--feature/--kernel only apply to --method svm")
    if args.method == "svm":
        args.feature = args.feature or "rlpq"
        args.kernel = args.kernel or "rbf"
    if args.gamma is not None and args.C is None:
        raise UsageError("--gamma without --C is ambiguous; give both or neither")
    jobs = 1 if args.deterministic else args.jobs
    try:
        method = _build_method(args, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    images = load_dataset(args.data)
    try:
        plan = evaluation.make_folds(images, args.folds, seed, args.group_by_patient)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k != "func"}
    config["seed"] = seed
    config["jobs"] = jobs
    report = evaluation.run_experiment(images, method, plan, jobs=jobs,
                                       model_dir=out / "models" if args.save_models else None,
                                       seed=seed, config=config)
    name = args.method if args.method == "acnn" else f"{args.feature}_{args.kernel}"
    report.write_json(out / f"report_{name}.json")
    evaluation.append_csv(out / "summary.csv", [report.csv_row()])
    det = report.detection
    print(json.dumps({"identification_accuracy": report.identification_accuracy,
                      "detection": det.to_dict(), "cm_final": report.cm4.tolist()}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = resolve_seed(args.seed)
    ok = True
    for s in range(seed, seed + args.seeds):
        res = acnn.gradcheck(seed=s, h=args.h, tolerance=args.tolerance, perturb=args.perturb)
        verdict = "PASS" if res.passed else "FAIL"
        print(f"seed {s}: max relative error {res.max_rel_error:.3e} "
              f"({res.worst_parameter}, {res.n_checked} parameters) {verdict}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_features(args) -> int:
    try:
        texfeat.descriptor_length(args.descriptor)
    except texfeat.UnknownDescriptorError as exc:
        raise UsageError(str(exc)) from exc
    images = load_dataset(args.data, require_all_classes=False)

    def rows():
        for im in images:
            for p in expand(im):
                yield im.image_id, p.tag, int(im.label), texfeat.compute(to_grayscale(p),
                                                                         args.descriptor)

    n = texfeat.write_feature_csv(args.out, rows(), args.descriptor)
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


def cmd_vote_demo(args) -> int:
    try:
        scores = [[float(v) for v in s.split(",")] for s in args.scores]
    except ValueError as exc:
        raise UsageError(f"scores must be comma-separated numbers: {exc}") from exc
    if len({len(s) for s in scores}) > 1:
        raise UsageError("all score vectors must have the same length")
    try:
        cls, mean = evaluation.vote(scores)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(json.dumps({"class": cls, "mean": mean.tolist()}))
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="histoclass",
                                description="Patch-based colorectal histology classification")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key = value file; flags override it")
        sp.add_argument("--seed", type=int, default=None,
                        help=f"random seed (falls back to ${SEED_ENV}, then 0)")

    sp = sub.add_parser("synth", help="generate the synthetic 4-class dataset")
    common(sp)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--images-per-class", type=int, default=50)
    sp.add_argument("--width", type=int, default=640)
    sp.add_argument("--height", type=int, default=480)
    sp.add_argument("--noise", type=float, default=12.0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("run", help="k-fold cross-validated experiment")
    common(sp)
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--method", choices=("acnn", "svm"), default="acnn")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--jobs", type=int, default=1, help="folds trained in parallel")
    sp.add_argument("--deterministic", action="store_true", help="force sequential folds")
    sp.add_argument("--group-by-patient", action="store_true")
    sp.add_argument("--no-save-models", dest="save_models", action="store_false")
    g = sp.add_argument_group("acnn")
    g.add_argument("--learning-rate", type=float, default=1e-3)
    g.add_argument("--iterations", type=int, default=50)
    g.add_argument("--min-train-error", type=float, default=0.08)
    g.add_argument("--activation", choices=acnn.network.ACTIVATIONS, default="tanh")
    g.add_argument("--pooling", choices=acnn.network.POOLINGS, default="average")
    g = sp.add_argument_group("svm")
    g.add_argument("--feature", choices=texfeat.descriptor_names(), default=None)
    g.add_argument("--kernel", choices=sorted(svm.KERNEL_ALIASES), default=None)
    g.add_argument("--C", type=float, default=None, help="fixed cost; omit to grid-search")
    g.add_argument("--gamma", type=float, default=None)
    g.add_argument("--degree", type=int, default=3)
    g.add_argument("--coef0", type=float, default=0.0)
    g.add_argument("--grid-c", type=_float_list, default=svm.DEFAULT_C_GRID,
                   help="comma list, e.g. 2^-5,2^-3,1")
    g.add_argument("--grid-gamma", type=_float_list, default=svm.DEFAULT_GAMMA_GRID)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("gradcheck", help="compare BP gradients with finite differences")
    common(sp)
    sp.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    sp.add_argument("--h", type=float, default=1e-4)
    sp.add_argument("--tolerance", type=float, default=1e-5)
    sp.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("features", help="dump texture descriptors of every patch to CSV")
    common(sp)
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--descriptor", required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("vote-demo", help="majority vote over patch score vectors")
    common(sp)
    sp.add_argument("scores", nargs="+", help="comma-separated score vector per patch")
    sp.set_defaults(func=cmd_vote_demo)
    return p


def _parse(argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config is not None and command is not None:
        sub = subparsers[command]
        defaults = _config_defaults(sub, read_config(known.config))
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
