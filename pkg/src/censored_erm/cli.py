"""Command-line interface: ``censored-erm <subcommand> ...``.

Every dataset file uses the CSV layout ``x1,...,xd,time,event`` with the
optional truth columns ``y_true,c`` written by ``generate --with-truth``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .censoring import fit_censoring_estimator
from .data import ValidationError, read_csv, write_csv
from .experiments import read_results, run, summarize, write_summary, ExperimentConfig
from .kernels import FAMILIES as KERNEL_FAMILIES, KernelSpec
from .learners import FAMILIES as LEARNER_FAMILIES, LearnerSpec, NumericalError, fit, load_model, model_to_json
from .metrics import evaluate_model
from .risk import LOSS_VARIANTS, compute_weights
from .synthetic import CalibrationError, CoxModel, calibrate_lambda, generate_dataset

log = logging.getLogger("censored_erm")

_SURVIVAL_VARIANTS = {"kernel": "kernel_beran", "knn": "knn", "km": "unconditional_km"}


def _bandwidth(value: str):
    if value == "auto":
        return value
    try:
        h = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be 'auto' or a positive number, got {value!r}") from None
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return h


def _grid(value: str) -> np.ndarray:
    try:
        t0, t1, steps = value.split(":")
        t0, t1, steps = float(t0), float(t1), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like t0:t1:steps, got {value!r}") from None
    if steps < 1 or t0 < 0 or t1 < t0:
        raise argparse.ArgumentTypeError("grid needs 0 <= t0 <= t1 and steps >= 1")
    return np.linspace(t0, t1, steps)


def _point(value: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {value!r}") from None


def _add_kernel_flags(p):
    p.add_argument("--kernel", choices=KERNEL_FAMILIES, default="epanechnikov_product")
    p.add_argument("--bandwidth", type=_bandwidth, default="auto", help="'auto' or a positive number")
    p.add_argument("--neighbors", type=int, default=5, help="K for the k-NN estimator")


def _add_oracle_flag(p):
    p.add_argument(
        "--oracle-lambda",
        type=float,
        default=None,
        help="censoring scale of the synthetic Cox model, needed by ipcw_oracle",
    )


def _oracle_survival(args, d):
    if args.oracle_lambda is None:
        return None
    return CoxModel(d, args.oracle_lambda).censoring_survival


def _weights(args, data):
    return compute_weights(
        data,
        args.loss if hasattr(args, "loss") else args.variant,
        normalize=getattr(args, "normalize", False),
        kernel=KernelSpec(args.kernel),
        bandwidth=args.bandwidth,
        n_neighbors=args.neighbors,
        censoring_survival=_oracle_survival(args, data.d),
    )


def cmd_generate(args):
    model = CoxModel(args.d)
    lam = calibrate_lambda(model, args.target_p, mc_n=args.mc_n, seed=args.seed)
    data = generate_dataset(model.with_lambda(lam), args.n, args.seed)
    write_csv(data, args.output, with_truth=args.with_truth)
    log.info("lambda=%.6g, observed event rate %.4f", lam, float(np.mean(data.event)))
    return 0


def cmd_estimate_survival(args):
    data = read_csv(args.input)
    x = args.at_x
    if x.shape != (data.d,):
        raise ValidationError(f"--at-x needs {data.d} coordinates, got {x.size}")
    est = fit_censoring_estimator(
        data,
        _SURVIVAL_VARIANTS[args.variant],
        kernel=KernelSpec(args.kernel),
        bandwidth=args.bandwidth,
        n_neighbors=args.neighbors,
        drop_last_jump=args.drop_last_jump,
    )
    diag: dict = {}
    s = est.survival(args.grid, x, diagnostics=diag)
    with _open_out(args.output) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "S_hat"])
        for t, v in zip(args.grid, s):
            w.writerow([repr(float(t)), repr(float(v))])
    if diag:
        log.info("diagnostics: %s", diag)
    return 0


def cmd_weights(args):
    data = read_csv(args.input)
    wv = _weights(args, data)
    with _open_out(args.output) as fh:
        w = csv.writer(fh)
        w.writerow(["index", "weight"])
        for i, v in enumerate(wv.weights):
            w.writerow([i, repr(float(v))])
    if wv.diagnostics:
        log.info("diagnostics: %s", wv.diagnostics)
    return 0


def cmd_fit(args):
    data = read_csv(args.input)
    spec = LearnerSpec(
        args.learner,
        ridge_lambda=args.ridge_lambda,
        rbf_gamma=args.rbf_gamma,
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        min_leaf_weight=args.min_leaf_weight,
        bootstrap_seed=args.bootstrap_seed,
    )
    model = fit(data, _weights(args, data), spec)
    doc = model_to_json(model, spec, args.loss)
    with open(args.model_out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    return 0


def cmd_evaluate(args):
    model = load_model(args.model)
    test = read_csv(args.test)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - {"l2", "concordance"}
    if unknown:
        raise ValidationError(f"unknown metrics {sorted(unknown)}")
    report = evaluate_model(model, test, metrics).as_dict()
    text = json.dumps(report, indent=1)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_benchmark(args):
    config = ExperimentConfig.from_toml(args.config)
    cache = args.cache_dir or Path(args.output).resolve().parent
    result = run(config, jobs=args.jobs, cache_dir=cache, timings=args.timings)
    result.to_csv(args.output, timings=args.timings)
    if args.summary:
        write_summary(summarize(result), args.summary)
    failed = len(result.rows) - len(result.ok_rows())
    if failed:
        log.warning("%d failed rows; see the status and message columns", failed)
    return 0


def cmd_summarize(args):
    write_summary(summarize(read_results(args.results)), args.output)
    return 0


class _open_out:
    """``open`` for a path, or stdout for ``-``/None."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            self.fh = None
            return sys.stdout
        self.fh = open(self.path, "w", newline="", encoding="utf-8")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="censored-erm", description="Regression under right censoring with IPCW weights.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress and diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="draw a synthetic Cox dataset at a target event rate")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--target-p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-n", type=int, default=200_000)
    p.add_argument("--output", required=True)
    p.add_argument("--with-truth", action="store_true", help="append y_true and c columns")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate-survival", parents=[common], help="censoring survival curve at one covariate point")
    p.add_argument("--input", required=True)
    p.add_argument("--variant", choices=tuple(_SURVIVAL_VARIANTS), default="kernel")
    _add_kernel_flags(p)
    p.add_argument("--grid", type=_grid, required=True, help="t0:t1:steps")
    p.add_argument("--at-x", type=_point, required=True, help="comma-separated coordinates")
    p.add_argument("--drop-last-jump", action="store_true")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_estimate_survival)

    p = sub.add_parser("weights", parents=[common], help="per-observation weights of a loss variant")
    p.add_argument("--input", required=True)
    p.add_argument("--variant", choices=LOSS_VARIANTS, default="ipcw_knn")
    p.add_argument("--normalize", action="store_true")
    _add_kernel_flags(p)
    _add_oracle_flag(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("fit", parents=[common], help="weighted empirical risk minimization")
    p.add_argument("--input", required=True)
    p.add_argument("--loss", choices=LOSS_VARIANTS, default="ipcw_knn")
    p.add_argument("--learner", choices=LEARNER_FAMILIES, default="linear")
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--rbf-gamma", type=float, default=None)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf-weight", type=float, default=1e-6)
    p.add_argument("--bootstrap-seed", type=int, default=0)
    _add_kernel_flags(p)
    _add_oracle_flag(p)
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", parents=[common], help="score a saved model on a test CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--metrics", default="l2,concordance")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common], help="run a benchmark grid from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--summary", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--cache-dir", default=None, help="where calibrated lambdas are cached (default: next to --output)")
    p.add_argument("--timings", action="store_true", help="add a wall_time column (not reproducible)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("summarize", parents=[common], help="summary table from an existing results.csv")
    p.add_argument("--results", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, CalibrationError, NumericalError, OSError) as exc:
        print(f"censored-erm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
