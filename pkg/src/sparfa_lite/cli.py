"""Command-line interface.

Exit codes: 0 success, 1 unreadable input or I/O failure, 2 usage or
validation error, 3 numerical failure in the solver.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import denoised_grades, tag_knowledge, tag_report_rows
from .data_io import (CV_METRICS, cross_validate_lambda, default_lambda_grid, load_matrix,
                      load_quantizer, load_responses, load_tags, save_quantizer, synthesize,
                      write_matrix, write_responses)
from .errors import DataFormatError, NumericalError, SparfaError, UnsupportedQuantizerError
from .protocol import run_holdout_trials
from .quantized_model import QuantizerSpec
from .solver import SolverConfig, fit

logger = logging.getLogger("sparfa_lite")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: object = None
    input_digests: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path) -> None:
        text = json.dumps(asdict(self), indent=2, sort_keys=True, default=str)
        Path(path).write_text(text + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(*paths) -> dict:
    return {str(p): sha256_file(p) for p in paths if p is not None}


# ---------------------------------------------------------------- argument types

def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not np.isfinite(x) or x <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _positive_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return x


def _fraction(text, closed_right=True):
    x = float(text)
    ok = 0 < x <= 1 if closed_right else 0 < x < 1
    if not ok:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1{']' if closed_right else ')'}, got {text}")
    return x


def _open_fraction(text):
    return _fraction(text, closed_right=False)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def default_interior(num_labels: int) -> list:
    """Unit-spaced boundaries centred on zero: P=2 -> [0], P=4 -> [-1, 0, 1]."""
    return [k - (num_labels - 2) / 2 for k in range(num_labels - 1)]


def _solver_options(args) -> dict:
    return {"max_iterations": args.max_iterations, "tolerance": args.tolerance}


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    if args.rank > min(args.questions, args.learners):
        raise UsageError(f"--rank {args.rank} exceeds min(--questions, --learners) = "
                         f"{min(args.questions, args.learners)}")
    interior = args.boundaries if args.boundaries is not None else default_interior(args.labels)
    if len(interior) != args.labels - 1:
        raise UsageError(f"--labels {args.labels} needs {args.labels - 1} boundaries, "
                         f"got {len(interior)}")
    try:
        q = QuantizerSpec.from_interior(interior)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    truth = synthesize(args.questions, args.learners, args.rank, q,
                       observed_fraction=args.observed, scale=args.scale, seed=args.seed)
    ds = truth.to_dataset(q)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_responses(out / "responses.csv", ds)
    save_quantizer(out / "quantizer.json", q)
    write_matrix(out / "z_true.csv", truth.Z_true, ds.question_ids, ds.learner_ids)
    config = {"questions": args.questions, "learners": args.learners, "rank": args.rank,
              "labels": args.labels, "interior_boundaries": interior,
              "observed": args.observed, "scale": args.scale, "out": str(out)}
    RunManifest("synth", config, seed=args.seed).write(out / "manifest.json")
    print(f"wrote {len(ds.responses)} responses for {args.questions} questions x "
          f"{args.learners} learners to {out}")
    return EXIT_OK


def _load_inputs(args):
    q = load_quantizer(args.quantizer)
    ds = load_responses(args.responses, q)
    return q, ds


def _grid(args, shape):
    if args.grid is not None:
        return args.grid
    return default_lambda_grid(*shape, num=args.grid_size)


def cmd_fit(args) -> int:
    if args.lam is None and not args.cv:
        raise UsageError("give --lambda or --cv")
    q, ds = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = _solver_options(args)
    config = {"responses": str(args.responses), "quantizer": str(args.quantizer),
              "out": str(out), **opts}
    lam = args.lam
    if args.cv:
        grid = _grid(args, ds.responses.shape)
        report = cross_validate_lambda(ds.responses, q, grid, folds=args.folds, seed=args.seed,
                                       metric=args.cv_metric, solver_options=opts)
        lam = report.best_lambda
        _write_cv(out / "cv.csv", report)
        config.update({"cv": True, "lambda_grid": grid, "folds": args.folds,
                       "cv_metric": args.cv_metric})
        print(f"cross-validation selected lambda = {lam:.6g}")
    config["lambda"] = lam
    result = fit(ds.responses, q, SolverConfig(lam=lam, **opts))
    write_matrix(out / "z_hat.csv", result.Z_hat, ds.question_ids, ds.learner_ids)
    with (out / "trace.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective", "best_objective"])
        best = np.inf
        for k, f in enumerate(result.objective_trace):
            best = min(best, f)
            w.writerow([k, repr(f), repr(best)])
    RunManifest("fit", config, seed=args.seed,
                input_digests=_digests(args.responses, args.quantizer)).write(out / "manifest.json")
    print(f"effective rank: {result.effective_rank}")
    print(f"final objective: {result.objective:.10g}")
    print(f"iterations: {result.iterations_used} (converged: {result.converged})")
    return EXIT_OK


def _write_cv(path, report) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "mean_loglik", "mean_lik", "mean_cor", "selected"])
        for k, lam in enumerate(report.lambda_grid):
            w.writerow([repr(lam), repr(float(report.mean_loglik[k])),
                        repr(float(report.mean_lik[k])), repr(float(report.mean_cor[k])),
                        int(lam == report.best_lambda)])


def format_metrics_table(result) -> str:
    names = result.metric_names
    lines = [f"{'':<6}{'SPARFA-Lite':>12}{'std':>9}{'baseline':>10}"]
    for m in names:
        lines.append(f"{m.upper():<6}{result.mean(m):>12.4f}{result.std(m):>9.4f}"
                     f"{result.baseline_mean(m):>10.4f}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    q, ds = _load_inputs(args)
    if args.auc and q.num_labels != 2:
        raise UnsupportedQuantizerError(
            f"AUC requested but the quantizer has {q.num_labels} labels; AUC needs binary data")
    with_auc = False if args.no_auc else (True if args.auc else None)
    opts = _solver_options(args)
    grid = None if args.lam is not None else _grid(args, ds.responses.shape)
    result = run_holdout_trials(ds.responses, q, trials=args.trials,
                                test_fraction=args.test_fraction, seed=args.seed, lam=args.lam,
                                lambda_grid=grid, folds=args.folds, cv_metric=args.cv_metric,
                                solver_options=opts, with_auc=with_auc)
    print(f"{len(ds.responses)} responses, {args.trials} trials, "
          f"{args.test_fraction:.0%} held out")
    print(format_metrics_table(result))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "mean", "std", "baseline"])
            for m in result.metric_names:
                w.writerow([m.upper(), repr(result.mean(m)), repr(result.std(m)),
                            repr(result.baseline_mean(m))])
        with (out / "trials.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "lambda", "effective_rank", *[m.upper() for m in result.metric_names]])
            for k, t in enumerate(result.trials):
                w.writerow([k, repr(t.lam), t.effective_rank,
                            *[repr(getattr(t.metrics, m)) for m in result.metric_names]])
        config = {"responses": str(args.responses), "quantizer": str(args.quantizer),
                  "trials": args.trials, "test_fraction": args.test_fraction,
                  "lambda": args.lam, "lambda_grid": grid, "folds": args.folds,
                  "cv_metric": args.cv_metric, "auc": with_auc, "out": str(out), **opts}
        RunManifest("eval", config, seed=args.seed,
                    input_digests=_digests(args.responses, args.quantizer)).write(out / "manifest.json")
    return EXIT_OK


def format_tag_table(rows, tag_names, learner_ids) -> str:
    width = max(12, *(len(t) + 2 for t in tag_names))
    head = f"{'':<24}" + "".join(f"{t:>{width}}" for t in tag_names)
    lines = [head]
    for label, learner, values in rows:
        name = label if learner is None else f"{label} ({learner_ids[learner]})"
        lines.append(f"{name:<24}" + "".join(f"{100 * v:>{width - 1}.0f}%" for v in values))
    return "\n".join(lines)


def cmd_analytics(args) -> int:
    Z, question_ids, learner_ids = load_matrix(args.z_hat)
    tags = load_tags(args.tags, question_ids)
    A = denoised_grades(Z)
    know = tag_knowledge(A, tags)
    rows = tag_report_rows(A, tags)
    print(format_tag_table(rows, tags.tag_names, learner_ids))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "tag_knowledge.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["learner_id", *tags.tag_names])
        for lid, row in zip(learner_ids, know.B):
            w.writerow([lid, *(repr(float(x)) for x in row)])
    with (out / "tag_report.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "learner_id", *tags.tag_names])
        for label, learner, values in rows:
            w.writerow([label, "" if learner is None else learner_ids[learner],
                        *(repr(float(x)) for x in values)])
    config = {"z_hat": str(args.z_hat), "tags": str(args.tags), "out": str(out)}
    RunManifest("analytics", config,
                input_digests=_digests(args.z_hat, args.tags)).write(out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_solver_flags(p):
    p.add_argument("--max-iterations", type=_positive_int, default=1000)
    p.add_argument("--tolerance", type=_positive_float, default=1e-6)


def _add_cv_flags(p):
    p.add_argument("--grid", type=_float_list, default=None,
                   help="comma-separated lambda grid (default: geometric over [0.1, 100]*sqrt(QN))")
    p.add_argument("--grid-size", type=_positive_int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-metric", choices=CV_METRICS, default="loglik")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparfa-lite", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw a synthetic low-rank dataset")
    p.add_argument("--questions", type=_positive_int, required=True)
    p.add_argument("--learners", type=_positive_int, required=True)
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--labels", type=_positive_int, default=2)
    p.add_argument("--boundaries", type=_float_list, default=None,
                   help="interior bin boundaries, comma-separated (default: unit-spaced around 0)")
    p.add_argument("--observed", type=_fraction, default=1.0)
    p.add_argument("--scale", type=_positive_float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth, subparser=p)

    p = sub.add_parser("fit", help="fit the score matrix for one lambda or by cross-validation")
    p.add_argument("--responses", required=True)
    p.add_argument("--quantizer", required=True)
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=None)
    p.add_argument("--cv", action="store_true")
    _add_cv_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit, subparser=p)

    p = sub.add_parser("eval", help="Monte-Carlo hold-out prediction experiment")
    p.add_argument("--responses", required=True)
    p.add_argument("--quantizer", required=True)
    p.add_argument("--trials", type=_positive_int, default=25)
    p.add_argument("--test-fraction", type=_open_fraction, default=0.2)
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=None,
                   help="fixed lambda; cross-validated per trial when omitted")
    auc = p.add_mutually_exclusive_group()
    auc.add_argument("--auc", action="store_true", help="require AUC (binary data only)")
    auc.add_argument("--no-auc", action="store_true")
    _add_cv_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval, subparser=p)

    p = sub.add_parser("analytics", help="tag-knowledge report from a fitted score matrix")
    p.add_argument("--z-hat", required=True)
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analytics, subparser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = args.subparser
    try:
        return args.func(args)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"{sub.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SparfaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
