"""Command-line entry point: ``mvkm {synth,fit,sweep,report,validate}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import ReportError, load_run, render_csv, render_text, report_rows, run_experiment, run_sweep
from .data import (
    BENCHMARK_MEANS,
    BENCHMARK_MIXING,
    BENCHMARK_SCALES,
    DataError,
    MultiViewDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    validate,
)
from .estimators import BetaPolicy, EstimatorError
from .solver import ALGORITHMS, NumericalError, SolverConfig, SolverError

log = logging.getLogger("mvkm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _synthetic_spec(args_or_opts: dict) -> SyntheticSpec:
    kwargs = {}
    for key in ("n", "seed"):
        if args_or_opts.get(key) is not None:
            kwargs[key] = int(args_or_opts[key])
    if args_or_opts.get("mixing") is not None:
        kwargs["mixing"] = tuple(args_or_opts["mixing"])
    if args_or_opts.get("scales") is not None:
        kwargs["covariance_scales"] = tuple(args_or_opts["scales"])
    if args_or_opts.get("means") is not None:
        kwargs["means"] = args_or_opts["means"]
    return SyntheticSpec(**kwargs)


def resolve_dataset(ref: str) -> MultiViewDataset:
    """A manifest path, or ``synthetic:[n=..,seed=..]`` for the generated benchmark."""
    if ref.startswith("synthetic:"):
        opts = {}
        body = ref[len("synthetic:"):]
        for item in filter(None, body.split(",")):
            key, sep, value = item.partition("=")
            if not sep or key not in ("n", "seed"):
                raise UsageError(f"bad synthetic option {item!r}; use n=<int>,seed=<int>")
            opts[key] = value
        return generate_synthetic(_synthetic_spec(opts))
    return load_dataset(ref)


def write_plot_data(path, ds: MultiViewDataset, pred=None) -> None:
    """Tidy long-format scatter data: one row per (sample, view, feature)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("sample", "view", "feature", "value", "label", "pred"))
        for h, v in enumerate(ds.views):
            for i in range(ds.n):
                label = "" if ds.labels is None else int(ds.labels[i])
                p = "" if pred is None else int(pred[i])
                for j in range(v.shape[1]):
                    w.writerow((i, h + 1, j + 1, repr(float(v[i, j])), label, p))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.paper_default:
        for name in ("n", "mixing", "scales", "means"):
            if getattr(args, name) is not None:
                raise UsageError(f"--paper-default cannot be combined with --{name}")
    means = None
    if args.means is not None:
        try:
            means = json.loads(args.means)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--means must be JSON: {exc}") from None
    try:
        spec = _synthetic_spec({"n": args.n, "seed": args.seed, "mixing": args.mixing,
                                "scales": args.scales, "means": means})
    except DataError as exc:
        raise UsageError(str(exc)) from None
    ds = generate_synthetic(spec)
    out = Path(args.out)
    try:
        manifest = save_dataset(ds, out, name=f"synthetic-n{spec.n}-seed{spec.seed}")
        if args.plot_data:
            write_plot_data(args.plot_data, ds)
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from None
    report = validate(ds).to_dict()
    report["manifest"] = str(manifest)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _solver_config(args, ds: MultiViewDataset) -> SolverConfig:
    c = args.c
    if c is None:
        if ds.labels is None:
            raise UsageError("--c is required when the dataset has no labels")
        c = len(np.unique(ds.labels))
    beta = None
    if args.beta is not None:
        try:
            beta = BetaPolicy.parse(args.beta)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    stabilizer, p = "fixed", 2.0
    if args.p is not None:
        if args.p == "mountain":
            stabilizer = "mountain"
        else:
            try:
                p = float(args.p)
            except ValueError:
                raise UsageError(f"--p must be a number or 'mountain', got {args.p!r}") from None
    try:
        return SolverConfig(
            algorithm=args.algo, c=c, alpha=args.alpha, p=p, stabilizer=stabilizer, beta=beta,
            epsilon=args.epsilon, max_iter=args.max_iter, init=args.init, seed=args.seed,
            reseed_empty=args.reseed_empty, kmeans_n_init=args.init_runs,
        )
    except SolverError as exc:
        raise UsageError(str(exc)) from None


def _print_summary(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, indent=2))
        return
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("metric", "min", "avg", "max"))
    for name, agg in summary["aggregate"].items():
        w.writerow((name, repr(agg["min"]), repr(agg["avg"]), repr(agg["max"])))


def cmd_fit(args) -> int:
    ds = resolve_dataset(args.data)
    config = _solver_config(args, ds)
    if args.restarts < 1:
        raise UsageError("--restarts must be >= 1")
    report = run_experiment(ds, config, args.restarts, args.seed, args.workers, args.out,
                            with_metrics=not args.no_metrics, keep_fits=bool(args.plot_data))
    if args.plot_data:
        write_plot_data(args.plot_data, ds, report.records[0].fit["assignments"])
    _print_summary(report.summary(), args.format)
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = resolve_dataset(args.data)
    base = _solver_config(args, ds)
    if not args.alphas:
        raise UsageError("empty grid: --alphas needs at least one value")
    try:
        cells = run_sweep(ds, base, args.alphas, args.ps or (), args.betas or (), args.restarts, args.seed,
                          args.workers, args.out)
    except ValueError as exc:
        if isinstance(exc, (DataError, EstimatorError)):
            raise
        raise UsageError(str(exc)) from None
    summary = Path(args.out) / "summary.csv"
    sys.stdout.write(summary.read_text())
    log.info("%d cells written under %s", len(cells), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        summaries = [load_run(d) for d in args.runs]
    except ReportError as exc:
        raise DataError(str(exc)) from None
    header, rows = report_rows(summaries)
    text = render_csv(header, rows) if args.format == "csv" else render_text(header, rows)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(render_csv(header, rows))
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = resolve_dataset(args.data)
    report = validate(ds)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.ok else EXIT_DATA


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="manifest path or synthetic:[n=..,seed=..]")
    p.add_argument("--algo", choices=ALGORITHMS, default="mvkm-ed")
    p.add_argument("--c", type=int, default=None, help="cluster count (default: number of label values)")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--p", default=None, help="stabilizer for gkmvkm: number >= 1 or 'mountain'")
    p.add_argument("--beta", default=None, help="fixed:<v,..> | eq9[:t] | eq10 | eq11 | invvar")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--init", choices=("random", "svkm"), default="svkm")
    p.add_argument("--init-runs", type=int, default=10, help="k-means++ seedings tried by the svkm initializer")
    p.add_argument("--reseed-empty", action="store_true")
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="base seed; restart r uses seed + r")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-metrics", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvkm", description="Multi-view k-means toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic 3-view benchmark")
    p.add_argument("--paper-default", action="store_true", help="use the published settings (n=10000)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--mixing", type=_floats, default=None)
    p.add_argument("--scales", type=_floats, default=None)
    p.add_argument("--means", default=None, help="JSON list (views) of 4 two-dimensional means")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth")
    p.add_argument("--plot-data", default=None, help="also write long-format scatter CSV here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="multi-restart fit with min/avg/max metrics")
    _add_solver_args(p)
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--plot-data", default=None, help="long-format scatter CSV with restart-0 predictions")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="grid over alpha, p and beta policy")
    _add_solver_args(p)
    p.add_argument("--alphas", type=_floats, required=True)
    p.add_argument("--ps", type=_floats, default=None)
    p.add_argument("--betas", type=lambda s: [b for b in s.split(";") if b], default=None,
                   help="semicolon-separated beta policies, e.g. 'eq10;invvar'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render min/avg/max tables from run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", default=None, help="also write the table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check a dataset")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mvkm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EstimatorError) as exc:
        print(f"mvkm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"mvkm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"mvkm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
