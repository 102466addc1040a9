"""Multi-restart experiments, hyperparameter sweeps and min/avg/max reports.

A run directory holds::

    run.json                 config, dataset summary, aggregate min/avg/max
    restarts.csv             one deterministic row per restart
    timings.csv              wall-clock seconds per restart (not deterministic)
    restarts/restart_NNNN.json   full FitResult + metrics for each restart

Restart ``r`` is fitted with seed ``base_seed + r``; restarts can run in a
process pool and are merged by index, so serial and parallel runs agree.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import MultiViewDataset
from .estimators import BetaPolicy
from .metrics import METRIC_NAMES, MetricReport, evaluate
from .rng import restart_seed
from .solver import SolverConfig, fit

log = logging.getLogger(__name__)

RESTART_COLUMNS = ("restart", "seed", "objective", "iterations", "converged") + METRIC_NAMES


@dataclass
class RestartRecord:
    restart: int
    seed: int
    objective: float
    iterations: int
    converged: bool
    metrics: Optional[MetricReport]
    wall_clock: float = 0.0
    fit: Optional[dict] = None

    def csv_row(self) -> list[str]:
        row = [str(self.restart), str(self.seed), repr(float(self.objective)), str(self.iterations),
               str(int(self.converged))]
        row += self.metrics.csv_row() if self.metrics is not None else [""] * len(METRIC_NAMES)
        return row


def aggregate(values: Sequence[float]) -> dict:
    """min / avg / max; avg is the correctly rounded mean, clipped into [min, max]."""
    values = [float(v) for v in values]
    lo, hi = min(values), max(values)
    avg = min(hi, max(lo, math.fsum(values) / len(values)))
    return {"min": lo, "avg": avg, "max": hi}


@dataclass
class RunReport:
    config: SolverConfig
    records: list
    base_seed: int
    dataset: str = ""
    n: int = 0
    s: int = 0

    @property
    def has_metrics(self) -> bool:
        return all(r.metrics is not None for r in self.records)

    def aggregates(self) -> dict:
        out = {"objective": aggregate([r.objective for r in self.records])}
        if self.has_metrics:
            for name in METRIC_NAMES:
                out[name] = aggregate([getattr(r.metrics, name) for r in self.records])
        return out

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "n": self.n,
            "s": self.s,
            "config": self.config.to_dict(),
            "restarts": len(self.records),
            "base_seed": self.base_seed,
            "has_metrics": self.has_metrics,
            "aggregate": self.aggregates(),
        }

    def restarts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESTART_COLUMNS)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("restart", "wall_clock_s"))
        for r in self.records:
            w.writerow((r.restart, f"{r.wall_clock:.6f}"))
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "run.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        (out_dir / "restarts.csv").write_text(self.restarts_csv())
        (out_dir / "timings.csv").write_text(self.timings_csv())
        return out_dir


def _restart_file(out_dir: Path, restart: int) -> Path:
    return out_dir / "restarts" / f"restart_{restart:04d}.json"


def run_restart(ds: MultiViewDataset, config: SolverConfig, restart: int, base_seed: int,
                with_metrics: bool = True, out_dir=None) -> RestartRecord:
    seed = restart_seed(base_seed, restart)
    t0 = time.perf_counter()
    result = fit(ds, replace(config, seed=seed))
    elapsed = time.perf_counter() - t0
    metrics = evaluate(result.assign, ds.labels) if with_metrics and ds.labels is not None else None
    record = RestartRecord(
        restart=restart,
        seed=seed,
        objective=result.objective,
        iterations=result.iterations,
        converged=result.converged,
        metrics=metrics,
        wall_clock=elapsed,
        fit=result.to_dict(),
    )
    if out_dir is not None:
        path = _restart_file(Path(out_dir), restart)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"restart": restart, "seed": seed, "metrics": None if metrics is None else metrics.to_dict(),
                   "fit": record.fit}
        path.write_text(json.dumps(payload) + "\n")
    return record


def _run_restart_args(args):
    return run_restart(*args)


def run_experiment(
    ds: MultiViewDataset,
    config: SolverConfig,
    restarts: int = 50,
    base_seed: int = 0,
    workers: int = 1,
    out_dir=None,
    with_metrics: bool = True,
    keep_fits: bool = False,
) -> RunReport:
    """Fit ``restarts`` times with seeds ``base_seed + r`` and score each fit.

    With ``out_dir`` the per-restart JSON files and the merged report are
    written there.  ``keep_fits`` retains each FitResult dict on the records.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if with_metrics and ds.labels is None:
        log.warning("dataset has no labels; metrics omitted")
    jobs = [(ds, config, r, base_seed, with_metrics, out_dir) for r in range(restarts)]
    if workers > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_restart_args, jobs))
    else:
        records = [run_restart(*job) for job in jobs]
    records.sort(key=lambda r: r.restart)
    if not keep_fits:
        for r in records:
            r.fit = None
    report = RunReport(config, records, base_seed, dataset=ds.name, n=ds.n, s=ds.s)
    if out_dir is not None:
        report.write(out_dir)
    return report


def read_restarts_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def recompute_aggregates(rows: list[dict]) -> dict:
    """Aggregates rebuilt from parsed ``restarts.csv`` rows (for consistency checks)."""
    out = {"objective": aggregate([float(r["objective"]) for r in rows])}
    if rows and all(r["ari"] != "" for r in rows):
        for name in METRIC_NAMES:
            out[name] = aggregate([float(r[name]) for r in rows])
    return out


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    index: int
    alpha: float
    p: float
    beta: Optional[str]
    report: RunReport


def run_sweep(
    ds: MultiViewDataset,
    base: SolverConfig,
    alphas: Sequence[float],
    ps: Sequence[float] = (),
    betas: Sequence[str] = (),
    restarts: int = 50,
    base_seed: int = 0,
    workers: int = 1,
    out_dir=None,
) -> list[SweepCell]:
    """Cartesian grid over alpha x p x beta policy; empty p/beta grids keep the base value."""
    alphas = list(alphas)
    ps = list(ps) or [base.p]
    beta_grid = list(betas) or [None if base.beta is None else base.beta.label()]
    if not alphas:
        raise ValueError("empty alpha grid")
    cells = []
    index = 0
    for alpha in alphas:
        for p in ps:
            for beta in beta_grid:
                policy = None if beta is None else BetaPolicy.parse(beta)
                config = replace(base, alpha=float(alpha), p=float(p), beta=policy)
                cell_dir = None if out_dir is None else Path(out_dir) / f"cell_{index:03d}"
                report = run_experiment(ds, config, restarts, base_seed, workers, cell_dir)
                label = None if config.beta is None else config.beta.label()
                cells.append(SweepCell(index, float(alpha), float(p), label, report))
                index += 1
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "summary.csv").write_text(sweep_summary_csv(cells))
    return cells


SUMMARY_COLUMNS = ("cell", "algorithm", "alpha", "p", "beta", "ari_min", "ari_avg", "ari_max",
                   "nmi_avg", "acc_avg", "f_score_avg", "objective_avg")


def sweep_summary_csv(cells: Sequence[SweepCell]) -> str:
    """One row per cell, sorted by average ARI (best first; grid order breaks ties)."""
    def key(cell):
        agg = cell.report.aggregates()
        return (-agg["ari"]["avg"] if "ari" in agg else 0.0, cell.index)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for cell in sorted(cells, key=key):
        agg = cell.report.aggregates()
        m = lambda name, stat: repr(agg[name][stat]) if name in agg else ""
        w.writerow([cell.index, cell.report.config.algorithm, repr(cell.alpha), repr(cell.p), cell.beta or "",
                    m("ari", "min"), m("ari", "avg"), m("ari", "max"), m("nmi", "avg"), m("acc", "avg"),
                    m("f_score", "avg"), m("objective", "avg")])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

class ReportError(ValueError):
    pass


def load_run(run_dir) -> dict:
    path = Path(run_dir) / "run.json"
    if not path.is_file():
        raise ReportError(f"missing run file: {path}")
    try:
        summary = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"corrupt run file {path}: {exc}") from None
    if "aggregate" not in summary or "config" not in summary:
        raise ReportError(f"corrupt run file {path}: missing keys")
    return summary


def _run_label(summary: dict) -> str:
    cfg = summary["config"]
    parts = [cfg["algorithm"], f"a={cfg['alpha']:g}"]
    if cfg["algorithm"] == "gkmvkm":
        parts.append(f"p={cfg['p']:g}" if cfg.get("stabilizer") != "mountain" else "p=mountain")
    if cfg.get("beta"):
        parts.append(f"b={cfg['beta']}")
    return " ".join(parts)


def _triple(agg: dict) -> str:
    return f"{agg['min']:.4f}/{agg['avg']:.4f}/{agg['max']:.4f}"


def report_rows(summaries: Sequence[dict]) -> tuple[list[str], list[list[str]]]:
    """Header and cells of the min/avg/max table; the best average per column gets a ``*``."""
    header = ["run"] + [name.upper() if name in ("nmi", "ari", "acc") else name.replace("_", "-").title()
                        for name in METRIC_NAMES]
    best = {}
    for name in METRIC_NAMES:
        avgs = [s["aggregate"][name]["avg"] for s in summaries if name in s["aggregate"]]
        if len(summaries) > 1 and avgs:
            best[name] = max(avgs)
    rows = []
    for s in summaries:
        row = [_run_label(s)]
        for name in METRIC_NAMES:
            agg = s["aggregate"].get(name)
            if agg is None:
                row.append("-")
                continue
            cell = _triple(agg)
            if name in best and agg["avg"] == best[name]:
                cell += "*"
            row.append(cell)
        rows.append(row)
    return header, rows


def render_text(header, rows) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
