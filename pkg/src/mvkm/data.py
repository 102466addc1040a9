"""Multi-view dataset container, CSV/manifest I/O and the synthetic GMM generator."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rng import make_rng, standard_normal


class DataError(ValueError):
    """Raised for malformed or inconsistent dataset inputs."""


@dataclass(frozen=True)
class MultiViewDataset:
    """n samples described by ``s`` dense views of differing widths.

    Arrays are copied to float64 and made read-only, so a dataset can be shared
    between concurrent solver runs.  Finiteness is *not* enforced here; use
    :func:`validate` (loaders and solvers do).
    """

    views: tuple
    labels: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        views = tuple(np.array(v, dtype=np.float64, copy=True) for v in self.views)
        if not views:
            raise DataError("dataset needs at least one view")
        n = views[0].shape[0] if views[0].ndim == 2 else -1
        for h, v in enumerate(views):
            if v.ndim != 2:
                raise DataError(f"view {h} must be 2-dimensional, got shape {v.shape}")
            if v.shape[1] < 1:
                raise DataError(f"view {h} has no feature columns")
            if v.shape[0] != n:
                raise DataError(f"view {h} has {v.shape[0]} rows, expected {n}")
            v.setflags(write=False)
        if n < 1:
            raise DataError("dataset has no samples")
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.array(self.labels, copy=True)
            if labels.ndim != 1 or labels.shape[0] != n:
                raise DataError(f"labels must have length {n}, got shape {labels.shape}")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.equal(np.mod(labels, 1), 0)):
                    raise DataError("labels must be integers")
            labels = labels.astype(np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def s(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    def concatenated(self) -> np.ndarray:
        return np.hstack(self.views)

    def subset(self, idx) -> "MultiViewDataset":
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return MultiViewDataset(tuple(v[idx] for v in self.views), labels, self.name)


@dataclass
class ValidationReport:
    ok: bool
    n: int
    s: int
    dims: list[int]
    has_labels: bool
    finite: bool
    nonfinite: list[tuple[int, int, int]] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "n": self.n,
            "s": self.s,
            "dims": list(self.dims),
            "has_labels": self.has_labels,
            "finite": self.finite,
            "nonfinite": [list(t) for t in self.nonfinite],
            "problems": list(self.problems),
        }


def validate(ds: MultiViewDataset, max_listed: int = 20) -> ValidationReport:
    """Report structural facts and non-finite cells as ``(view, row, col)``."""
    nonfinite: list[tuple[int, int, int]] = []
    n_bad = 0
    for h, v in enumerate(ds.views):
        bad = np.argwhere(~np.isfinite(v))
        n_bad += len(bad)
        for r, c in bad[: max(0, max_listed - len(nonfinite))]:
            nonfinite.append((h, int(r), int(c)))
    problems = []
    if n_bad:
        problems.append(f"{n_bad} non-finite value(s)")
    return ValidationReport(
        ok=not problems,
        n=ds.n,
        s=ds.s,
        dims=ds.dims,
        has_labels=ds.labels is not None,
        finite=n_bad == 0,
        nonfinite=nonfinite,
        problems=problems,
    )


# ---------------------------------------------------------------------------
# CSV / manifest I/O
# ---------------------------------------------------------------------------

def _read_matrix(path: Path, has_header: bool) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        if has_header:
            next(reader, None)
        for lineno, row in enumerate(reader, start=2 if has_header else 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
    if not rows:
        raise DataError(f"empty view file: {path}")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: row {i} has {len(r)} columns, expected {width}")
    return np.array(rows, dtype=np.float64)


def _read_labels(path: Path, has_header: bool) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        if has_header:
            next(reader, None)
        for lineno, row in enumerate(reader, start=1):
            if not row or not row[0].strip():
                continue
            try:
                out.append(int(row[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer label {row[0]!r}") from None
    return np.array(out, dtype=np.int64)


def load_dataset(manifest_path) -> MultiViewDataset:
    """Load a dataset from a JSON manifest.

    The manifest looks like ``{"name": str, "views": [path, ...], "labels":
    path|null, "has_header": bool}``; relative paths resolve against the
    manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from None
    view_paths = manifest.get("views") or []
    if not view_paths:
        raise DataError(f"{manifest_path}: manifest lists no views")
    base = manifest_path.parent
    has_header = bool(manifest.get("has_header", False))

    views = [_read_matrix(base / p, has_header) for p in view_paths]
    n = views[0].shape[0]
    for p, v in zip(view_paths, views):
        if v.shape[0] != n:
            raise DataError(f"row-count mismatch: {view_paths[0]} has {n} rows, {p} has {v.shape[0]}")
    labels = None
    if manifest.get("labels"):
        labels = _read_labels(base / manifest["labels"], has_header)
        if labels.shape[0] != n:
            raise DataError(f"row-count mismatch: labels have {labels.shape[0]} rows, views have {n}")

    ds = MultiViewDataset(tuple(views), labels, manifest.get("name", ""))
    report = validate(ds)
    if not report.ok:
        raise DataError(f"{manifest_path}: " + "; ".join(report.problems))
    return ds


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerows(rows)


def save_dataset(ds: MultiViewDataset, out_dir, name: Optional[str] = None) -> Path:
    """Write ``manifest.json`` plus one CSV per view (and labels) into ``out_dir``.

    Floats are written with ``repr`` so a reload reproduces them bit for bit.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    view_files = []
    for h, v in enumerate(ds.views):
        fname = f"view{h + 1}.csv"
        _write_rows(out_dir / fname, ([repr(float(x)) for x in row] for row in v))
        view_files.append(fname)
    labels_file = None
    if ds.labels is not None:
        labels_file = "labels.csv"
        _write_rows(out_dir / labels_file, ([str(int(y))] for y in ds.labels))
    manifest = {
        "name": name if name is not None else ds.name,
        "views": view_files,
        "labels": labels_file,
        "has_header": False,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


# ---------------------------------------------------------------------------
# Synthetic three-view Gaussian mixture
# ---------------------------------------------------------------------------

BENCHMARK_MIXING = (0.3, 0.15, 0.15, 0.4)
BENCHMARK_MEANS = (
    ((-10.0, -5.0), (-9.0, 11.0), (0.0, 6.0), (4.0, 0.0)),
    ((-8.0, -12.0), (-6.0, -3.0), (-2.0, 7.0), (2.0, 1.0)),
    ((-5.0, -10.0), (-8.0, -1.0), (0.0, 5.0), (5.0, -4.0)),
)
BENCHMARK_SCALES = (1.0, 3.0, 2.0, 0.5)


@dataclass(frozen=True)
class SyntheticSpec:
    """Mixture of 4 isotropic Gaussians observed in several 2-D views.

    ``covariance_scales[k]`` multiplies the 2x2 identity for cluster ``k`` in
    every view.
    """

    n: int = 10000
    mixing: tuple = BENCHMARK_MIXING
    means: tuple = BENCHMARK_MEANS
    covariance_scales: tuple = BENCHMARK_SCALES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mixing", tuple(float(a) for a in self.mixing))
        object.__setattr__(
            self, "means", tuple(tuple(tuple(float(x) for x in m) for m in view) for view in self.means)
        )
        object.__setattr__(self, "covariance_scales", tuple(float(c) for c in self.covariance_scales))
        self.check()

    def check(self) -> None:
        if self.n < 1:
            raise DataError("n must be >= 1")
        k = len(self.mixing)
        if k != 4:
            raise DataError(f"expected 4 mixing proportions, got {k}")
        if any(not (a > 0) for a in self.mixing):
            raise DataError(f"mixing proportions must be positive: {self.mixing}")
        if not math.isclose(sum(self.mixing), 1.0, rel_tol=0, abs_tol=1e-9):
            raise DataError(f"mixing proportions must sum to 1, got {sum(self.mixing)}")
        if not self.means:
            raise DataError("at least one view of means is required")
        for h, view in enumerate(self.means):
            if len(view) != k:
                raise DataError(f"view {h} lists {len(view)} means, expected {k}")
            if any(len(m) != 2 for m in view):
                raise DataError(f"view {h}: every mean must be 2-dimensional")
        if len(self.covariance_scales) != k:
            raise DataError(f"expected {k} covariance scales")
        if any(not (c > 0) for c in self.covariance_scales):
            raise DataError("covariance scales must be positive")


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Sample the multi-view mixture described by ``spec``.

    Cluster indices come from inverse-CDF sampling of the mixing proportions
    (listing order), coordinates from Box-Muller normals, both drawn from the
    seeded PCG64 stream so the output is a pure function of ``spec``.
    """
    rng = make_rng(spec.seed)
    cdf = np.cumsum(spec.mixing)
    cdf[-1] = 1.0
    labels = np.searchsorted(cdf, rng.random(spec.n), side="right").astype(np.int64)
    sd = np.sqrt(np.asarray(spec.covariance_scales))[labels][:, None]
    views = []
    for view_means in spec.means:
        means = np.asarray(view_means)[labels]
        views.append(means + sd * standard_normal(rng, (spec.n, 2)))
    return MultiViewDataset(tuple(views), labels, name=f"synthetic-n{spec.n}-seed{spec.seed}")


def toy_manifest_path() -> Path:
    """Manifest of the bundled 50-sample, 3-view toy corpus."""
    return Path(os.path.dirname(__file__)) / "toydata" / "manifest.json"
