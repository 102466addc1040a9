"""Kernel-coefficient (beta) estimators and the stabilizer (p) estimator.

All functions return one value per view and raise :class:`EstimatorError` when
the estimate would disable the kernel (zero or negative beta).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import MultiViewDataset

P_MIN = 1.0
P_MAX = 10.0
EXP_FLOOR = -700.0


class EstimatorError(ValueError):
    pass


def _check_positive(beta: np.ndarray, what: str, strict_zero_msg: str) -> np.ndarray:
    for h, b in enumerate(beta):
        if not np.isfinite(b):
            raise EstimatorError(f"{what}: non-finite beta for view {h}")
        if b <= 0:
            raise EstimatorError(f"{what}: {strict_zero_msg} (view {h}, beta={b!r})")
    return beta


def beta_mean_center_scaled(ds: MultiViewDataset, c: int, t: int = 1) -> np.ndarray:
    """beta_h = c / (t n) * sum of the per-feature means of view h.

    ``t`` is a free positive scale count (its meaning is not pinned down by
    the method's description), so it is left to the caller.
    """
    if c < 1:
        raise EstimatorError("c must be >= 1")
    if t < 1:
        raise EstimatorError("t must be >= 1")
    n = ds.n
    beta = np.array([c / (t * n) * v.mean(axis=0).sum() for v in ds.views])
    return _check_positive(beta, "mean-center-scaled", "nonpositive view mean-sum")


def beta_mean_absolute_deviation(ds: MultiViewDataset) -> np.ndarray:
    """beta_h = mean Euclidean distance of the rows of view h to their mean."""
    beta = np.array([np.linalg.norm(v - v.mean(axis=0), axis=1).mean() for v in ds.views])
    return _check_positive(beta, "mean-absolute-deviation", "all rows identical")


def beta_center_spread(ds: MultiViewDataset, centers: Sequence[np.ndarray]) -> np.ndarray:
    """Spread between the farthest and nearest center.

    For each center ``a_k`` take ``sqrt(mean_i ||x_i - a_k||)`` and return
    max minus min over ``k``.  Recomputed per iteration when selected, since it
    depends on the centers.
    """
    out = []
    for h, (v, a) in enumerate(zip(ds.views, centers)):
        a = np.asarray(a, dtype=np.float64)
        if a.shape[0] < 2:
            raise EstimatorError("center-spread beta needs at least 2 clusters")
        dist = np.sqrt(((v[:, None, :] - a[None, :, :]) ** 2).sum(axis=2))
        r = np.sqrt(dist.mean(axis=0))
        out.append(r.max() - r.min())
    return _check_positive(np.array(out), "center-spread", "coincident center spreads")


def beta_inverse_variance(ds: MultiViewDataset) -> np.ndarray:
    """beta_h = n / sum_i ||x_i - mean||^2."""
    out = []
    for h, v in enumerate(ds.views):
        ss = ((v - v.mean(axis=0)) ** 2).sum()
        if ss <= 0:
            raise EstimatorError(f"inverse-variance: view {h} is constant")
        out.append(v.shape[0] / ss)
    return _check_positive(np.array(out), "inverse-variance", "constant view")


BETA_KINDS = ("fixed", "eq9", "eq10", "eq11", "invvar")


@dataclass(frozen=True)
class BetaPolicy:
    """How the solver obtains beta.

    ``kind`` is one of ``fixed`` (``values`` per view), ``eq9`` (mean-center
    scaled, uses ``t``), ``eq10`` (mean absolute deviation), ``eq11``
    (center spread, refreshed every iteration) or ``invvar``.
    """

    kind: str = "eq10"
    values: Optional[tuple] = None
    t: int = 1
    refresh: Optional[str] = None

    def __post_init__(self):
        if self.kind not in BETA_KINDS:
            raise ValueError(f"unknown beta policy {self.kind!r}; expected one of {BETA_KINDS}")
        if self.kind == "fixed":
            if not self.values:
                raise ValueError("fixed beta policy needs values")
            vals = tuple(float(b) for b in self.values)
            if any(not (b > 0) or not np.isfinite(b) for b in vals):
                raise ValueError(f"fixed beta values must be strictly positive: {vals}")
            object.__setattr__(self, "values", vals)
        if self.t < 1:
            raise ValueError("t must be >= 1")
        refresh = self.refresh or ("per-iteration" if self.kind == "eq11" else "once")
        if refresh not in ("once", "per-iteration"):
            raise ValueError(f"unknown refresh mode {refresh!r}")
        object.__setattr__(self, "refresh", refresh)

    @classmethod
    def parse(cls, text: str) -> "BetaPolicy":
        """Parse ``fixed:v1,v2``, ``eq9[:t]``, ``eq10``, ``eq11`` or ``invvar``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "fixed":
            try:
                values = tuple(float(x) for x in arg.split(",") if x.strip())
            except ValueError:
                raise ValueError(f"bad fixed beta values: {arg!r}") from None
            return cls("fixed", values=values)
        if kind == "eq9":
            return cls("eq9", t=int(arg) if arg else 1)
        if arg:
            raise ValueError(f"beta policy {kind!r} takes no argument")
        return cls(kind)

    def label(self) -> str:
        if self.kind == "fixed":
            return "fixed:" + ",".join(repr(v) for v in self.values)
        if self.kind == "eq9":
            return f"eq9:{self.t}"
        return self.kind

    def estimate(self, ds: MultiViewDataset, c: int, centers=None) -> np.ndarray:
        if self.kind == "fixed":
            if len(self.values) != ds.s:
                raise EstimatorError(f"fixed beta lists {len(self.values)} values for {ds.s} views")
            return np.array(self.values)
        if self.kind == "eq9":
            return beta_mean_center_scaled(ds, c, self.t)
        if self.kind == "eq10":
            return beta_mean_absolute_deviation(ds)
        if self.kind == "invvar":
            return beta_inverse_variance(ds)
        if centers is None:
            raise EstimatorError("center-spread beta needs centers")
        return beta_center_spread(ds, centers)


@dataclass(frozen=True)
class StabilizerPolicy:
    kind: str = "fixed"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("fixed", "mountain"):
            raise ValueError(f"unknown stabilizer policy {self.kind!r}")
        if self.kind == "fixed" and not (self.p >= 1):
            raise ValueError(f"user-fixed p must be >= 1, got {self.p}")


def estimate_p_mountain(
    ds: MultiViewDataset,
    trial_assign: np.ndarray,
    centers: Sequence[np.ndarray],
    beta: Sequence[float],
) -> float:
    """Mountain-function estimate of the stabilizer p, clamped to [1, 10].

    For every cluster k::

        T_k = sum_h sum_i exp(-beta_h ||x_i - a_k||^2)
              + sum_h exp(-beta_h ||xbar - xbar_k||^2)

    where ``xbar`` is the view mean and ``xbar_k`` the mean of the rows the
    trial partition puts in cluster k (clusters empty in the trial partition
    contribute no second term).  The estimate is ``s / max_k T_k``.

    The published formula has unbalanced brackets and an unclear aggregation
    over views; this is one consistent reading of it, not a verified one.
    """
    trial_assign = np.asarray(trial_assign)
    if trial_assign.shape != (ds.n,):
        raise EstimatorError("trial partition length does not match the dataset")
    c = len(centers[0])
    if trial_assign.min() < 0 or trial_assign.max() >= c:
        raise EstimatorError("trial partition labels must lie in [0, c)")
    T = np.zeros(c)
    for v, a, b in zip(ds.views, centers, beta):
        a = np.asarray(a, dtype=np.float64)
        d2 = ((v[:, None, :] - a[None, :, :]) ** 2).sum(axis=2)
        T += np.exp(np.maximum(-b * d2, EXP_FLOOR)).sum(axis=0)
        xbar = v.mean(axis=0)
        for k in range(c):
            members = trial_assign == k
            if members.any():
                dk = ((xbar - v[members].mean(axis=0)) ** 2).sum()
                T[k] += np.exp(max(-b * dk, EXP_FLOOR))
    peak = T.max()
    if not peak > 0:
        return P_MAX
    return float(min(P_MAX, max(P_MIN, ds.s / peak)))
