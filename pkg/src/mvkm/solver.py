"""Single-view k-means and the multi-view k-means family.

All multi-view algorithms share one alternating-minimization loop.  Each
iteration performs, in order,

1. memberships: every sample goes to ``argmin_k sum_h v_h**alpha * D_h(x_i, a_k)``;
2. centers: (kernel-)weighted means of the members, with kernel weights
   evaluated at the previous centers;
3. view weights: ``v_h`` proportional to ``E_h ** (-1 / (alpha - 1))`` where
   ``E_h`` is the within-cluster dissimilarity of view ``h``.

``D_h`` is the squared Euclidean distance (``mvkmc``), ``1 - exp(-beta_h d^2)``
(``mvkm-ed``) or ``1 - exp(-p beta_h d^2)`` (``gkmvkm``).  Every step is a
coordinate-wise minimization (the kernel center step is a majorize-minimize
step), so the objective trace never increases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .data import MultiViewDataset, validate
from .estimators import EXP_FLOOR, BetaPolicy, estimate_p_mountain
from .rng import make_rng

log = logging.getLogger(__name__)

ALGORITHMS = ("kmeans", "mvkmc", "mvkm-ed", "gkmvkm")
KERNELIZED = ("mvkm-ed", "gkmvkm")
INIT_MODES = ("random", "svkm")
DEFAULT_BETA = {"mvkm-ed": "eq10", "gkmvkm": "invvar"}


class SolverError(ValueError):
    """Invalid configuration or dataset for a fit."""


class NumericalError(ArithmeticError):
    """The objective became non-finite."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings for one fit.

    ``p`` is used by ``gkmvkm`` only; set ``stabilizer="mountain"`` to estimate
    it from the initial partition instead.  ``beta=None`` selects the
    algorithm's default estimator (``eq10`` for ``mvkm-ed``, ``invvar`` for
    ``gkmvkm``).
    """

    algorithm: str = "mvkm-ed"
    c: int = 2
    alpha: float = 2.0
    p: float = 2.0
    stabilizer: str = "fixed"
    beta: Optional[BetaPolicy] = None
    epsilon: float = 1e-6
    max_iter: int = 100
    init: str = "svkm"
    seed: int = 0
    reseed_empty: bool = False
    kmeans_n_init: int = 10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise SolverError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if int(self.c) != self.c or self.c < 1:
            raise SolverError(f"c must be a positive integer, got {self.c}")
        if not (self.alpha > 1):
            raise SolverError(f"alpha must be > 1, got {self.alpha}")
        if self.stabilizer not in ("fixed", "mountain"):
            raise SolverError(f"unknown stabilizer mode {self.stabilizer!r}")
        if self.algorithm == "gkmvkm" and self.stabilizer == "fixed" and not (self.p >= 1):
            raise SolverError(f"p must be >= 1, got {self.p}")
        if not (self.epsilon > 0):
            raise SolverError("epsilon must be > 0")
        if self.max_iter < 1:
            raise SolverError("max_iter must be >= 1")
        if self.kmeans_n_init < 1:
            raise SolverError("kmeans_n_init must be >= 1")
        if self.init not in INIT_MODES:
            raise SolverError(f"unknown init {self.init!r}; expected one of {INIT_MODES}")
        if self.beta is None and self.algorithm in DEFAULT_BETA:
            object.__setattr__(self, "beta", BetaPolicy(DEFAULT_BETA[self.algorithm]))

    @property
    def kernelized(self) -> bool:
        return self.algorithm in KERNELIZED

    def kernel_power(self, p: Optional[float] = None) -> float:
        """Multiplier folded into the exponent: p for gkmvkm, 1 otherwise."""
        if self.algorithm == "gkmvkm":
            return float(self.p if p is None else p)
        return 1.0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "c": self.c,
            "alpha": self.alpha,
            "p": self.p,
            "stabilizer": self.stabilizer,
            "beta": None if self.beta is None else self.beta.label(),
            "epsilon": self.epsilon,
            "max_iter": self.max_iter,
            "init": self.init,
            "seed": self.seed,
            "reseed_empty": self.reseed_empty,
            "kmeans_n_init": self.kmeans_n_init,
        }


@dataclass
class FitResult:
    assign: np.ndarray
    weights: np.ndarray
    centers: list
    objective_trace: list
    iterations: int
    converged: bool
    empty_clusters: list = field(default_factory=list)
    zero_cost_views: bool = False
    beta: Optional[np.ndarray] = None
    p: Optional[float] = None

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self) -> dict:
        return {
            "assignments": [int(a) for a in self.assign],
            "weights": [float(w) for w in self.weights],
            "centers": [np.asarray(a).tolist() for a in self.centers],
            "objective_trace": [float(j) for j in self.objective_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "empty_clusters": [int(k) for k in self.empty_clusters],
            "zero_cost_views": self.zero_cost_views,
            "beta": None if self.beta is None else [float(b) for b in self.beta],
            "p": self.p,
        }


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def sq_distances(X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """(n, c) squared Euclidean distances, by explicit differences (no cancellation)."""
    out = np.empty((X.shape[0], A.shape[0]))
    for k in range(A.shape[0]):
        diff = X - A[k]
        out[:, k] = np.einsum("ij,ij->i", diff, diff)
    return out


def _kernel(d2: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma d2) with the exponent floored at -700."""
    return np.exp(np.maximum(-gamma * d2, EXP_FLOOR))


def _kernel_dissim(d2: np.ndarray, gamma: float) -> np.ndarray:
    return -np.expm1(np.maximum(-gamma * d2, EXP_FLOOR))


def kernel_dissimilarity(algorithm: str, x, a, beta_h: float = 1.0, p: float = 1.0) -> float:
    """Dissimilarity between one sample and one center in a single view."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x.shape != a.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {a.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(a))):
        raise ValueError("non-finite input")
    d2 = float(np.dot(x - a, x - a))
    if algorithm in ("kmeans", "mvkmc"):
        return d2
    if algorithm not in KERNELIZED:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if not (beta_h > 0):
        raise ValueError("beta must be > 0 for kernelized algorithms")
    gamma = beta_h * (p if algorithm == "gkmvkm" else 1.0)
    return float(_kernel_dissim(np.float64(d2), gamma))


def _gammas(config: SolverConfig, beta, p=None) -> Optional[np.ndarray]:
    if not config.kernelized:
        return None
    return np.asarray(beta, dtype=np.float64) * config.kernel_power(p)


def _dissim(config: SolverConfig, d2: np.ndarray, gamma) -> np.ndarray:
    if gamma is None:
        return d2
    return _kernel_dissim(d2, gamma)


def _view_factors(config: SolverConfig, weights) -> np.ndarray:
    if config.algorithm == "kmeans":
        return np.ones(len(weights))
    return np.asarray(weights, dtype=np.float64) ** config.alpha


def _resolve_beta(ds: MultiViewDataset, config: SolverConfig, beta, centers=None):
    if not config.kernelized:
        return None
    if beta is None:
        beta = config.beta.estimate(ds, config.c, centers)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (ds.s,) or not np.all(beta > 0):
        raise SolverError(f"beta must be {ds.s} positive values, got {beta}")
    return beta


def _cluster_means(X: np.ndarray, assign: np.ndarray, prev: np.ndarray):
    """Plain member means; empty clusters keep ``prev``."""
    c = prev.shape[0]
    counts = np.bincount(assign, minlength=c)
    sums = np.zeros_like(prev)
    np.add.at(sums, assign, X)
    out = prev.copy()
    full = counts > 0
    out[full] = sums[full] / counts[full, None]
    return out, ~full


def _weighted_cluster_means(X, assign, prev, d2_prev, gamma):
    """Kernel-weighted member means, weights exp(-gamma d2) at the previous center.

    Weights are rescaled per cluster by the largest one before averaging, which
    leaves the mean unchanged and keeps far-out clusters from underflowing.
    """
    c = prev.shape[0]
    out = prev.copy()
    empty = np.zeros(c, dtype=bool)
    d2_own = d2_prev[np.arange(X.shape[0]), assign]
    for k in range(c):
        members = assign == k
        if not members.any():
            empty[k] = True
            continue
        dk = d2_own[members]
        w = _kernel(dk - dk.min(), gamma)
        out[k] = w @ X[members] / w.sum()
    return out, empty


# ---------------------------------------------------------------------------
# update steps
# ---------------------------------------------------------------------------

def _assign_from_d2(config, d2s, weights, gammas) -> np.ndarray:
    factors = _view_factors(config, weights)
    if not config.kernelized:
        cost = sum(f * d2 for f, d2 in zip(factors, d2s))
        return np.argmin(cost, axis=1)
    # argmin sum_h f_h (1 - exp(-g_h d2)) == argmax sum_h f_h exp(-g_h d2); the
    # latter in log space stays discriminative where every 1 - exp() rounds to 1.
    with np.errstate(divide="ignore"):
        logf = np.log(factors)
    terms = np.stack([lf - g * d2 for lf, g, d2 in zip(logf, gammas, d2s)])
    return np.argmax(logsumexp(terms, axis=0), axis=1)


def update_memberships(ds, centers, weights, config: SolverConfig, beta=None, p=None) -> np.ndarray:
    """Hard assignment minimizing the weighted dissimilarity sum; lowest index wins ties."""
    beta = _resolve_beta(ds, config, beta, centers)
    d2s = [sq_distances(v, a) for v, a in zip(ds.views, centers)]
    return _assign_from_d2(config, d2s, weights, _gammas(config, beta, p))


def _centers_from_d2(ds, config, assign, centers_prev, d2s, gammas):
    new, flags = [], np.zeros(len(centers_prev[0]), dtype=bool)
    for h, (v, a) in enumerate(zip(ds.views, centers_prev)):
        a = np.asarray(a, dtype=np.float64)
        if gammas is None:
            ah, empty = _cluster_means(v, assign, a)
        else:
            ah, empty = _weighted_cluster_means(v, assign, a, d2s[h], gammas[h])
        new.append(ah)
        flags |= empty
    return new, flags


def update_centers(ds, assign, centers_prev, weights, config: SolverConfig, beta=None, p=None):
    """Returns ``(centers, empty_flags)``.

    The view weight ``v_h**alpha`` cancels from each center's stationarity
    condition, so ``weights`` does not influence the result.
    """
    beta = _resolve_beta(ds, config, beta, centers_prev)
    gammas = _gammas(config, beta, p)
    d2s = None
    if gammas is not None:
        d2s = [sq_distances(v, np.asarray(a)) for v, a in zip(ds.views, centers_prev)]
    return _centers_from_d2(ds, config, np.asarray(assign), centers_prev, d2s, gammas)


def view_costs(ds, assign, centers, config: SolverConfig, beta=None, p=None) -> np.ndarray:
    """E_h: summed member-to-own-center dissimilarity per view."""
    beta = _resolve_beta(ds, config, beta, centers)
    gammas = _gammas(config, beta, p)
    rows = np.arange(ds.n)
    out = []
    for h, (v, a) in enumerate(zip(ds.views, centers)):
        diff = v - np.asarray(a)[assign]
        d2 = np.einsum("ij,ij->i", diff, diff)
        out.append(_dissim(config, d2, None if gammas is None else gammas[h]).sum())
    return np.array(out)


def weights_from_costs(costs: np.ndarray, alpha: float):
    """Minimizer of ``sum_h v_h**alpha E_h`` over the simplex.

    Returns ``(weights, zero_cost)``; views with zero cost share all the weight.
    """
    costs = np.asarray(costs, dtype=np.float64)
    zero = costs <= 0
    if zero.any():
        w = zero / zero.sum()
        return w.astype(np.float64), True
    logw = -np.log(costs) / (alpha - 1.0)
    return np.exp(logw - logsumexp(logw)), False


def update_weights(ds, assign, centers, config: SolverConfig, beta=None, p=None) -> np.ndarray:
    if config.algorithm == "kmeans":
        return np.full(ds.s, 1.0 / ds.s)
    w, zero = weights_from_costs(view_costs(ds, assign, centers, config, beta, p), config.alpha)
    if zero:
        log.warning("zero-cost view(s) detected; weight split among them")
    return w


def objective(ds, assign, weights, centers, config: SolverConfig, beta=None, p=None) -> float:
    """Value of the active algorithm's objective at (memberships, weights, centers)."""
    costs = view_costs(ds, assign, centers, config, beta, p)
    return float(np.dot(_view_factors(config, weights), costs))


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    assign: np.ndarray
    centers: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool
    empty_clusters: list = field(default_factory=list)


def kmeans_plus_plus(X: np.ndarray, c: int, rng: np.random.Generator, n_trials: Optional[int] = None) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each new center is the best (lowest resulting potential) of ``n_trials``
    D^2-sampled candidates, ``2 + floor(ln c)`` by default.
    """
    n = X.shape[0]
    if n_trials is None:
        n_trials = 2 + int(np.log(c))
    idx = [int(rng.integers(n))]
    d2 = sq_distances(X, X[idx[0]][None])[:, 0]
    for _ in range(1, c):
        total = d2.sum()
        u = rng.random(n_trials)
        if total > 0:
            cand = np.minimum(np.searchsorted(np.cumsum(d2), u * total, side="right"), n - 1)
        else:
            cand = np.minimum((u * n).astype(np.int64), n - 1)
        best = None
        for j in cand:
            nd = np.minimum(d2, sq_distances(X, X[j][None])[:, 0])
            pot = nd.sum()
            if best is None or pot < best[0]:
                best = (pot, int(j), nd)
        idx.append(best[1])
        d2 = best[2]
    return X[idx].copy()


def _rel_change(prev: float, cur: float) -> float:
    return abs(cur - prev) / max(1.0, abs(prev))


def _lloyd(X, centers, epsilon, max_iter) -> KMeansResult:
    c = centers.shape[0]
    trace: list = []
    converged = False
    empty = np.zeros(c, dtype=bool)
    assign = None
    for it in range(1, max_iter + 1):
        assign = np.argmin(sq_distances(X, centers), axis=1)
        centers, empty = _cluster_means(X, assign, centers)
        diff = X - centers[assign]
        J = float(np.einsum("ij,ij->i", diff, diff).sum())
        if not np.isfinite(J):
            raise NumericalError("non-finite k-means objective")
        trace.append(J)
        if it >= 2 and _rel_change(trace[-2], J) < epsilon:
            converged = True
            break
    return KMeansResult(assign, centers, trace, len(trace), converged, [int(k) for k in np.flatnonzero(empty)])


def fit_single_view_kmeans(
    X,
    c: int,
    epsilon: float = 1e-6,
    max_iter: int = 100,
    seed: int = 0,
    init_centers=None,
    n_init: int = 10,
) -> KMeansResult:
    """Lloyd's algorithm on one matrix.

    Without ``init_centers`` it runs ``n_init`` greedy k-means++ seedings drawn
    from one seeded stream and keeps the lowest final objective (earliest run
    on ties).  With ``init_centers`` it runs Lloyd once from those centers.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if c < 1 or c > n:
        raise SolverError(f"need 1 <= c <= n, got c={c}, n={n}")
    if init_centers is not None:
        centers = np.array(init_centers, dtype=np.float64, copy=True).reshape(c, X.shape[1])
        return _lloyd(X, centers, epsilon, max_iter)
    if n_init < 1:
        raise SolverError("n_init must be >= 1")
    rng = make_rng(seed)
    best = None
    for _ in range(n_init):
        res = _lloyd(X, kmeans_plus_plus(X, c, rng), epsilon, max_iter)
        if best is None or res.objective_trace[-1] < best.objective_trace[-1]:
            best = res
    return best


def split_columns(A: np.ndarray, dims: Sequence[int]) -> list:
    offsets = np.cumsum([0, *dims])
    return [A[:, offsets[h]:offsets[h + 1]].copy() for h in range(len(dims))]


def initial_centers(ds: MultiViewDataset, config: SolverConfig) -> list:
    if config.init == "random":
        rng = make_rng(config.seed)
        idx = rng.choice(ds.n, size=config.c, replace=False)
        return [v[idx].copy() for v in ds.views]
    km = fit_single_view_kmeans(
        ds.concatenated(), config.c, config.epsilon, config.max_iter, config.seed, n_init=config.kmeans_n_init
    )
    return split_columns(km.centers, ds.dims)


def _check_fit_inputs(ds: MultiViewDataset, config: SolverConfig) -> None:
    if config.c > ds.n:
        raise SolverError(f"c={config.c} exceeds n={ds.n}")
    if not validate(ds).finite:
        raise SolverError("dataset contains non-finite values")


def _reseed_empty(ds, config, assign, centers, weights, gammas, empty_idx):
    """Move each empty cluster's center onto the worst-served sample."""
    factors = _view_factors(config, weights)
    cost = np.zeros(ds.n)
    for h, (v, a) in enumerate(zip(ds.views, centers)):
        diff = v - a[assign]
        d2 = np.einsum("ij,ij->i", diff, diff)
        cost += factors[h] * _dissim(config, d2, None if gammas is None else gammas[h])
    order = np.argsort(-cost, kind="stable")
    for k, i in zip(empty_idx, order):
        for h, v in enumerate(ds.views):
            centers[h][k] = v[i]
    return centers


def fit(ds: MultiViewDataset, config: SolverConfig, init_centers=None, beta=None) -> FitResult:
    """Run one alternating-minimization fit.

    ``init_centers`` (one ``c x d_h`` array per view) overrides ``config.init``;
    ``beta`` overrides the configured beta policy with fixed per-view values.
    Stops when the relative objective change drops below ``epsilon`` or after
    ``max_iter`` iterations.
    """
    _check_fit_inputs(ds, config)
    if config.algorithm == "kmeans":
        return _fit_kmeans(ds, config, init_centers)

    if init_centers is None:
        centers = initial_centers(ds, config)
    else:
        centers = [np.array(a, dtype=np.float64, copy=True) for a in init_centers]
    weights = np.full(ds.s, 1.0 / ds.s)

    per_iteration_beta = beta is None and config.kernelized and config.beta.refresh == "per-iteration"
    beta = _resolve_beta(ds, config, beta, centers)
    p = None
    if config.algorithm == "gkmvkm":
        p = float(config.p)
        if config.stabilizer == "mountain":
            trial = np.argmin(sum(sq_distances(v, a) for v, a in zip(ds.views, centers)), axis=1)
            p = estimate_p_mountain(ds, trial, centers, beta)

    trace: list = []
    converged = False
    zero_cost = False
    empty = np.zeros(config.c, dtype=bool)
    reseeded = False
    assign = None
    it = 0
    while it < config.max_iter:
        it += 1
        gammas = _gammas(config, beta, p)
        d2s = [sq_distances(v, a) for v, a in zip(ds.views, centers)]
        assign = _assign_from_d2(config, d2s, weights, gammas)
        if per_iteration_beta:
            beta = _resolve_beta(ds, config, None, centers)
            gammas = _gammas(config, beta, p)
        centers, empty = _centers_from_d2(ds, config, assign, centers, d2s, gammas)
        costs = view_costs(ds, assign, centers, config, beta, p)
        weights, zc = weights_from_costs(costs, config.alpha)
        zero_cost = zero_cost or zc
        J = float(np.dot(_view_factors(config, weights), costs))
        if not np.isfinite(J):
            raise NumericalError(f"non-finite objective at iteration {it}")
        trace.append(J)
        if len(trace) >= 2 and _rel_change(trace[-2], J) < config.epsilon:
            if config.reseed_empty and empty.any() and not reseeded:
                centers = _reseed_empty(ds, config, assign, centers, weights, gammas, np.flatnonzero(empty))
                reseeded = True
                continue
            converged = True
            break

    return FitResult(
        assign=assign,
        weights=weights,
        centers=centers,
        objective_trace=trace,
        iterations=len(trace),
        converged=converged,
        empty_clusters=[int(k) for k in np.flatnonzero(empty)],
        zero_cost_views=zero_cost,
        beta=beta,
        p=p,
    )


def _fit_kmeans(ds, config, init_centers) -> FitResult:
    X = ds.concatenated()
    init = None if init_centers is None else np.hstack(init_centers)
    if init is None and config.init == "random":
        init = np.hstack(initial_centers(ds, config))
    km = fit_single_view_kmeans(
        X, config.c, config.epsilon, config.max_iter, config.seed, init, n_init=config.kmeans_n_init
    )
    return FitResult(
        assign=km.assign,
        weights=np.full(ds.s, 1.0 / ds.s),
        centers=split_columns(km.centers, ds.dims),
        objective_trace=km.objective_trace,
        iterations=km.iterations,
        converged=km.converged,
        empty_clusters=[int(k) for k in km.empty_clusters],
    )
