import numpy as np

from mvkm.data import MultiViewDataset
from mvkm.estimators import BetaPolicy
from mvkm.solver import SolverConfig

MULTIVIEW = ("mvkmc", "mvkm-ed", "gkmvkm")


def random_instance(rng, max_n=60, max_s=3, max_c=5, max_d=4):
    """Blobs with per-view offsets and scales; sizes drawn from the given caps."""
    c = int(rng.integers(1, max_c + 1))
    n = int(rng.integers(max(c, 2), max_n + 1))
    s = int(rng.integers(1, max_s + 1))
    truth = rng.integers(0, c, n)
    views = []
    for _ in range(s):
        d = int(rng.integers(1, max_d + 1))
        scale = 10.0 ** rng.uniform(-1, 1)
        means = rng.normal(0, 3, (c, d))
        views.append(scale * (means[truth] + rng.standard_normal((n, d))))
    return MultiViewDataset(tuple(views), truth)


def random_beta(rng, ds):
    """Per-view beta around the inverse variance of each view, so kernels are neither flat nor saturated."""
    out = []
    for v in ds.views:
        var = ((v - v.mean(axis=0)) ** 2).sum() / ds.n
        out.append(10.0 ** rng.uniform(-1, 1) / max(var, 1e-12))
    return tuple(out)


def random_config(rng, ds, algorithm, **overrides):
    beta = BetaPolicy("fixed", values=random_beta(rng, ds)) if algorithm in ("mvkm-ed", "gkmvkm") else None
    kw = dict(
        algorithm=algorithm,
        c=int(min(ds.n, rng.integers(1, 6))),
        alpha=float(rng.uniform(2, 9)),
        p=float(rng.uniform(1, 5)),
        beta=beta,
        init=str(rng.choice(["random", "svkm"])),
        seed=int(rng.integers(0, 2**31)),
        max_iter=50,
        epsilon=1e-10,
        kmeans_n_init=2,
    )
    kw.update(overrides)
    return SolverConfig(**kw)


def _fixed_gammas(config):
    if config.beta is None:
        return None
    k = config.p if config.algorithm == "gkmvkm" else 1.0
    return [b * k for b in config.beta.values]


def check_update_oracles(rng, algorithm):
    """Run the three block updates on one random instance against slow oracles.

    Returns a list of failure messages (empty when every check passes).
    """
    import oracles
    from mvkm.solver import update_centers, update_memberships, update_weights

    ds = random_instance(rng, max_n=30, max_s=3, max_c=4, max_d=3)
    config = random_config(rng, ds, algorithm)
    c, s = config.c, ds.s
    beta = None if config.beta is None else list(config.beta.values)
    views = [v.tolist() for v in ds.views]
    failures = []

    centers = [v[rng.choice(ds.n, c, replace=False)] + rng.normal(0, 0.1, (c, v.shape[1])) for v in ds.views]
    weights = rng.dirichlet(np.ones(s))

    # memberships: no other cluster lowers a sample's cost
    assign = update_memberships(ds, centers, weights, config)
    costs = oracles.assignment_costs(views, weights, [a.tolist() for a in centers], algorithm, config.alpha, beta, config.p)
    for i in range(ds.n):
        if costs[i, assign[i]] > costs[i].min() * (1 + 1e-9) + 1e-300:
            failures.append(f"membership {i}: cost {costs[i, assign[i]]} > min {costs[i].min()}")

    # centers: stationary point of the frozen-weight objective
    new_centers, empty = update_centers(ds, assign, centers, weights, config)
    gammas = _fixed_gammas(config)
    for h in range(s):
        for k in range(c):
            members = [i for i in range(ds.n) if assign[i] == k]
            if not members:
                continue
            X = [views[h][i] for i in members]
            if gammas is None:
                phi = [1.0] * len(X)
            else:
                d2 = [sum((xj - aj) ** 2 for xj, aj in zip(x, centers[h][k])) for x in X]
                phi = [float(np.exp(-gammas[h] * (d - min(d2)))) for d in d2]
            g, scale = oracles.center_gradient_check(X, new_centers[h][k], phi)
            if g > 1e-4 * scale:
                failures.append(f"center view {h} cluster {k}: |grad| {g:.3e} vs scale {scale:.3e}")

    # weights: no simplex grid point beats the closed form
    if s in (2, 3):
        w = update_weights(ds, assign, new_centers, config)
        nc = [a.tolist() for a in new_centers]
        E = np.array([oracles.objective([views[h]], assign, [1.0], [nc[h]], algorithm, 1.0,
                                        None if beta is None else [beta[h]], config.p) for h in range(s)])
        grid = oracles.simplex_grid(s)
        vals = (grid ** config.alpha * E).sum(axis=1)
        best = vals.min()
        got = float((w ** config.alpha * E).sum())
        if got > best * (1 + 1e-12) + 1e-300:
            failures.append(f"weights: objective {got} > grid minimum {best}")
        if E.min() > 0:
            gap = np.abs(grid[vals.argmin()] - w).max()
            if gap > 1e-3 + 1e-12:
                failures.append(f"weights: closed form {w} is {gap:.2e} from grid argmin")
    return failures
