import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from helpers import MULTIVIEW, check_update_oracles, random_config, random_instance
from mvkm.data import MultiViewDataset, SyntheticSpec, generate_synthetic
from mvkm.estimators import BetaPolicy
from mvkm.solver import (
    NumericalError,
    SolverConfig,
    SolverError,
    fit,
    fit_single_view_kmeans,
    kernel_dissimilarity,
    objective,
    update_centers,
    update_memberships,
    update_weights,
    view_costs,
    weights_from_costs,
)


def cfg(algorithm, **kw):
    kw.setdefault("c", 2)
    s = kw.pop("s", 1)
    if algorithm in ("mvkm-ed", "gkmvkm"):
        kw.setdefault("beta", BetaPolicy("fixed", values=(1.0,) * s))
    return SolverConfig(algorithm=algorithm, **kw)


def col(*xs):
    return np.array(xs, dtype=float)[:, None]


class TestKernelDissimilarity:
    @pytest.mark.parametrize("algo", ["mvkmc", "mvkm-ed", "gkmvkm"])
    def test_coincident(self, algo):
        assert kernel_dissimilarity(algo, [1.5, -2.0], [1.5, -2.0], 0.7, 3.0) == 0.0

    def test_mvkm_ed_unit(self):
        assert kernel_dissimilarity("mvkm-ed", [1.0], [0.0], 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
        assert kernel_dissimilarity("mvkm-ed", [1.0], [0.0], 1.0) == pytest.approx(0.6321206, abs=1e-7)

    def test_mvkmc_squared(self):
        assert kernel_dissimilarity("mvkmc", [0.0, 0.0], [3.0, 4.0]) == 25.0

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=4),
        st.lists(st.floats(-50, 50), min_size=4, max_size=4),
        st.floats(1e-4, 1e2),
    )
    def test_gkmvkm_p1_equals_mvkm_ed(self, x, a, beta):
        a = a[: len(x)]
        assert kernel_dissimilarity("gkmvkm", x, a, beta, 1.0) == kernel_dissimilarity("mvkm-ed", x, a, beta)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.floats(1e-4, 1e2), st.floats(1, 10))
    def test_kernel_range_and_power(self, x, beta, p):
        d = kernel_dissimilarity("gkmvkm", x, [0.0, 0.0], beta, p)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(oracles.dissim("gkmvkm", x, [0.0, 0.0], beta, p), abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            kernel_dissimilarity("mvkm-ed", [1.0], [np.nan], 1.0)
        with pytest.raises(ValueError):
            kernel_dissimilarity("mvkm-ed", [1.0], [0.0, 1.0], 1.0)
        with pytest.raises(ValueError):
            kernel_dissimilarity("mvkm-ed", [1.0], [0.0], 0.0)


class TestMemberships:
    def test_single_cluster(self):
        ds = MultiViewDataset((col(0, 3, 9),))
        assert update_memberships(ds, [col(1)], np.ones(1), cfg("mvkmc", c=1)).tolist() == [0, 0, 0]

    def test_nearest_center(self):
        ds = MultiViewDataset((col(0, 10),))
        assert update_memberships(ds, [col(1, 9)], np.ones(1), cfg("mvkmc")).tolist() == [0, 1]

    @pytest.mark.parametrize("algo", MULTIVIEW)
    def test_view_weights_flip_assignment(self, algo):
        # view 1 puts the sample next to center 0, view 2 next to center 1
        ds = MultiViewDataset((col(0.0), col(0.0)))
        centers = [col(0.1, 2.0), col(2.0, 0.1)]
        config = cfg(algo, s=2)
        for weights, want in [((1.0, 0.0), 0), ((0.0, 1.0), 1)]:
            got = update_memberships(ds, centers, np.array(weights), config)[0]
            costs = oracles.assignment_costs([v.tolist() for v in ds.views], weights,
                                             [a.tolist() for a in centers], algo, config.alpha, [1.0, 1.0], config.p)
            assert got == int(np.argmin(costs[0])) == want

    def test_ties_go_to_lowest_index(self):
        ds = MultiViewDataset((col(0.0, 5.0),))
        for algo in MULTIVIEW:
            got = update_memberships(ds, [col(-1, 1, 1)], np.ones(1), cfg(algo, c=3))
            assert got.tolist() == [0, 1]

    def test_saturated_kernel_still_discriminates(self):
        # every 1 - exp(-beta d^2) rounds to 1.0 here; the assignment must still pick the nearer center
        ds = MultiViewDataset((col(0.0, 100.0),))
        config = cfg("mvkm-ed", beta=BetaPolicy("fixed", values=(1.0,)))
        assert update_memberships(ds, [col(30.0, 70.0)], np.ones(1), config).tolist() == [0, 1]


class TestCenters:
    def test_plain_mean(self):
        ds = MultiViewDataset((col(0, 2),))
        centers, empty = update_centers(ds, np.array([0, 0]), [col(5, 9)], np.ones(1), cfg("mvkmc"))
        assert centers[0][0, 0] == 1.0
        assert empty.tolist() == [False, True]
        assert centers[0][1, 0] == 9.0

    def test_kernel_weighted_mean(self):
        ds = MultiViewDataset((col(0, 2),))
        centers, _ = update_centers(ds, np.array([0, 0]), [col(0, 9)], np.ones(1), cfg("mvkm-ed", c=2))
        w = [math.exp(0.0), math.exp(-4.0)]
        want = (0 * w[0] + 2 * w[1]) / (w[0] + w[1])
        assert centers[0][0, 0] == pytest.approx(want, rel=1e-14)
        assert centers[0][0, 0] == pytest.approx(0.035972, abs=1e-6)

    def test_gkmvkm_uses_p(self):
        ds = MultiViewDataset((col(0, 2),))
        config = SolverConfig(algorithm="gkmvkm", c=2, p=3.0, beta=BetaPolicy("fixed", values=(1.0,)))
        centers, _ = update_centers(ds, np.array([0, 0]), [col(0, 9)], np.ones(1), config)
        w = [1.0, math.exp(-12.0)]
        assert centers[0][0, 0] == pytest.approx(2 * w[1] / (w[0] + w[1]), rel=1e-12)

    def test_far_cluster_does_not_underflow(self):
        ds = MultiViewDataset((col(1000, 1002),))
        config = cfg("mvkm-ed", beta=BetaPolicy("fixed", values=(50.0,)))
        centers, empty = update_centers(ds, np.array([0, 0]), [col(0, 9)], np.ones(1), config)
        assert not empty[0]
        assert 1000 <= centers[0][0, 0] <= 1002


class TestWeights:
    def test_equal_costs_uniform(self):
        w, zero = weights_from_costs(np.array([2.0, 2.0, 2.0]), 3.0)
        assert np.allclose(w, 1 / 3) and not zero

    @pytest.mark.parametrize("costs,alpha,want", [((1, 3), 2, (0.75, 0.25)), ((1, 4), 3, (2 / 3, 1 / 3))])
    def test_hand_values(self, costs, alpha, want):
        w, _ = weights_from_costs(np.array(costs, float), alpha)
        assert w == pytest.approx(want, abs=1e-15)

    def test_zero_cost_views(self):
        w, zero = weights_from_costs(np.array([0.0, 5.0, 0.0]), 2.0)
        assert zero and w.tolist() == [0.5, 0.0, 0.5]

    def test_update_weights_through_dataset(self):
        ds = MultiViewDataset((col(0, 2), col(0, 2 * math.sqrt(3))))
        w = update_weights(ds, np.array([0, 0]), [col(1, 7), col(math.sqrt(3), 7)], cfg("mvkmc", alpha=2.0))
        # E = (2, 6) -> v proportional to (1/2, 1/6)
        assert w == pytest.approx([0.75, 0.25], rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=6), st.floats(1.01, 12))
    def test_simplex_and_order(self, costs, alpha):
        w, _ = weights_from_costs(np.array(costs), alpha)
        assert abs(w.sum() - 1) <= 1e-12
        assert np.all((w >= 0) & (w <= 1))
        order = np.argsort(costs, kind="stable")
        assert np.all(np.diff(w[order]) <= 1e-15)


class TestObjective:
    @pytest.mark.parametrize("algo", ["kmeans", *MULTIVIEW])
    def test_zero_at_centers(self, algo):
        ds = MultiViewDataset((col(1, 1, 4), col(2, 2, 0)))
        c = cfg(algo, s=2) if algo in ("mvkm-ed", "gkmvkm") else cfg(algo)
        assert objective(ds, np.array([0, 0, 1]), np.array([0.5, 0.5]), [col(1, 4), col(2, 0)], c) == 0.0

    def test_single_view_is_kmeans_ss(self):
        X = np.array([[0.0, 1.0], [2.0, 1.0], [5.0, 5.0], [6.0, 7.0]])
        assign = np.array([0, 0, 1, 1])
        centers = np.array([[1.0, 1.0], [5.5, 6.0]])
        ss = sum(((X[i] - centers[assign[i]]) ** 2).sum() for i in range(4))
        for alpha in (1.5, 2.0, 7.0):
            got = objective(MultiViewDataset((X,)), assign, np.ones(1), [centers], cfg("mvkmc", alpha=alpha))
            assert got == pytest.approx(ss, rel=1e-15)

    @pytest.mark.parametrize("algo", MULTIVIEW)
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_term_by_term(self, algo, seed):
        rng = np.random.default_rng(seed)
        ds = MultiViewDataset((rng.normal(size=(8, 2)), rng.normal(size=(8, 3))))
        assign = rng.integers(0, 3, 8)
        centers = [rng.normal(size=(3, 2)), rng.normal(size=(3, 3))]
        w = rng.dirichlet([1, 1])
        beta = (0.7, 1.9)
        config = SolverConfig(algorithm=algo, c=3, alpha=3.0, p=2.5, beta=BetaPolicy("fixed", values=beta))
        want = oracles.objective([v.tolist() for v in ds.views], assign, w, [a.tolist() for a in centers],
                                 algo, 3.0, beta, 2.5)
        assert objective(ds, assign, w, centers, config) == pytest.approx(want, rel=1e-12)


class TestSingleViewKMeans:
    def test_four_points(self):
        X = np.array([0.0, 1.0, 10.0, 11.0])
        res = fit_single_view_kmeans(X, 2, seed=3)
        # exhaustive search over bipartitions confirms {0,1},{10,11} is optimal
        masks = [np.array(bits, bool) for bits in itertools.product([0, 1], repeat=4) if 0 < sum(bits) < 4]
        best = min(sum(((X[m] - X[m].mean()) ** 2).sum() for m in (mask, ~mask)) for mask in masks)
        assert res.objective_trace[-1] == pytest.approx(best)
        assert sorted(res.centers[:, 0].tolist()) == [0.5, 10.5]
        assert res.assign[0] == res.assign[1] != res.assign[2] == res.assign[3]

    def test_single_cluster_global_mean(self):
        X = np.random.default_rng(0).normal(size=(30, 3))
        res = fit_single_view_kmeans(X, 1)
        assert np.allclose(res.centers[0], X.mean(axis=0))

    def test_duplicates_terminate(self):
        X = np.zeros((6, 2))
        res = fit_single_view_kmeans(X, 2, max_iter=50)
        assert res.converged and res.iterations <= 2

    def test_deterministic_and_monotone(self):
        X = generate_synthetic(SyntheticSpec(n=400, seed=2)).concatenated()
        a = fit_single_view_kmeans(X, 4, seed=9)
        b = fit_single_view_kmeans(X, 4, seed=9)
        assert np.array_equal(a.assign, b.assign) and a.objective_trace == b.objective_trace
        assert all(y <= x * (1 + 1e-12) for x, y in zip(a.objective_trace, a.objective_trace[1:]))

    def test_n_less_than_c(self):
        with pytest.raises(SolverError):
            fit_single_view_kmeans(np.zeros((2, 1)), 3)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(alpha=1.0),
            dict(alpha=0.5),
            dict(algorithm="gkmvkm", p=0.5),
            dict(epsilon=0.0),
            dict(max_iter=0),
            dict(c=0),
            dict(init="bogus"),
            dict(algorithm="bogus"),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(SolverError):
            SolverConfig(**kw)

    def test_default_beta_policies(self):
        assert SolverConfig(algorithm="mvkm-ed").beta.kind == "eq10"
        assert SolverConfig(algorithm="gkmvkm").beta.kind == "invvar"
        assert SolverConfig(algorithm="mvkmc").beta is None

    def test_n_less_than_c(self):
        ds = MultiViewDataset((col(0, 1),))
        with pytest.raises(SolverError):
            fit(ds, SolverConfig(algorithm="mvkmc", c=3))

    def test_non_finite_dataset(self):
        ds = MultiViewDataset((col(0, np.inf, 2),))
        with pytest.raises(SolverError):
            fit(ds, SolverConfig(algorithm="mvkmc", c=2))

    def test_non_finite_objective(self):
        ds = MultiViewDataset((col(0, 1e300, -1e300),))
        with pytest.raises(NumericalError):
            fit(ds, SolverConfig(algorithm="mvkmc", c=1))


class TestFit:
    @pytest.mark.parametrize("algo", ["kmeans", *MULTIVIEW])
    @pytest.mark.parametrize("init", ["random", "svkm"])
    def test_every_point_its_own_cluster(self, algo, init):
        rng = np.random.default_rng(4)
        ds = MultiViewDataset((rng.normal(size=(7, 2)), rng.normal(size=(7, 1))))
        res = fit(ds, SolverConfig(algorithm=algo, c=7, init=init, seed=1))
        assert sorted(res.assign.tolist()) == list(range(7))
        assert res.objective == 0.0
        assert res.converged and res.iterations <= 2

    @pytest.mark.parametrize("algo", MULTIVIEW)
    def test_result_invariants(self, algo):
        ds = generate_synthetic(SyntheticSpec(n=300, seed=8))
        res = fit(ds, SolverConfig(algorithm=algo, c=4, alpha=3.0, p=2.0, seed=2))
        assert res.assign.shape == (300,) and set(res.assign.tolist()) <= set(range(4))
        assert abs(res.weights.sum() - 1) <= 1e-12
        assert [a.shape for a in res.centers] == [(4, 2)] * 3
        assert len(res.objective_trace) == res.iterations
        d = res.to_dict()
        assert d["objective_trace"] == res.objective_trace and len(d["assignments"]) == 300

    def test_deterministic(self):
        ds = generate_synthetic(SyntheticSpec(n=200, seed=1))
        for algo in MULTIVIEW:
            a = fit(ds, SolverConfig(algorithm=algo, c=4, seed=5, init="random"))
            b = fit(ds, SolverConfig(algorithm=algo, c=4, seed=5, init="random"))
            assert a.objective_trace == b.objective_trace and np.array_equal(a.assign, b.assign)

    def test_mountain_stabilizer(self):
        ds = generate_synthetic(SyntheticSpec(n=200, seed=1))
        res = fit(ds, SolverConfig(algorithm="gkmvkm", c=4, stabilizer="mountain", seed=1))
        assert 1.0 <= res.p <= 10.0

    def test_eq11_beta_refreshes(self):
        ds = generate_synthetic(SyntheticSpec(n=200, seed=1))
        res = fit(ds, SolverConfig(algorithm="mvkm-ed", c=4, beta=BetaPolicy("eq11"), seed=1))
        assert res.beta.shape == (3,) and np.all(res.beta > 0)

    def test_empty_cluster_flag_and_reseed(self):
        # four coincident points and c = 2: one cluster must stay empty
        ds = MultiViewDataset((np.zeros((4, 1)) + 3.0,))
        init = [np.array([[3.0], [50.0]])]
        res = fit(ds, SolverConfig(algorithm="mvkmc", c=2), init_centers=init)
        assert res.empty_clusters == [1]
        assert res.centers[0][1, 0] == 50.0
        res2 = fit(ds, SolverConfig(algorithm="mvkmc", c=2, reseed_empty=True), init_centers=init)
        assert res2.centers[0][1, 0] == 3.0

    @pytest.mark.parametrize("algo", MULTIVIEW)
    @pytest.mark.parametrize("seed", range(3))
    def test_twelve_points_exhaustive(self, algo, seed):
        rng = np.random.default_rng(100 + seed)
        ds = MultiViewDataset((rng.normal(size=(12, 2)), rng.normal(size=(12, 1)) * 2))
        beta = (0.5, 0.3)
        config = SolverConfig(algorithm=algo, c=2, alpha=2.0, p=2.0, seed=seed, epsilon=1e-12,
                              beta=BetaPolicy("fixed", values=beta) if algo != "mvkmc" else None)
        res = fit(ds, config)
        J = res.objective
        views = [v.tolist() for v in ds.views]
        if algo == "mvkmc":
            # optimal centers are member means, optimal weights follow in closed form
            best = math.inf
            for bits in itertools.product([0, 1], repeat=11):
                assign = np.array((0,) + bits)
                if assign.min() == assign.max():
                    continue
                centers = [np.stack([v[assign == k].mean(axis=0) for k in (0, 1)]) for v in ds.views]
                costs = np.array([sum(((v - a[assign]) ** 2).sum() for _ in [0]) for v, a in zip(ds.views, centers)])
                w, _ = weights_from_costs(costs, 2.0)
                best = min(best, float((w**2 * costs).sum()))
            if J <= best * (1 + 1e-9):
                return
        # otherwise: a local optimum, no single reassignment lowers the objective
        centers = [a.tolist() for a in res.centers]
        base = oracles.objective(views, res.assign, res.weights, centers, algo, 2.0, beta, 2.0)
        assert base == pytest.approx(J, rel=1e-9)
        for i in range(12):
            moved = res.assign.copy()
            moved[i] = 1 - moved[i]
            assert oracles.objective(views, moved, res.weights, centers, algo, 2.0, beta, 2.0) >= base * (1 - 1e-9)


class TestInvariants:
    @pytest.mark.parametrize("seed", range(20))
    def test_monotone_descent(self, seed):
        rng = np.random.default_rng(seed)
        ds = random_instance(rng)
        for algo in MULTIVIEW:
            res = fit(ds, random_config(rng, ds, algo))
            tr = res.objective_trace
            assert all(b <= a * (1 + 1e-9) for a, b in zip(tr, tr[1:])), tr

    @pytest.mark.parametrize("seed", range(10))
    def test_gkmvkm_p1_is_mvkm_ed(self, seed):
        rng = np.random.default_rng(1000 + seed)
        ds = random_instance(rng)
        base = random_config(rng, ds, "mvkm-ed")
        ed = fit(ds, base)
        gk = fit(ds, SolverConfig(**{**base.__dict__, "algorithm": "gkmvkm", "p": 1.0}))
        assert ed.objective_trace == gk.objective_trace
        assert np.array_equal(ed.assign, gk.assign)

    @pytest.mark.parametrize("seed", range(10))
    def test_mvkmc_single_view_is_lloyd(self, seed):
        rng = np.random.default_rng(2000 + seed)
        ds = random_instance(rng, max_s=1)
        c = int(rng.integers(1, min(ds.n, 5) + 1))
        init = ds.views[0][rng.choice(ds.n, c, replace=False)]
        mv = fit(ds, SolverConfig(algorithm="mvkmc", c=c, alpha=float(rng.uniform(1.5, 9))), init_centers=[init])
        km = fit_single_view_kmeans(ds.views[0], c, init_centers=init)
        assert np.array_equal(mv.assign, km.assign)

    def test_scale_sensitivity(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ds = random_instance(rng, max_s=3)
            if ds.s < 2:
                continue
            c = min(3, ds.n)
            assign = rng.integers(0, c, ds.n)
            config = SolverConfig(algorithm="mvkmc", c=c, alpha=float(rng.uniform(1.5, 6)))
            centers = update_centers(ds, assign, [v[:c] for v in ds.views], None, config)[0]
            w = update_weights(ds, assign, centers, config)
            lam = float(rng.uniform(1.01, 10))
            scaled = MultiViewDataset((ds.views[0] * lam, *ds.views[1:]))
            centers2 = update_centers(scaled, assign, [v[:c] for v in scaled.views], None, config)[0]
            w2 = update_weights(scaled, assign, centers2, config)
            assert w2[0] <= w[0] * (1 + 1e-12)

    @pytest.mark.parametrize("algo", MULTIVIEW)
    def test_block_updates_match_oracles(self, algo):
        rng = np.random.default_rng(MULTIVIEW.index(algo) + 500)
        for _ in range(15):
            assert check_update_oracles(rng, algo) == []
