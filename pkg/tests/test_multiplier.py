import numpy as np
import pytest
from hypothesis import given, strategies as st

from smoothcop.data import RankMatrix, compute_ranks, empirical_copula_eval
from smoothcop.derivatives import Bandwidth, PdEstimatorSpec
from smoothcop.errors import ConfigError, DomainError
from smoothcop.models import CopulaModel
from smoothcop.multiplier import (MultiplierConfig, SequentialWindow, corner_points, cov_points,
                                  covariance_study, default_bandwidth, estimate_covariance,
                                  estimate_functional_quantile, functional_grid, functional_values,
                                  gen_multipliers, quantile_study, replicate_B, replicate_C)
from smoothcop.smoothing import SmoothEmpiricalCopula


def brute_B(x, a, b, xi, u):
    # non-smooth global replicate straight from the definition
    n = len(x)
    R = compute_ranks(x).ranks
    ind = np.all(R / n <= np.asarray(u) + 1e-12, axis=1).astype(float)
    return float(np.sum(xi[a:b] * (ind[a:b] - ind.mean())) / np.sqrt(n))


class TestMultipliers:
    def test_iid_moments(self):
        xi = gen_multipliers(MultiplierConfig("iid"), 50, np.random.default_rng(0), size=4000)
        assert set(np.unique(xi)) == {-1.0, 1.0}
        assert abs(xi.mean()) < 0.01
        assert abs(np.mean(xi[:, :-1] * xi[:, 1:])) < 0.01

    def test_dependent_autocovariance(self):
        cfg = MultiplierConfig("dependent", ell=5)
        xi = gen_multipliers(cfg, 30, np.random.default_rng(1), size=40000)
        def lag(h):
            return np.mean(xi[:, : 30 - h] * xi[:, h:])
        assert lag(0) == pytest.approx(1.0, abs=0.02)
        assert lag(2) == pytest.approx(0.6, abs=0.02)
        assert lag(6) == pytest.approx(0.0, abs=0.02)
        assert abs(xi.mean()) < 0.01
        for h in range(8):
            assert cfg.autocovariance(h, 30) == pytest.approx(max(0, 1 - h / 5))

    def test_default_bandwidth(self):
        assert default_bandwidth(100) == 5
        assert default_bandwidth(200) == 7
        assert default_bandwidth(1) == 1
        assert MultiplierConfig("dependent").resolved_ell(1000) == 12

    def test_ell_too_large(self):
        with pytest.raises(ConfigError):
            gen_multipliers(MultiplierConfig("dependent", ell=10), 10, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            MultiplierConfig("dependent", ell=0)
        with pytest.raises(ConfigError):
            MultiplierConfig("gaussian")

    def test_shapes_and_determinism(self):
        cfg = MultiplierConfig("dependent", ell=3)
        a = gen_multipliers(cfg, 12, np.random.default_rng(5))
        b = gen_multipliers(cfg, 12, np.random.default_rng(5), size=2)
        assert a.shape == (12,) and b.shape == (2, 12)
        assert np.array_equal(a, b[0])


class TestWindow:
    def test_bounds(self):
        w = SequentialWindow(0.25, 0.75)
        assert w.bounds(10) == (2, 7)
        assert w.length(10) == 5 and w.lam(10) == 0.5
        assert SequentialWindow(0.1, 0.3).bounds(10) == (1, 3)   # floor must not slip below

    def test_invalid(self):
        with pytest.raises(DomainError):
            SequentialWindow(0.6, 0.5)


class TestReplicates:
    def test_zero_multipliers(self, rng):
        x = rng.uniform(size=(15, 2))
        u = rng.uniform(size=(4, 2))
        for fam in ("dirac", "bin", "betab4"):
            assert np.all(replicate_B(x, (0, 1), np.zeros(15), fam, "global", u) == 0)

    def test_hand_enumeration(self):
        x = np.array([[0.1, 0.3], [0.4, 0.2], [0.2, 0.9], [0.8, 0.7]])
        xi = np.array([1.0, -1.0, 0.5, 2.0])
        # ranks (1,2), (3,1), (2,4), (4,3); at u = (1/2, 1/2) only obs 1 counts: C_n = 1/4
        u = (0.5, 0.5)
        ref = (1 * 0.75 - 1 * -0.25 + 0.5 * -0.25 + 2 * -0.25) / 2
        assert replicate_B(x, (0, 1), xi, "dirac", "global", u) == pytest.approx(ref, abs=1e-15)
        for (s, t) in [(0, 0.5), (0.25, 1.0), (0.5, 0.75)]:
            a, b = SequentialWindow(s, t).bounds(4)
            assert replicate_B(x, (s, t), xi, "dirac", "global", u) == pytest.approx(
                brute_B(x, a, b, xi, u), abs=1e-15)

    @given(st.integers(5, 25), st.integers(0, 10_000))
    def test_dirac_reduction(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(n, 2))
        xi = rng.standard_normal(n)
        u = rng.uniform(size=2)
        s, t = sorted(rng.uniform(size=2))
        a, b = SequentialWindow(s, t).bounds(n)
        assert replicate_B(x, (s, t), xi, "dirac", "global", u) == pytest.approx(
            brute_B(x, a, b, xi, u), abs=1e-12)

    def test_empty_window(self, rng):
        x = rng.uniform(size=(10, 2))
        assert replicate_B(x, (0.31, 0.39), np.ones(10), "bin", "local", (0.5, 0.5)) == 0.0
        assert replicate_C(x, (0.5, 0.5), np.ones(10), "bin", "local", lambda j, p: p[:, 1 - j], (0.5, 0.5)) == 0.0

    def test_global_equals_local_full_window(self, rng):
        x = rng.uniform(size=(20, 2))
        xi = rng.standard_normal((3, 20))
        u = rng.uniform(size=(5, 2))
        for fam in ("dirac", "bin", "betab4"):
            np.testing.assert_allclose(replicate_B(x, (0, 1), xi, fam, "global", u),
                                       replicate_B(x, (0, 1), xi, fam, "local", u), atol=1e-14)

    def test_linearity(self, rng):
        x = rng.uniform(size=(18, 2))
        u = rng.uniform(size=(4, 2))
        x1, x2 = rng.standard_normal((2, 18))
        spec = PdEstimatorSpec("delta", "smooth_then_diff", "bin", truncate=True, bandwidth=Bandwidth.fixed(1))
        f = lambda xi: replicate_C(x, (0.2, 0.9), xi, "bin", "local", spec, u)
        np.testing.assert_allclose(f(2 * x1 - 3 * x2), 2 * f(x1) - 3 * f(x2), atol=1e-13)

    def test_conditional_mean_zero(self, rng):
        x = rng.uniform(size=(25, 2))
        xi = gen_multipliers(MultiplierConfig("iid"), 25, rng, size=20000)
        reps = replicate_B(x, (0, 1), xi, "bin", "global", [(0.3, 0.6), (0.7, 0.7)])
        assert np.all(np.abs(reps.mean(axis=0)) < 4 * reps.std(axis=0) / np.sqrt(20000))

    def test_corner_vanishes_for_bin(self, rng):
        # C^nu(u^{(j)}) = u_j: B at u^{(j)} uses the centred margin survivals only
        x = rng.uniform(size=(12, 2))
        xi = rng.standard_normal(12)
        n = 12
        R = compute_ranks(x).ranks
        cop = SmoothEmpiricalCopula(RankMatrix.from_ranks(R), "bin")
        u = np.array([[0.37, 1.0]])
        K = cop.kernel_matrix(u)[0]
        assert cop(u)[0] == pytest.approx(0.37, abs=1e-13)
        assert replicate_B(x, (0, 1), xi, "bin", "global", u)[0] == pytest.approx(
            np.sum(xi * (K - 0.37)) / np.sqrt(n), abs=1e-13)
        assert replicate_B(x, (0, 1), xi, "bin", "global", (1.0, 1.0)) == pytest.approx(0.0, abs=1e-13)

    def test_corner_points(self):
        p = np.array([[0.2, 0.3, 0.4]])
        assert np.array_equal(corner_points(p, 1), [[1.0, 0.3, 1.0]])

    def test_independence_identity(self, rng):
        x = rng.uniform(size=(16, 2))
        xi = rng.standard_normal(16)
        u = np.array([0.4, 0.7])
        pd = lambda j, p: p[:, 1 - j]
        b = lambda v: replicate_B(x, (0, 1), xi, "bin", "global", v)
        ref = b(u) - u[1] * b((u[0], 1.0)) - u[0] * b((1.0, u[1]))
        assert replicate_C(x, (0, 1), xi, "bin", "global", pd, u) == pytest.approx(ref, abs=1e-14)

    def test_smooth_and_dirac_merge(self):
        # replicates from both families get closer as n grows
        gaps = []
        for n in (50, 800):
            rng = np.random.default_rng(n)
            x = CopulaModel("clayton", 2.0).sample(n, rng)
            xi = rng.standard_normal((50, n))
            u = functional_grid(2)
            d = replicate_B(x, (0, 1), xi, "bin", "global", u) - replicate_B(x, (0, 1), xi, "dirac", "global", u)
            gaps.append(np.mean(np.abs(d)))
        assert gaps[1] < gaps[0]

    def test_shape_conventions(self, rng):
        x = rng.uniform(size=(10, 2))
        assert isinstance(replicate_B(x, (0, 1), np.ones(10), "bin", "global", (0.5, 0.5)), float)
        assert replicate_B(x, (0, 1), np.ones((3, 10)), "bin", "global", (0.5, 0.5)).shape == (3,)
        assert replicate_B(x, (0, 1), np.ones((3, 10)), "bin", "global", np.full((4, 2), .5)).shape == (3, 4)
        with pytest.raises(DomainError):
            replicate_B(x, (0, 1), np.ones(9), "bin", "global", (0.5, 0.5))


class TestEstimates:
    def test_covariance(self, rng):
        r = rng.standard_normal((50, 3))
        np.testing.assert_allclose(estimate_covariance(r), np.cov(r.T), atol=1e-14)
        with pytest.raises(DomainError):
            estimate_covariance(np.ones((1, 3)))

    def test_functionals(self):
        r = np.array([[1.0, -3.0], [0.5, 0.5]])
        assert np.array_equal(functional_values(r, "ks"), [3.0, 0.5])
        assert np.array_equal(functional_values(r, "cvm"), [5.0, 0.25])
        q = estimate_functional_quantile(np.arange(11.0)[:, None], "ks", 0.5, centered=False)
        assert q == 5.0

    def test_grids(self):
        assert cov_points(2).shape == (4, 2) and cov_points(3).shape == (8, 3)
        assert functional_grid(2).shape == (100, 2) and functional_grid(3).shape == (125, 3)

    def test_studies_run(self):
        m = CopulaModel("clayton", 2.0 / 3.0)
        cs = covariance_study(m, 20, "bin", ["dirac", "bin"], 50, 3, target_draws=500, seed=2)
        assert set(cs.mse) == {"dirac", "bin"} and cs.mean_mse("bin") >= 0
        qs = quantile_study(m, 20, "bin", ["bin"], 50, 2, functional="ks", target_draws=500, seed=2)
        assert qs.mse["bin"].shape == (3,) and np.all(np.diff(qs.target) > 0)
