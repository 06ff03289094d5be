import math
from concurrent.futures import ThreadPoolExecutor

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from smoothcop.data import RankMatrix, empirical_copula_eval
from smoothcop.errors import DomainError
from smoothcop.smoothing import (SmoothEmpiricalCopula, SmoothingFamily, SmoothingKind,
                                 beta_binomial_cdf_t, beta_binomial_survival,
                                 beta_binomial_survival_t, beta_copula_closed_form,
                                 binomial_cdf, binomial_survival, kernel_K, smooth_eval)

from conftest import random_ranks

FAMILIES = ["dirac", "bin", "betab4"]
unit = st.floats(0.0, 1.0)


def comb_survival(p, u, w):
    return sum(math.comb(p, k) * u ** k * (1 - u) ** (p - k) for k in range(w + 1, p + 1))


@st.composite
def rank_matrices(draw, m_min=5, m_max=12, d_max=3):
    m = draw(st.integers(m_min, m_max))
    d = draw(st.integers(2, d_max))
    cols = [draw(st.permutations(range(1, m + 1))) for _ in range(d)]
    return RankMatrix.from_ranks(np.array(cols).T)


class TestBinomial:
    @pytest.mark.parametrize("p,u,w", [(5, 0.3, 0), (5, 0.3, 2), (10, 0.5, 4), (20, 0.9, 17), (1, 0.25, 0)])
    def test_against_comb(self, p, u, w):
        assert binomial_survival(p, u, w) == pytest.approx(comb_survival(p, u, w), abs=1e-13)

    @given(st.integers(1, 40), unit, st.integers(0, 45))
    def test_property_oracle(self, p, u, w):
        ref = comb_survival(p, u, w) if w < p else 0.0
        assert binomial_survival(p, u, w) == pytest.approx(ref, abs=1e-13)

    def test_edges(self):
        assert binomial_survival(7, 0.0, 0) == 0.0
        assert binomial_survival(7, 1.0, 6) == 1.0
        assert binomial_survival(7, 0.4, 7) == 0.0

    def test_tail_accuracy(self):
        # tiny upper tail stays relative-accurate
        ref = stats.binom.sf(95, 100, 0.1)
        assert binomial_survival(100, 0.1, 95) == pytest.approx(ref, rel=1e-10)

    def test_cdf_complement(self):
        u = np.linspace(0, 1, 11)
        for w in range(6):
            np.testing.assert_allclose(binomial_cdf(6, u, w) + binomial_survival(6, u, w), 1.0, atol=1e-13)

    def test_vectorised(self):
        out = binomial_survival(8, np.array([0.1, 0.5, 0.7]), np.array([1, 3, 6]))
        ref = [comb_survival(8, 0.1, 1), comb_survival(8, 0.5, 3), comb_survival(8, 0.7, 6)]
        np.testing.assert_allclose(out, ref, atol=1e-13)

    @pytest.mark.parametrize("args", [(5, 1.2, 1), (5, -0.1, 1), (5, 0.5, -1), (-1, 0.5, 0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            binomial_survival(*args)


class TestBetaBinomial:
    def test_mixture_oracle(self):
        p, rho, t, w = 8, 4.0, 0.4, 3
        c = (p - rho) / (rho - 1)
        a, b = t * c, (1 - t) * c
        ref, _ = integrate.quad(lambda x: comb_survival(p, x, w) * stats.beta.pdf(x, a, b), 0, 1,
                                epsabs=1e-12, limit=200)
        assert beta_binomial_survival_t(p, t, rho, w) == pytest.approx(ref, abs=1e-8)
        assert beta_binomial_survival(p, a, b, w) == pytest.approx(ref, abs=1e-8)

    def test_scipy_agrees(self):
        for w in range(10):
            assert beta_binomial_survival(10, 0.7, 2.3, w) == pytest.approx(
                stats.betabinom.sf(w, 10, 0.7, 2.3), abs=1e-12)

    def test_limits(self):
        assert beta_binomial_survival_t(10, 0.0, 4.0, 0) == 0.0
        assert beta_binomial_survival_t(10, 1.0, 4.0, 9) == 1.0
        assert beta_binomial_survival_t(10, 1e-12, 4.0, 0) < 1e-9
        assert beta_binomial_survival_t(10, 1 - 1e-12, 4.0, 9) > 1 - 1e-9

    @given(st.integers(5, 30), st.floats(0.0, 1.0), st.data())
    def test_symmetry(self, p, t, data):
        w = data.draw(st.integers(0, p - 1))
        lhs = beta_binomial_survival_t(p, t, 4.0, w)
        rhs = beta_binomial_cdf_t(p, 1 - t, 4.0, p - w - 1)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @pytest.mark.parametrize("args", [(8, 0.0, 1.0, 2), (8, 1.0, -1.0, 2), (8, 1.0, 1.0, -2), (0, 1.0, 1.0, 0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            beta_binomial_survival(*args)

    @pytest.mark.parametrize("rho", [1.0, 8.0, 9.0])
    def test_rho_domain(self, rho):
        with pytest.raises(DomainError):
            beta_binomial_survival_t(8, 0.5, rho, 2)

    @pytest.mark.parametrize("m", [5, 20, 100])
    def test_variance_factor(self, m):
        # Var(W/m) = kappa u(1-u)/m with kappa = 1 (bin) and rho (beta-binomial)
        u = np.array([0.1, 0.5, 0.83])
        np.testing.assert_allclose(SmoothingFamily("bin").variance(m, u), u * (1 - u) / m, rtol=1e-10)
        np.testing.assert_allclose(SmoothingFamily("betab4").variance(m, u), 4 * u * (1 - u) / m, rtol=1e-9)
        assert np.all(SmoothingFamily("dirac").variance(m, u) == 0)


class TestFamily:
    @pytest.mark.parametrize("name,kind", [("none", SmoothingKind.DIRAC), ("beta", SmoothingKind.BINOMIAL),
                                           ("BetaB4", SmoothingKind.BETABINOMIAL)])
    def test_aliases(self, name, kind):
        assert SmoothingFamily(name).kind is kind

    def test_bad(self):
        with pytest.raises(DomainError):
            SmoothingFamily("gaussian")
        with pytest.raises(DomainError):
            SmoothingFamily("betab4", rho=1.0)

    def test_window_too_short(self):
        with pytest.raises(DomainError):
            SmoothEmpiricalCopula(RankMatrix.from_ranks([[1, 2], [2, 1], [3, 3], [4, 4]]), "betab4")


class TestKernel:
    def test_bin_example(self):
        cop = SmoothEmpiricalCopula(RankMatrix.from_ranks([[1, 2], [2, 1]]), "bin")
        # K_(1,2)(u) = P(Bin(2,u1) >= 1) P(Bin(2,u2) >= 2)
        u = (0.3, 0.6)
        ref = (1 - 0.7 ** 2) * 0.6 ** 2
        assert kernel_K(cop, [1, 2], u) == pytest.approx(ref, abs=1e-15)

    def test_dirac_indicator(self):
        cop = SmoothEmpiricalCopula(RankMatrix.from_ranks([[1, 2], [2, 1], [3, 3]]), "dirac")
        assert kernel_K(cop, [2, 3], (0.67, 1.0)) == 1.0
        assert kernel_K(cop, [2, 3], (0.66, 1.0)) == 0.0

    def test_betabinomial_composition(self, rng):
        # Cbar is the empirical beta copula of the window at the margin survivals
        R = RankMatrix.from_ranks(random_ranks(rng, 6, 2))
        cop = SmoothEmpiricalCopula(R, "betab4")
        for r in ([1, 1], [3, 5], [6, 2]):
            u = rng.uniform(size=2)
            a = [beta_binomial_survival_t(6, u[j], 4.0, r[j] - 1) for j in range(2)]
            assert kernel_K(cop, r, u) == pytest.approx(beta_copula_closed_form(R, a), abs=1e-13)

    def test_rank_domain(self):
        cop = SmoothEmpiricalCopula(RankMatrix.from_ranks([[1, 2], [2, 1]]), "bin")
        with pytest.raises(DomainError):
            cop.kernel([0, 1], (0.5, 0.5))


class TestEstimator:
    @given(rank_matrices(), st.lists(unit, min_size=3, max_size=3))
    def test_dirac_is_empirical_copula(self, R, u):
        u = np.array(u[:R.d])
        assert smooth_eval(SmoothEmpiricalCopula(R, "dirac"), u) == empirical_copula_eval(R, u)

    @given(rank_matrices(), st.lists(unit, min_size=3, max_size=3))
    def test_bin_is_beta_copula(self, R, u):
        u = np.array(u[:R.d])
        assert smooth_eval(SmoothEmpiricalCopula(R, "bin"), u) == pytest.approx(
            beta_copula_closed_form(R, u), abs=1e-12)

    def test_closed_form_mpmath(self):
        R = RankMatrix.from_ranks([[1, 3], [3, 2], [2, 1]])
        u = (0.35, 0.7)
        mpmath.mp.dps = 30
        tot = 0
        for r1, r2 in R.ranks:
            f1 = mpmath.betainc(int(r1), 4 - int(r1), 0, u[0], regularized=True)
            f2 = mpmath.betainc(int(r2), 4 - int(r2), 0, u[1], regularized=True)
            tot += f1 * f2
        assert beta_copula_closed_form(R, u) == pytest.approx(float(tot / 3), abs=1e-14)

    @pytest.mark.parametrize("family", FAMILIES)
    @given(R=rank_matrices(), data=st.data())
    def test_genuine_copula(self, family, R, data):
        cop = SmoothEmpiricalCopula(R, family)
        u = np.array(data.draw(st.lists(unit, min_size=R.d, max_size=R.d)))
        v = np.array(data.draw(st.lists(unit, min_size=R.d, max_size=R.d)))
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        # boundary values
        for j in range(R.d):
            e = np.ones(R.d)
            e[j] = u[j]
            z = u.copy()
            z[j] = 0.0
            if family != "dirac":
                assert cop(e) == pytest.approx(u[j], abs=1e-12)
            assert cop(z) == 0.0
        # rectangle volume
        vol = 0.0
        for corner in np.ndindex(*([2] * R.d)):
            c = np.where(np.array(corner) == 1, hi, lo)
            vol += (-1) ** (R.d - sum(corner)) * cop(c)
        assert vol >= -1e-12
        # Lipschitz
        if family != "dirac":
            assert abs(cop(u) - cop(v)) <= np.abs(u - v).sum() + 1e-12

    @pytest.mark.parametrize("family", ["bin", "betab4"])
    def test_strictly_increasing(self, family, rng):
        R = RankMatrix.from_ranks(random_ranks(rng, 10, 2))
        cop = SmoothEmpiricalCopula(R, family)
        t = np.linspace(0.05, 0.95, 19)
        vals = cop(np.column_stack([t, np.full_like(t, 0.6)]))
        assert np.all(np.diff(vals) > 0)

    def test_monotone_near_saturation(self):
        # the survival function rounds to 1 near u = 1; the cdf stays resolved
        u = np.array([1 - 1e-6, 1 - 1e-7])
        assert np.all(np.diff(binomial_cdf(50, u, 49)) < 0)

    def test_matrix_matches_pointwise(self, rng):
        R = RankMatrix.from_ranks(random_ranks(rng, 8, 3))
        for fam in FAMILIES:
            cop = SmoothEmpiricalCopula(R, fam)
            pts = rng.uniform(size=(5, 3))
            np.testing.assert_allclose(cop(pts), [cop(p) for p in pts], atol=1e-15)

    def test_thread_safe_and_deterministic(self, rng):
        R = RankMatrix.from_ranks(random_ranks(rng, 30, 2))
        pts = rng.uniform(size=(40, 2))
        cops = [SmoothEmpiricalCopula(R, f) for f in FAMILIES]
        ref = [c(pts) for c in cops]
        with ThreadPoolExecutor(4) as ex:
            out = list(ex.map(lambda i: cops[i % 3](pts), range(24)))
        for i, o in enumerate(out):
            assert np.array_equal(o, ref[i % 3])

    def test_accepts_raw_sample(self, rng):
        x = rng.uniform(size=(12, 2))
        cop = SmoothEmpiricalCopula(x, "bin")
        assert cop.m == 12 and cop.d == 2
        assert "bin" in repr(cop)
