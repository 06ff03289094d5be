"""Smooth bootstrap: sampling from smooth empirical copulas and bootstrap CIs.

A draw from the smooth empirical copula ``C^nu_{1:n}`` is obtained by
picking a row ``I`` of the rank matrix uniformly, drawing ``U#`` from the
survival copula ``Cbar`` and setting ``V_j = K_{R_Ij, j}^{-1}(U#_j)``, where
``u -> K_{r, j}(u) = Fbar_{j, u}((r - 1)/n)`` is a continuous, strictly
increasing cdf on ``[0, 1]`` for the binomial and beta-binomial families.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .data import Sample, as_sample, batch_ranks, kendall_tau, kendall_tau_batch
from .errors import DomainError, OptimFailure, TieError, ToleranceError, UnsupportedFamilyError
from .models import CopulaModel, frank_log_density_batch
from .parallel import run_replications
from .smoothing import SmoothEmpiricalCopula, SmoothingFamily, SmoothingKind

INVERSION_TOL = 1e-10
_GRID_SIZE = 2048
_MAX_ITER = 100


# ---------------------------------------------------------------------------
# margin functions K_{r}(u) = P(W >= r) as functions of u


def _bb_margin_eval(m: int, rho: float, r: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``P(BetaBin(m, alpha(u), beta(u)) >= r)`` for paired arrays ``r``, ``u`` in (0, 1).

    The pmf is built from the ratio recurrence
    ``p(k+1)/p(k) = (m-k)(k+alpha) / ((k+1)(m-k-1+beta))`` in log space and
    normalised, which avoids log-gamma calls in the hot loop.
    """
    c = (m - rho) / (rho - 1.0)
    a = (u * c)[:, None]
    b = ((1.0 - u) * c)[:, None]
    k = np.arange(m)
    lr = np.log((k + a) / (m - k - 1.0 + b)) + np.log((m - k) / (k + 1.0))
    lp = np.empty((len(u), m + 1))
    lp[:, 0] = 0.0
    np.cumsum(lr, axis=1, out=lp[:, 1:])
    lp -= lp.max(axis=1, keepdims=True)
    p = np.exp(lp, out=lp)
    tail = np.cumsum(p[:, ::-1], axis=1)[:, ::-1]
    return tail[np.arange(len(u)), r] / tail[:, 0]


@lru_cache(maxsize=64)
def _bb_grid(m: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    # data-independent table of K_r on a uniform grid, rows r = 1..m
    grid = np.linspace(0.0, 1.0, _GRID_SIZE + 1)
    inner = grid[1:-1]
    rr = np.repeat(np.arange(1, m + 1), len(inner))
    vals = _bb_margin_eval(m, rho, rr, np.tile(inner, m)).reshape(m, len(inner))
    table = np.empty((m, len(grid)))
    table[:, 0], table[:, -1], table[:, 1:-1] = 0.0, 1.0, vals
    # enforce monotone rows for searchsorted (rounding near the flat ends)
    table = np.maximum.accumulate(table, axis=1)
    table.setflags(write=False)
    grid.setflags(write=False)
    return grid, table


def _invert_bb(m: int, rho: float, r: np.ndarray, y: np.ndarray) -> np.ndarray:
    grid, table = _bb_grid(m, rho)
    G = len(grid)
    out = np.empty(len(y))
    lo_end, hi_end = y <= 0.0, y >= 1.0
    out[lo_end], out[hi_end] = 0.0, 1.0
    act = np.flatnonzero(~lo_end & ~hi_end)
    if len(act) == 0:
        return out
    ra, ya = r[act], y[act]
    # rows are offset by 2 so one searchsorted serves all ranks
    flat = (table + 2.0 * np.arange(m)[:, None]).ravel()
    pos = np.searchsorted(flat, ya + 2.0 * (ra - 1), side="left") - (ra - 1) * G
    pos = np.clip(pos, 1, G - 1)
    a, b = grid[pos - 1].copy(), grid[pos].copy()
    fa = table[ra - 1, pos - 1] - ya
    fb = table[ra - 1, pos] - ya
    x = a.copy()
    side = np.zeros(len(ya), dtype=np.int8)
    done = np.zeros(len(ya), dtype=bool)
    # exact grid hits
    hit_a, hit_b = fa == 0, fb == 0
    x[hit_b] = b[hit_b]
    done |= hit_a | hit_b
    for _ in range(_MAX_ITER):
        idx = np.flatnonzero(~done)
        if len(idx) == 0:
            break
        # Illinois false position, with a bisection fallback
        fa_i, fb_i, a_i, b_i = fa[idx], fb[idx], a[idx], b[idx]
        xi = b_i - fb_i * (b_i - a_i) / (fb_i - fa_i)
        bad = ~((xi > a_i) & (xi < b_i))
        xi[bad] = 0.5 * (a_i[bad] + b_i[bad])
        fx = _bb_margin_eval(m, rho, ra[idx], xi) - ya[idx]
        x[idx] = xi
        conv = (np.abs(fx) <= INVERSION_TOL) | (b_i - a_i <= 1e-15)
        done[idx[conv]] = True
        left = fx < 0  # root in (xi, b)
        s = side[idx]
        new_a = np.where(left, xi, a_i)
        new_fa = np.where(left, fx, fa_i)
        new_b = np.where(left, b_i, xi)
        new_fb = np.where(left, fb_i, fx)
        # Illinois: halve the stale endpoint value when the same side is kept twice
        new_fb = np.where(left & (s == 1), new_fb * 0.5, new_fb)
        new_fa = np.where(~left & (s == -1), new_fa * 0.5, new_fa)
        side[idx] = np.where(left, 1, -1)
        a[idx], fa[idx], b[idx], fb[idx] = new_a, new_fa, new_b, new_fb
    if not np.all(done):
        raise ToleranceError("beta-binomial quantile inversion did not converge")
    out[act] = x
    return out


def margin_function(family, m: int, r, u) -> np.ndarray:
    """``K_r(u) = P(W >= r)`` for the margins of ``family`` (window length ``m``)."""
    fam = SmoothingFamily.parse(family)
    r = np.asarray(r, dtype=np.int64)
    u = np.asarray(u, dtype=float)
    r, u = np.broadcast_arrays(r, u)
    if fam.kind is SmoothingKind.DIRAC:
        raise UnsupportedFamilyError("Dirac margins are step functions")
    if fam.kind is SmoothingKind.BINOMIAL:
        return special.betainc(r, m - r + 1, u)
    fam.check_window(m)
    rf, uf = r.ravel(), u.ravel()
    out = np.where(uf >= 1.0, 1.0, 0.0)
    inner = (uf > 0) & (uf < 1)
    out[inner] = _bb_margin_eval(m, fam.rho, rf[inner], uf[inner])
    return out.reshape(r.shape)


def invert_margin(family, m: int, r, y) -> np.ndarray:
    """Solve ``K_r(u) = y`` for ``u`` (vectorised over paired ``r``, ``y``).

    Binomial margins are beta cdfs and are inverted with the inverse
    regularised incomplete beta function; beta-binomial margins by a
    bracketed false-position search to ``|K_r(u) - y| <= 1e-10``.

    Raises
    ------
    UnsupportedFamilyError
        For the Dirac family.
    ToleranceError
        If the root search fails.
    """
    fam = SmoothingFamily.parse(family)
    r = np.asarray(r, dtype=np.int64)
    y = np.asarray(y, dtype=float)
    r, y = np.broadcast_arrays(r, y)
    if np.any((r < 1) | (r > m)):
        raise DomainError(f"ranks must lie in 1..{m}")
    if np.any(~(y >= 0) | ~(y <= 1)):
        raise DomainError("y must lie in [0, 1]")
    if fam.kind is SmoothingKind.DIRAC:
        raise UnsupportedFamilyError("quantile inversion needs continuous margins")
    if fam.kind is SmoothingKind.BINOMIAL:
        return special.betaincinv(r, m - r + 1, y)
    fam.check_window(m)
    return _invert_bb(m, fam.rho, r.ravel(), y.ravel()).reshape(r.shape)


def margin_quantile_invert(cop: SmoothEmpiricalCopula, j: int, r, y):
    """``K_{r, j}^{-1}(y)`` for the margin ``j`` of a smooth empirical copula."""
    out = invert_margin(cop.family, cop.m, r, y)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# sampling


def _draw(R: np.ndarray, family: SmoothingFamily, rng: np.random.Generator, B: int) -> np.ndarray:
    n, d = R.shape
    I = rng.integers(0, n, size=(B, n))
    W = rng.uniform(size=(B, n, d))
    if family.kind is SmoothingKind.BETABINOMIAL:
        # U# from the empirical beta copula of the same ranks: the same
        # algorithm with binomial margins and independent inner uniforms
        I2 = rng.integers(0, n, size=(B, n))
        r2 = R[I2]
        W = special.betaincinv(r2, n - r2 + 1, W)
    return invert_margin(family, n, R[I], W)


def _check_draw_ties(V: np.ndarray) -> None:
    srt = np.sort(V, axis=-2)
    if np.any(srt[..., 1:, :] == srt[..., :-1, :]):
        raise TieError("bootstrap sample with tied values")


def draw_bootstrap_samples(cop: SmoothEmpiricalCopula, rng: np.random.Generator, B: int) -> np.ndarray:
    """``B`` samples of size ``n`` from a smooth empirical copula, shape ``(B, n, d)``.

    The window of ``cop`` must be the full sample.
    """
    fam = cop.family
    if fam.kind is SmoothingKind.DIRAC:
        raise UnsupportedFamilyError("sampling requires a smooth (binomial or beta-binomial) family")
    V = _draw(cop.ranks.ranks, fam, rng, int(B))
    _check_draw_ties(V)
    return V


def draw_bootstrap_sample(cop: SmoothEmpiricalCopula, rng: np.random.Generator) -> np.ndarray:
    """One sample of size ``n`` from a smooth empirical copula, shape ``(n, d)``."""
    return draw_bootstrap_samples(cop, rng, 1)[0]


# ---------------------------------------------------------------------------
# Frank maximum pseudo-likelihood

_THETA_BRACKET = (-40.0, 40.0)
_MPL_TOL = 1e-8
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _mpl_points(values: np.ndarray) -> np.ndarray:
    # pseudo-observations rescaled by n/(n+1): R/(n+1)
    n = values.shape[-2]
    return batch_ranks(values) / (n + 1.0)


def frank_mpl_fit_batch(values: np.ndarray) -> np.ndarray:
    """Frank maximum pseudo-likelihood estimates for a stack of samples.

    Parameters
    ----------
    values : ndarray, shape (B, n, 2)

    Returns
    -------
    ndarray, shape (B,)
        Maximisers over ``[-40, 40]`` found by golden-section search to 1e-8.
    """
    u = _mpl_points(np.asarray(values, dtype=float))
    x, y = u[..., 0], u[..., 1]

    def negll(th):
        return -frank_log_density_batch(th, x, y).sum(axis=1)

    B = len(u)
    a = np.full(B, _THETA_BRACKET[0])
    b = np.full(B, _THETA_BRACKET[1])
    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc, fe = negll(c), negll(e)
    if not (np.all(np.isfinite(fc)) and np.all(np.isfinite(fe))):
        raise OptimFailure("Frank pseudo-likelihood is not finite on the search bracket")
    while np.max(b - a) > _MPL_TOL:
        left = fc < fe
        # minimum in [a, e] when f(c) < f(e), else in [c, b]
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - _INVPHI * (b - a), e)
        new_e = np.where(left, c, a + _INVPHI * (b - a))
        probe = np.where(left, new_c, new_e)
        fp = negll(probe)
        fe, fc = np.where(left, fc, fp), np.where(left, fp, fe)
        c, e = new_c, new_e
    return 0.5 * (a + b)


def frank_mpl_fit(pseudo) -> float:
    """Frank MPL estimate from a bivariate sample (or its pseudo-observations)."""
    v = np.asarray(pseudo.values if isinstance(pseudo, Sample) else pseudo, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise DomainError("Frank pseudo-likelihood needs a bivariate sample")
    return float(frank_mpl_fit_batch(v[None])[0])


# ---------------------------------------------------------------------------
# confidence intervals


def _interval(stats: np.ndarray, estimate: float, level: float, method: str) -> tuple[float, float]:
    lo_q, hi_q = np.quantile(stats, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    if method == "percentile":
        return float(lo_q), float(hi_q)
    if method == "basic":
        return float(2 * estimate - hi_q), float(2 * estimate - lo_q)
    raise DomainError(f"unknown interval method {method!r}")


def _check_ci_args(B: int, level: float) -> None:
    if B < 100:
        raise DomainError("use at least B = 100 bootstrap samples")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")


def ci_kendall(sample, family, B: int, level: float, rng: np.random.Generator,
               method: str = "percentile") -> tuple[float, float]:
    """Smooth-bootstrap confidence interval for Kendall's tau.

    Parameters
    ----------
    sample : Sample or array_like
    family : SmoothingFamily or str
        Binomial or beta-binomial smoothing.
    B : int
        Number of bootstrap samples.
    level : float
        Confidence level.
    rng : numpy.random.Generator
    method : {"percentile", "basic"}

    Returns
    -------
    (lo, hi)
    """
    _check_ci_args(B, level)
    s = as_sample(sample)
    cop = SmoothEmpiricalCopula(s, family)
    taus = kendall_tau_batch(draw_bootstrap_samples(cop, rng, B))
    est = kendall_tau(s) if method == "basic" else 0.0
    lo, hi = _interval(taus, est, level, method)
    return max(lo, -1.0), min(hi, 1.0)


def ci_frank_mpl(sample, family, B: int, level: float, rng: np.random.Generator,
                 method: str = "percentile") -> tuple[float, float]:
    """Smooth-bootstrap confidence interval for the Frank MPL parameter."""
    _check_ci_args(B, level)
    s = as_sample(sample)
    if s.d != 2:
        raise DomainError("Frank pseudo-likelihood needs a bivariate sample")
    cop = SmoothEmpiricalCopula(s, family)
    thetas = frank_mpl_fit_batch(draw_bootstrap_samples(cop, rng, B))
    est = frank_mpl_fit(s) if method == "basic" else 0.0
    return _interval(thetas, est, level, method)


@dataclass(frozen=True)
class CoverageResult:
    """Monte Carlo summary of a confidence-interval procedure."""

    coverage: float
    avg_length: float
    reps: int
    target: float


def _coverage_rep(rng, model, n, family, B, level, statistic, method):
    x = model.sample(n, rng)
    if statistic == "tau":
        lo, hi = ci_kendall(x, family, B, level, rng, method)
    else:
        lo, hi = ci_frank_mpl(x, family, B, level, rng, method)
    return lo, hi


def coverage_study(model: CopulaModel, n: int, family, B: int, reps: int, level: float = 0.95,
                   statistic: str = "tau", method: str = "percentile", seed: int = 0,
                   workers: int = 1) -> CoverageResult:
    """Coverage and average length of smooth-bootstrap intervals.

    Parameters
    ----------
    model : CopulaModel
        Data-generating copula; the target is its Kendall's tau
        (``statistic="tau"``) or its parameter (``statistic="frank"``).
    n, B, reps : int
        Sample size, bootstrap samples per interval and Monte Carlo replications.
    """
    if statistic not in ("tau", "frank"):
        raise DomainError(f"unknown statistic {statistic!r}")
    fam = SmoothingFamily.parse(family)
    target = model.tau if statistic == "tau" else model.theta
    res = run_replications(_coverage_rep, reps, seed, workers,
                           args=(model, n, fam, B, level, statistic, method))
    ivs = np.array(res)
    cover = (ivs[:, 0] <= target) & (target <= ivs[:, 1])
    return CoverageResult(float(cover.mean()), float(np.mean(ivs[:, 1] - ivs[:, 0])), reps, target)
