"""Multiplier sequences and sequential multiplier bootstrap replicates.

Replicates of the (smooth) sequential empirical copula process on a window
``floor(ns)+1 .. floor(nt)``:

    B(s, t, u) = n^{-1/2} sum_{i in window} xi_i {K_{R_i}(u) - C^nu(u)}
    C(s, t, u) = B(s, t, u) - sum_j Cdot_j(u) B(s, t, u^{(j)})

where ``u^{(j)}`` has all coordinates but ``j`` equal to 1. With the
``global`` scope (hat replicates) ranks, ``C^nu`` and ``Cdot_j`` come from the
whole sample; with the ``local`` scope (check replicates) from the window.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
import numpy as np

from .data import RankMatrix, Sample, _as_points, as_sample, batch_ranks, compute_ranks
from .derivatives import PdEstimatorSpec, open_grid, pd_eval
from .errors import ConfigError, DomainError
from .models import CopulaModel
from .parallel import run_replications
from .smoothing import SmoothEmpiricalCopula, SmoothingFamily

_FUZZ = 1e-9


class MultiplierKind(str, enum.Enum):
    IID = "iid"
    DEPENDENT = "dependent"


def default_bandwidth(n: int) -> int:
    """Default dependence length ``max(1, floor(1.25 n^{1/3}))``."""
    return max(1, int(np.floor(1.25 * n ** (1.0 / 3.0))))


@dataclass(frozen=True)
class MultiplierConfig:
    """Multiplier sequence settings.

    Parameters
    ----------
    kind : {"iid", "dependent"}
        i.i.d. Rademacher variates, or an ``ell``-dependent moving average
        of Gaussian variates.
    ell : int, optional
        Dependence length of the dependent sequence; defaults to
        :func:`default_bandwidth` of the sequence length.
    kernel : str
        Only ``"bartlett"``: ``E(xi_0 xi_h) = (1 - |h|/ell)^+``.
    """

    kind: MultiplierKind = MultiplierKind.IID
    ell: int | None = None
    kernel: str = "bartlett"

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", MultiplierKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown multiplier kind {self.kind!r}") from None
        if self.kernel != "bartlett":
            raise ConfigError(f"unsupported multiplier kernel {self.kernel!r}")
        if self.ell is not None and int(self.ell) < 1:
            raise ConfigError("ell must be at least 1")

    def resolved_ell(self, n: int) -> int:
        return default_bandwidth(n) if self.ell is None else int(self.ell)

    def autocovariance(self, h: int, n: int) -> float:
        """``E(xi_0 xi_h)`` for a sequence of length ``n``."""
        if self.kind is MultiplierKind.IID:
            return 1.0 if h == 0 else 0.0
        ell = self.resolved_ell(n)
        return max(0.0, 1.0 - abs(h) / ell)


def gen_multipliers(cfg: MultiplierConfig, n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw multiplier sequences of length ``n``.

    The dependent sequence is ``xi_i = ell^{-1/2} sum_{h=0}^{ell-1} Z_{i+h}``
    with ``Z`` i.i.d. standard normal, which is ``ell``-dependent with mean 0,
    variance 1 and Bartlett autocovariance ``(1 - |h|/ell)^+``.

    Returns
    -------
    ndarray, shape (n,) or (size, n)

    Raises
    ------
    ConfigError
        If ``ell >= n`` for the dependent kind.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    shape = (1 if size is None else int(size), n)
    if cfg.kind is MultiplierKind.IID:
        out = rng.choice(np.array([-1.0, 1.0]), size=shape)
    else:
        ell = cfg.resolved_ell(n)
        if ell >= n:
            raise ConfigError(f"dependence length ell={ell} must be smaller than n={n}")
        z = rng.standard_normal((shape[0], n + ell - 1))
        cs = np.concatenate([np.zeros((shape[0], 1)), np.cumsum(z, axis=1)], axis=1)
        out = (cs[:, ell:] - cs[:, :-ell]) / np.sqrt(ell)
    return out[0] if size is None else out


@dataclass(frozen=True)
class SequentialWindow:
    """Window ``(s, t)`` with ``0 <= s <= t <= 1``, i.e. indices ``floor(ns)+1 .. floor(nt)``."""

    s: float
    t: float

    def __post_init__(self):
        if not 0.0 <= self.s <= self.t <= 1.0:
            raise DomainError(f"need 0 <= s <= t <= 1, got ({self.s}, {self.t})")

    def bounds(self, n: int) -> tuple[int, int]:
        """0-based half-open index range ``[floor(ns), floor(nt))``."""
        a = int(np.floor(n * self.s + _FUZZ))
        b = int(np.floor(n * self.t + _FUZZ))
        return a, b

    def length(self, n: int) -> int:
        a, b = self.bounds(n)
        return b - a

    def lam(self, n: int) -> float:
        return self.length(n) / n

    @classmethod
    def from_indices(cls, a: int, b: int, n: int) -> "SequentialWindow":
        return cls(a / n, b / n)


class Scope(str, enum.Enum):
    GLOBAL = "global"   # hat replicates
    LOCAL = "local"     # check replicates


def _as_window(window) -> SequentialWindow:
    if isinstance(window, SequentialWindow):
        return window
    s, t = window
    return SequentialWindow(float(s), float(t))


def corner_points(pts: np.ndarray, j: int) -> np.ndarray:
    """Points ``u^{(j)}``: every coordinate but ``j`` set to 1."""
    out = np.ones_like(pts)
    out[:, j] = pts[:, j]
    return out


@dataclass
class _ScopedEstimator:
    cop: SmoothEmpiricalCopula
    rows: slice          # rows of cop's rank matrix belonging to the window

    def kernel(self, pts):
        K = self.cop.kernel_matrix(pts)
        return K[:, self.rows], K.mean(axis=1)


def _scoped(sample: Sample, a: int, b: int, family, scope: Scope) -> _ScopedEstimator:
    if scope is Scope.GLOBAL:
        return _ScopedEstimator(SmoothEmpiricalCopula(compute_ranks(sample), family), slice(a, b))
    return _ScopedEstimator(SmoothEmpiricalCopula(compute_ranks(sample, a + 1, b), family), slice(None))


def _multipliers(xi, n: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != n:
        raise DomainError(f"need {n} multipliers per replicate, got {x.shape[1]}")
    return x, single


def _finish(out: np.ndarray, single: bool, scalar: bool):
    if single:
        out = out[0]
        return float(out[0]) if scalar else out
    return out[:, 0] if scalar else out


def replicate_B(sample, window, multipliers, family, scope, u):
    """Multiplier replicate of the (smooth) sequential empirical copula process.

    Parameters
    ----------
    sample : Sample or array_like, shape (n, d)
    window : SequentialWindow or (s, t)
    multipliers : array_like, shape (n,) or (B, n)
        One sequence of length ``n`` per replicate.
    family : SmoothingFamily or str
        The Dirac family gives the non-smooth replicates.
    scope : {"global", "local"}
    u : array_like, shape (d,) or (P, d)

    Returns
    -------
    float, ndarray of shape (P,), (B,) or (B, P)
        Following the shapes of ``multipliers`` and ``u``.
    """
    s = as_sample(sample)
    fam = SmoothingFamily.parse(family)
    scope = Scope(scope)
    xi, single = _multipliers(multipliers, s.n)
    pts, scalar = _as_points(u, s.d)
    a, b = _as_window(window).bounds(s.n)
    if a == b:
        return _finish(np.zeros((len(xi), len(pts))), single, scalar)
    est = _scoped(s, a, b, fam, scope)
    K, C = est.kernel(pts)
    out = xi[:, a:b] @ (K - C[:, None]).T / np.sqrt(s.n)
    return _finish(out, single, scalar)


def replicate_C(sample, window, multipliers, family, scope, pd, u):
    """Multiplier replicate of the sequential copula process.

    ``B(u) - sum_j Cdot_j(u) B(u^{(j)})`` with ``Cdot_j`` clipped to ``[0, 1]``.

    Parameters
    ----------
    pd : PdEstimatorSpec or callable
        Estimator evaluated on the scoped window (whole sample for the global
        scope, the window for the local one), or a function ``pd(j, points)``
        returning derivative values, e.g. a model's true derivatives.

    Other parameters are as in :func:`replicate_B`.
    """
    s = as_sample(sample)
    fam = SmoothingFamily.parse(family)
    scope = Scope(scope)
    xi, single = _multipliers(multipliers, s.n)
    pts, scalar = _as_points(u, s.d)
    a, b = _as_window(window).bounds(s.n)
    if a == b:
        return _finish(np.zeros((len(xi), len(pts))), single, scalar)
    est = _scoped(s, a, b, fam, scope)
    P = len(pts)
    allpts = np.concatenate([pts] + [corner_points(pts, j) for j in range(s.d)])
    K, C = est.kernel(allpts)
    Bv = xi[:, a:b] @ (K - C[:, None]).T / np.sqrt(s.n)
    out = Bv[:, :P].copy()
    pd_window = est.cop.ranks
    for j in range(s.d):
        if isinstance(pd, PdEstimatorSpec):
            dj = pd_eval(pd, pd_window, j, pts)
        else:
            dj = np.asarray(pd(j, pts), dtype=float)
        out -= np.clip(dj, 0.0, 1.0) * Bv[:, (j + 1) * P:(j + 2) * P]
    return _finish(out, single, scalar)


# ---------------------------------------------------------------------------
# covariance and quantile estimation


class Functional(str, enum.Enum):
    KS = "ks"
    CVM = "cvm"


def estimate_covariance(reps) -> np.ndarray:
    """Empirical covariance matrix of replicate trajectories ``(B, P)``."""
    r = np.asarray(reps, dtype=float)
    if r.ndim != 2 or r.shape[0] < 2:
        raise DomainError("need a (B, P) array with B >= 2")
    c = r - r.mean(axis=0)
    return c.T @ c / (r.shape[0] - 1)


def functional_values(reps, functional) -> np.ndarray:
    """Kolmogorov-Smirnov (max |.|) or Cramer-von Mises (mean of squares) over the grid."""
    r = np.atleast_2d(np.asarray(reps, dtype=float))
    f = Functional(functional)
    return np.max(np.abs(r), axis=1) if f is Functional.KS else np.mean(r ** 2, axis=1)


def estimate_functional_quantile(reps, functional, q: float, centered: bool = True) -> float:
    """Empirical ``q``-quantile of a functional of (centred) replicate trajectories."""
    r = np.asarray(reps, dtype=float)
    if centered:
        r = r - r.mean(axis=0)
    return float(np.quantile(functional_values(r, functional), q))


def cov_points(d: int) -> np.ndarray:
    """Evaluation points ``{1/3, 2/3}^d``."""
    g = np.array([1.0, 2.0]) / 3.0
    axes = np.meshgrid(*([g] * d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


def functional_grid(d: int) -> np.ndarray:
    """Grid for the functionals: ``10^2`` points for ``d = 2``, ``5^3`` for ``d = 3``."""
    return open_grid(10 if d == 2 else 5, d)


def _target_batch(rng, model, n, family, pts, size):
    x = model.sample(n * size, rng).reshape(size, n, model.d)
    R = batch_ranks(x)
    out = np.empty((size, len(pts)))
    for i in range(size):
        cop = SmoothEmpiricalCopula(RankMatrix.from_ranks(R[i]), family)
        out[i] = cop.evaluate(pts)
    return np.sqrt(n) * (out - model.cdf(pts))


def target_process_draws(model: CopulaModel, n: int, family, pts: np.ndarray, draws: int,
                         seed: int = 0, workers: int = 1, batch: int = 500) -> np.ndarray:
    """Draws of ``sqrt(n) (C^nu_{1:n}(u) - C(u))`` at the points, shape ``(draws, P)``."""
    fam = SmoothingFamily.parse(family)
    nb = -(-draws // batch)
    res = run_replications(_target_batch, nb, seed, workers, args=(model, n, fam, pts, batch), stream=1)
    return np.concatenate(res)[:draws]


def _true_pd(model):
    return lambda j, p: model.partial_derivative(j, p)


def _cov_rep(rng, model, n, families, B, mult, pts, target_cov):
    x = model.sample(n, rng)
    xi = gen_multipliers(mult, n, rng, size=B)
    errs = []
    for fam in families:
        reps = replicate_C(x, (0.0, 1.0), xi, fam, Scope.GLOBAL, _true_pd(model), pts)
        errs.append((estimate_covariance(reps) - target_cov) ** 2)
    return np.array(errs)


@dataclass(frozen=True)
class CovarianceStudy:
    """Mean squared errors of multiplier covariance estimates (per family, per entry)."""

    points: np.ndarray
    target: np.ndarray
    mse: dict            # family name -> (P, P) array of mean squared errors

    def mean_mse(self, name: str) -> float:
        iu = np.triu_indices(len(self.points))
        return float(self.mse[name][iu].mean())


def covariance_study(model: CopulaModel, n: int, target_family, replicate_families, B: int, reps: int,
                     target_draws: int = 20000, mult: MultiplierConfig | None = None,
                     seed: int = 0, workers: int = 1) -> CovarianceStudy:
    """Accuracy of multiplier estimates of the covariance of the smooth copula process.

    The target is the covariance of ``sqrt(n) (C^nu_{1:n} - C)`` at the points
    ``{1/3, 2/3}^d``, estimated from ``target_draws`` independent samples; the
    replicates use the true partial derivatives of ``model``. All replicate
    families share the same data and multipliers in each replication.
    """
    mult = mult or MultiplierConfig()
    pts = cov_points(model.d)
    target = estimate_covariance(target_process_draws(model, n, target_family, pts, target_draws, seed, workers))
    fams = [SmoothingFamily.parse(f) for f in replicate_families]
    res = np.array(run_replications(_cov_rep, reps, seed, workers, args=(model, n, fams, B, mult, pts, target)))
    mse = {f.name: res[:, i].mean(axis=0) for i, f in enumerate(fams)}
    return CovarianceStudy(pts, target, mse)


def _quant_rep(rng, model, n, families, B, mult, pts, functional, qs, target_q):
    x = model.sample(n, rng)
    xi = gen_multipliers(mult, n, rng, size=B)
    out = []
    for fam in families:
        reps = replicate_C(x, (0.0, 1.0), xi, fam, Scope.GLOBAL, _true_pd(model), pts)
        vals = functional_values(reps - reps.mean(axis=0), functional)
        out.append((np.quantile(vals, qs) - target_q) ** 2)
    return np.array(out)


@dataclass(frozen=True)
class QuantileStudy:
    """Mean squared errors of multiplier quantile estimates of a functional."""

    functional: str
    levels: np.ndarray
    target: np.ndarray
    mse: dict            # family name -> array of mean squared errors per level


def quantile_study(model: CopulaModel, n: int, target_family, replicate_families, B: int, reps: int,
                   functional="cvm", levels=(0.9, 0.95, 0.99), target_draws: int = 20000,
                   mult: MultiplierConfig | None = None, seed: int = 0, workers: int = 1) -> QuantileStudy:
    """Accuracy of multiplier estimates of high quantiles of KS/CvM functionals."""
    mult = mult or MultiplierConfig()
    f = Functional(functional)
    pts = functional_grid(model.d)
    qs = np.asarray(levels, dtype=float)
    draws = target_process_draws(model, n, target_family, pts, target_draws, seed, workers)
    target_q = np.quantile(functional_values(draws, f), qs)
    fams = [SmoothingFamily.parse(fm) for fm in replicate_families]
    res = np.array(run_replications(_quant_rep, reps, seed, workers,
                                    args=(model, n, fams, B, mult, pts, f, qs, target_q)))
    mse = {fm.name: res[:, i].mean(axis=0) for i, fm in enumerate(fams)}
    return QuantileStudy(f.value, qs, target_q, mse)
