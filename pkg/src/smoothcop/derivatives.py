"""Estimators of the first-order partial derivatives of a copula.

Three constructions are available, all computed from the ranks of a window
of length ``p``:

* ``smooth_then_diff``: finite differences of a smooth empirical copula
  ``C^nu`` (the Dirac family gives the classical finite-difference
  estimators);
* ``diff_then_smooth``: the classical finite-difference estimator averaged
  against the smoothing law ``nu_u``, computed by exact enumeration of its
  finite support;
* ``bernstein``: the derivative of the empirical Bernstein copula of degree
  ``m`` in closed form.

Finite differences use a right bandwidth ``h`` and a left bandwidth ``h'``.
The ``nabla`` variant divides by ``h + h'``; the ``delta`` variant divides by
the length of the clipped interval ``(u_j + h) ^ 1 - (u_j - h') v 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .data import RankMatrix, Sample, _as_points, compute_ranks, empirical_copula_eval, kendall_tau
from .errors import BandwidthError, DomainError
from .models import CopulaModel
from .parallel import run_replications
from .smoothing import (SmoothEmpiricalCopula, SmoothingFamily, SmoothingKind,
                        _sf_from_logpmf, binomial_logpmf_table)

# atoms of the smoothing law lighter than this are skipped in the
# difference-then-smooth enumeration
ATOM_CUTOFF = 1e-14


class DiffKind(str, enum.Enum):
    NABLA = "nabla"
    DELTA = "delta"


class Placement(str, enum.Enum):
    SMOOTH_THEN_DIFF = "smooth_then_diff"
    DIFF_THEN_SMOOTH = "diff_then_smooth"
    BERNSTEIN = "bernstein"


@dataclass(frozen=True)
class Bandwidth:
    """Bandwidth rule for finite differences.

    Use the constructors :meth:`fixed`, :meth:`adaptive` and :meth:`explicit`.
    ``fixed(L)`` gives ``h = h' = (L p^{-1/2}) ^ 1/2`` for a window of length
    ``p``; ``adaptive`` replaces ``L`` by ``M2 (1 - |tau|)^a + M1`` with ``tau``
    the window's Kendall's tau.
    """

    rule: str = "fixed"
    L: float = 1.0
    M1: float = 0.5
    M2: float = 4.0
    a: float = 6.0
    h: float = 0.0
    h_left: float = 0.0

    @classmethod
    def fixed(cls, L: float = 1.0) -> "Bandwidth":
        return cls("fixed", L=float(L))

    @classmethod
    def adaptive(cls, M1: float = 0.5, M2: float = 4.0, a: float = 6.0) -> "Bandwidth":
        return cls("adaptive", M1=float(M1), M2=float(M2), a=float(a))

    @classmethod
    def explicit(cls, h: float, h_left: float | None = None) -> "Bandwidth":
        h_left = h if h_left is None else h_left
        if not (0 <= h <= 0.5 and 0 <= h_left <= 0.5):
            raise DomainError("bandwidths must lie in [0, 1/2]")
        return cls("explicit", h=float(h), h_left=float(h_left))

    def resolve(self, ranks: RankMatrix) -> tuple[float, float]:
        p = ranks.m
        if self.rule == "explicit":
            return self.h, self.h_left
        if self.rule == "fixed":
            h = min(self.L / np.sqrt(p), 0.5)
            return h, h
        if self.rule == "adaptive":
            tau = _rank_tau(ranks)
            h = min((self.M2 * (1 - abs(tau)) ** self.a + self.M1) / np.sqrt(p), 0.5)
            return h, h
        raise DomainError(f"unknown bandwidth rule {self.rule!r}")


@dataclass(frozen=True)
class BernsteinDegree:
    """Degree rule ``m = floor(c p^{1/2}) v 2`` for the Bernstein estimator.

    ``c = L`` for the fixed rule, ``c = c1 |tau|^power + c0`` for the adaptive
    one; ``degree`` fixes ``m`` directly.
    """

    rule: str = "adaptive"
    L: float = 1.0
    c0: float = 0.5
    c1: float = 4.0
    power: float = 1.5
    degree: int = 0

    @classmethod
    def fixed(cls, L: float) -> "BernsteinDegree":
        return cls("fixed", L=float(L))

    @classmethod
    def adaptive(cls, c0: float = 0.5, c1: float = 4.0, power: float = 1.5) -> "BernsteinDegree":
        return cls("adaptive", c0=c0, c1=c1, power=power)

    @classmethod
    def exact(cls, degree: int) -> "BernsteinDegree":
        if degree < 2:
            raise DomainError("Bernstein degree must be at least 2")
        return cls("exact", degree=int(degree))

    @property
    def bound_constant(self) -> float:
        """Largest value of the multiplier ``c`` of ``p^{1/2}``."""
        if self.rule == "fixed":
            return self.L
        if self.rule == "adaptive":
            return self.c1 + self.c0
        return float(self.degree)

    def resolve(self, ranks: RankMatrix) -> int:
        p = ranks.m
        if self.rule == "exact":
            return self.degree
        if self.rule == "fixed":
            c = self.L
        elif self.rule == "adaptive":
            c = self.c1 * abs(_rank_tau(ranks)) ** self.power + self.c0
        else:
            raise DomainError(f"unknown degree rule {self.rule!r}")
        return max(int(np.floor(c * np.sqrt(p))), 2)


@dataclass(frozen=True)
class PdEstimatorSpec:
    """Choice of partial-derivative estimator.

    Parameters
    ----------
    diff : {"delta", "nabla"}
    placement : {"smooth_then_diff", "diff_then_smooth", "bernstein"}
        ``"none"`` is accepted as smooth-then-diff with the Dirac family.
    family : SmoothingFamily or str
        Smoothing family (ignored for the Bernstein estimator).
    truncate : bool
        Clamp the finite differences to ``[0, 1]``.
    bandwidth : Bandwidth
    degree : BernsteinDegree
    """

    diff: DiffKind = DiffKind.DELTA
    placement: Placement = Placement.SMOOTH_THEN_DIFF
    family: SmoothingFamily = field(default_factory=lambda: SmoothingFamily("dirac"))
    truncate: bool = True
    bandwidth: Bandwidth = field(default_factory=Bandwidth.fixed)
    degree: BernsteinDegree = field(default_factory=BernsteinDegree)

    def __post_init__(self):
        object.__setattr__(self, "diff", DiffKind(self.diff))
        placement = self.placement
        if placement == "none":
            placement = Placement.SMOOTH_THEN_DIFF
            object.__setattr__(self, "family", SmoothingFamily("dirac"))
        object.__setattr__(self, "placement", Placement(placement))
        object.__setattr__(self, "family", SmoothingFamily.parse(self.family))

    @property
    def label(self) -> str:
        if self.placement is Placement.BERNSTEIN:
            return "bernstein"
        order = "" if self.placement is Placement.SMOOTH_THEN_DIFF else "-dts"
        trunc = "" if self.truncate else "-raw"
        return f"{self.family.name}-{self.diff.value}{order}{trunc}"


def _rank_tau(ranks: RankMatrix) -> float:
    return kendall_tau(Sample(ranks.ranks.astype(float)))


def _to_ranks(window_data) -> RankMatrix:
    if isinstance(window_data, RankMatrix):
        return window_data
    return compute_ranks(window_data)


def adaptive_bandwidth(sample_window, M1: float = 0.5, M2: float = 4.0, a: float = 6.0) -> tuple[float, float]:
    """Kendall-tau adaptive bandwidths ``h = h' = ([M2 (1-|tau|)^a + M1] p^{-1/2}) ^ 1/2``."""
    ranks = _to_ranks(sample_window)
    if ranks.m < 2:
        raise DomainError("window length must be at least 2")
    return Bandwidth.adaptive(M1, M2, a).resolve(ranks)


def adaptive_bernstein_degree(sample_window) -> int:
    """Kendall-tau adaptive degree ``m = floor((4 |tau|^{3/2} + 1/2) p^{1/2}) v 2``."""
    ranks = _to_ranks(sample_window)
    if ranks.m < 2:
        raise DomainError("window length must be at least 2")
    return BernsteinDegree.adaptive().resolve(ranks)


# ---------------------------------------------------------------------------
# finite differences


def _shifted(pts: np.ndarray, j: int, h: float, hl: float):
    up, dn = pts.copy(), pts.copy()
    up[:, j] = np.minimum(pts[:, j] + h, 1.0)
    dn[:, j] = np.maximum(pts[:, j] - hl, 0.0)
    return up, dn


def _denominator(diff: DiffKind, up: np.ndarray, dn: np.ndarray, j: int, h: float, hl: float) -> np.ndarray:
    if diff is DiffKind.NABLA:
        den = np.full(len(up), h + hl)
    else:
        den = up[:, j] - dn[:, j]
    if np.any(den <= 0):
        raise BandwidthError("finite-difference denominator is zero; increase h + h'")
    return den


def finite_difference(cfun, j: int, pts: np.ndarray, h: float, hl: float,
                      diff=DiffKind.DELTA, truncate: bool = True) -> np.ndarray:
    """Finite-difference derivative of a copula estimator ``cfun(points)``.

    Parameters
    ----------
    cfun : callable
        Maps an ``(P, d)`` array of points to ``(P,)`` values.
    j : int
        Margin (0-based).
    pts : ndarray, shape (P, d)
    h, hl : float
        Right and left bandwidths.
    """
    diff = DiffKind(diff)
    if h + hl <= 0:
        raise BandwidthError("h + h' must be positive")
    up, dn = _shifted(pts, j, h, hl)
    den = _denominator(diff, up, dn, j, h, hl)
    vals = cfun(np.concatenate([up, dn]))
    out = (vals[:len(pts)] - vals[len(pts):]) / den
    return np.clip(out, 0.0, 1.0) if truncate else out


def _smoothing_pmf_grid(cop: SmoothEmpiricalCopula, u: np.ndarray) -> np.ndarray:
    """Joint pmf of ``m W`` under ``nu_u`` on ``{0..m}^d``, shape ``(m+1,)*d``."""
    m, d = cop.m, cop.d
    fam = cop.family
    sf = [fam.survival_table(m, u[j:j + 1])[0] for j in range(d)]  # P(mW_j >= a), a = 0..m
    if fam.kind is SmoothingKind.BINOMIAL:
        marg = [s - np.append(s[1:], 0.0) for s in sf]
        out = marg[0]
        for j in range(1, d):
            out = np.multiply.outer(out, marg[j])
        return out
    # joint survival P(mW >= a) = Cbar(s_1(a_1), ..., s_d(a_d)), a_j = 0..m+1,
    # with Cbar the empirical beta copula of the window; difference along axes
    R = cop.ranks.ranks
    factors = []
    for j in range(d):
        s = np.append(sf[j], 0.0)
        tb = _sf_from_logpmf(binomial_logpmf_table(m, s))   # (m+2, m+1)
        factors.append(tb[:, R[:, j]])                     # (m+2, m)
    letters = "abc"[:d]
    G = np.einsum(",".join(f"{x}k" for x in letters) + "->" + letters, *factors) / m
    for ax in range(d):
        G = -np.diff(G, axis=ax)
    return np.maximum(G, 0.0)


def _diff_then_smooth(ranks: RankMatrix, spec: PdEstimatorSpec, j: int, pts: np.ndarray,
                      h: float, hl: float) -> np.ndarray:
    cop = SmoothEmpiricalCopula(ranks, spec.family)
    m, d = ranks.m, ranks.d
    if spec.family.kind is SmoothingKind.DIRAC:
        return finite_difference(lambda x: empirical_copula_eval(ranks, x), j, pts, h, hl,
                                 spec.diff, spec.truncate)
    # classical estimator on the whole support {0, 1/m, ..., 1}^d
    axes = np.meshgrid(*([np.arange(m + 1) / m] * d), indexing="ij")
    atoms = np.stack([a.ravel() for a in axes], axis=1)
    dot = finite_difference(lambda x: empirical_copula_eval(ranks, x), j, atoms, h, hl,
                            spec.diff, spec.truncate).reshape((m + 1,) * d)
    out = np.empty(len(pts))
    for p, u in enumerate(pts):
        pmf = _smoothing_pmf_grid(cop, u)
        pmf = np.where(pmf < ATOM_CUTOFF, 0.0, pmf)
        out[p] = np.sum(pmf * dot)
    return out


def pd_bernstein(ranks, j: int, u, m_degree: int):
    """Partial derivative of the empirical Bernstein copula of degree ``m``.

    ``(m/p) sum_i b_{m-1, u_j}(ceil(m R_ij / p) - 1) prod_{t != j} Bbar_{m, u_t}(ceil(m R_it / p) - 1)``
    with ``b`` the binomial pmf and ``Bbar`` the binomial survival function.
    """
    ranks = _to_ranks(ranks)
    if m_degree < 2:
        raise DomainError("Bernstein degree must be at least 2")
    pts, scalar = _as_points(u, ranks.d)
    p, d, m = ranks.m, ranks.d, int(m_degree)
    R = ranks.ranks
    c = -(-(m * R) // p) - 1                       # ceil(m R / p) - 1, in 0..m-1
    pmf = np.exp(binomial_logpmf_table(m - 1, pts[:, j]))    # (P, m)
    terms = pmf[:, c[:, j]]
    for t in range(d):
        if t == j:
            continue
        sf = _sf_from_logpmf(binomial_logpmf_table(m, pts[:, t]))  # P(Bin >= r)
        terms = terms * sf[:, c[:, t] + 1]
    out = m / p * terms.sum(axis=1)
    return float(out[0]) if scalar else out


def pd_eval(spec: PdEstimatorSpec, window_data, j: int, u):
    """Evaluate a partial-derivative estimator on a window.

    Parameters
    ----------
    spec : PdEstimatorSpec
    window_data : Sample, RankMatrix or array_like
        Observations (or ranks) of the window.
    j : int
        Margin (0-based).
    u : array_like, shape (d,) or (P, d)

    Raises
    ------
    BandwidthError
        If a finite-difference denominator vanishes.
    """
    ranks = _to_ranks(window_data)
    if not 0 <= j < ranks.d:
        raise DomainError(f"margin index {j} out of range")
    pts, scalar = _as_points(u, ranks.d)
    if spec.placement is Placement.BERNSTEIN:
        out = pd_bernstein(ranks, j, pts, spec.degree.resolve(ranks))
    else:
        h, hl = spec.bandwidth.resolve(ranks)
        if spec.placement is Placement.SMOOTH_THEN_DIFF:
            cop = SmoothEmpiricalCopula(ranks, spec.family)
            out = finite_difference(cop.evaluate, j, pts, h, hl, spec.diff, spec.truncate)
        else:
            out = _diff_then_smooth(ranks, spec, j, pts, h, hl)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# integrated mean squared error


def open_grid(k: int, d: int) -> np.ndarray:
    """Uniform grid ``{1/(k+1), ..., k/(k+1)}^d`` as a ``(k^d, d)`` array."""
    g = np.arange(1, k + 1) / (k + 1)
    axes = np.meshgrid(*([g] * d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


def default_imse_grid(d: int) -> int:
    return 47 if d == 2 else 21


def _estimate(spec, ranks: RankMatrix, j: int, pts: np.ndarray) -> np.ndarray:
    if isinstance(spec, PdEstimatorSpec):
        return pd_eval(spec, ranks, j, pts)
    return np.asarray(spec(ranks, j, pts), dtype=float)


def _ise_rep(rng, specs, model, j, n, pts, truth):
    x = model.sample(n, rng)
    ranks = compute_ranks(x)
    return [float(np.mean((_estimate(s, ranks, j, pts) - truth) ** 2)) for s in specs]


def ise_study(specs, model: CopulaModel, j: int, n: int, reps: int, grid: int | None = None,
              seed: int = 0, workers: int = 1) -> np.ndarray:
    """Integrated squared errors of several estimators on common samples.

    Each entry of ``specs`` is a :class:`PdEstimatorSpec` or a callable
    ``est(ranks, j, points)`` returning derivative estimates.

    Returns
    -------
    ndarray, shape (reps, len(specs))
        Grid means of squared errors, one row per Monte Carlo sample, so that
        estimators can be compared pairwise.
    """
    grid = default_imse_grid(model.d) if grid is None else grid
    pts = open_grid(grid, model.d)
    truth = model.partial_derivative(j, pts)
    res = run_replications(_ise_rep, reps, seed, workers, args=(list(specs), model, j, n, pts, truth))
    return np.array(res).reshape(reps, len(specs))


def imse(spec: PdEstimatorSpec, model: CopulaModel, j: int, n: int, reps: int,
         grid: int | None = None, seed: int = 0, workers: int = 1) -> float:
    """Monte Carlo integrated mean squared error of one estimator.

    The integral over the unit cube is a mean over a uniform open grid
    (``47^2`` points for ``d = 2``, ``21^3`` for ``d = 3`` by default).
    """
    return float(ise_study([spec], model, j, n, reps, grid, seed, workers)[:, 0].mean())
