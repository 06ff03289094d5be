"""Smoothing distributions and smooth empirical copulas.

A smooth empirical copula of a window of length ``m`` averages kernel terms

    K_r(u) = Cbar(Fbar_1((r_1 - 1)/m), ..., Fbar_d((r_d - 1)/m))

over the rank vectors ``r`` of the window, where ``Fbar_j`` are survival
functions of the smoothing margins (laws of ``W / m`` with ``W`` supported on
``0..m`` and mean ``m u_j``) and ``Cbar`` is their survival copula.

* ``Dirac``: no smoothing, gives the classical empirical copula.
* ``Binomial``: ``W ~ Bin(m, u_j)`` with independent margins, gives the
  empirical beta copula.
* ``BetaBinomial(rho)``: ``W ~ BetaBin(m, alpha, beta)`` with
  ``alpha = u (m - rho)/(rho - 1)``, ``beta = (1 - u)(m - rho)/(rho - 1)``,
  coupled by the empirical beta copula of the same window (data-adaptive).

All survival values are obtained from pmfs computed in log space and summed
from the upper tail, so that large ``m`` neither overflows nor loses the
small tail probabilities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .data import RankMatrix, Sample, _as_points, compute_ranks, rank_count_below
from .errors import DomainError

# Target size (in float64 entries) of the temporary arrays used when
# evaluating the beta-binomial estimator.
_CHUNK_ENTRIES = 2_000_000


class SmoothingKind(str, enum.Enum):
    DIRAC = "dirac"
    BINOMIAL = "binomial"
    BETABINOMIAL = "betabinomial"


_KIND_ALIASES = {
    "dirac": SmoothingKind.DIRAC,
    "none": SmoothingKind.DIRAC,
    "bin": SmoothingKind.BINOMIAL,
    "binomial": SmoothingKind.BINOMIAL,
    "beta": SmoothingKind.BINOMIAL,
    "betab": SmoothingKind.BETABINOMIAL,
    "betab4": SmoothingKind.BETABINOMIAL,
    "betabinomial": SmoothingKind.BETABINOMIAL,
    "beta-binomial": SmoothingKind.BETABINOMIAL,
}


@dataclass(frozen=True)
class SmoothingFamily:
    """Family of smoothing distributions.

    Parameters
    ----------
    kind : SmoothingKind or str
        ``"dirac"``, ``"bin"`` / ``"binomial"`` or ``"betab4"`` / ``"betabinomial"``.
    rho : float
        Beta-binomial dispersion parameter (``1 < rho < m``), ignored otherwise.
    """

    kind: SmoothingKind
    rho: float = 4.0

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, SmoothingKind):
            key = str(kind).strip().lower()
            if key not in _KIND_ALIASES:
                raise DomainError(f"unknown smoothing family {kind!r}")
            kind = _KIND_ALIASES[key]
        object.__setattr__(self, "kind", kind)
        rho = float(self.rho)
        if kind is SmoothingKind.BETABINOMIAL and not rho > 1.0:
            raise DomainError(f"beta-binomial smoothing requires rho > 1, got {rho}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def parse(cls, spec) -> "SmoothingFamily":
        """Accept a family, a kind or a name such as ``"betab4"``."""
        if isinstance(spec, SmoothingFamily):
            return spec
        return cls(spec)

    @property
    def name(self) -> str:
        if self.kind is SmoothingKind.BETABINOMIAL:
            return f"betab{self.rho:g}"
        return {"dirac": "dirac", "binomial": "bin"}[self.kind.value]

    @property
    def is_smooth(self) -> bool:
        return self.kind is not SmoothingKind.DIRAC

    def check_window(self, m: int) -> None:
        if self.kind is SmoothingKind.BETABINOMIAL and not self.rho < m:
            raise DomainError(f"beta-binomial smoothing requires rho < m (rho={self.rho}, m={m})")

    def survival_table(self, m: int, x) -> np.ndarray:
        """Margin survival values ``P(W >= r)`` for ``r = 0..m``.

        Parameters
        ----------
        m : int
            Window length.
        x : array_like, shape (V,)
            Values of ``u_j`` in ``[0, 1]``.

        Returns
        -------
        ndarray, shape (V, m + 1)
            Read-only; cached per ``(family, m, x)``.
        """
        self.check_window(m)
        x = np.ascontiguousarray(x, dtype=float)
        return _survival_table_cached(self.kind, self.rho, int(m), x.tobytes())

    def variance(self, m: int, u) -> np.ndarray:
        """Variance of the scaled margin ``W / m`` at ``u``, from the pmf."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        sf = self.survival_table(m, u)
        pmf = sf - np.concatenate([sf[:, 1:], np.zeros((len(u), 1))], axis=1)
        k = np.arange(m + 1) / m
        mean = pmf @ k
        return pmf @ k ** 2 - mean ** 2


# ---------------------------------------------------------------------------
# pmf and survival tables


def _sf_from_logpmf(logpmf: np.ndarray) -> np.ndarray:
    pmf = np.exp(logpmf)
    # sum from the upper tail so that small survival values stay accurate
    sf = np.cumsum(pmf[..., ::-1], axis=-1)[..., ::-1]
    sf[..., 0] = 1.0
    return np.minimum(sf, 1.0)


def _cdf_from_logpmf(logpmf: np.ndarray) -> np.ndarray:
    return np.minimum(np.cumsum(np.exp(logpmf), axis=-1), 1.0)


def _log_binom_coef(p: int) -> np.ndarray:
    k = np.arange(p + 1)
    return special.gammaln(p + 1) - special.gammaln(k + 1) - special.gammaln(p - k + 1)


def binomial_logpmf_table(p: int, x) -> np.ndarray:
    """``log P(Bin(p, x) = k)`` for ``k = 0..p``; shape ``(len(x), p + 1)``."""
    x = np.asarray(x, dtype=float)[..., None]
    k = np.arange(p + 1)
    return _log_binom_coef(p) + special.xlogy(k, x) + special.xlog1py(p - k, -x)


def beta_binomial_logpmf_table(p: int, alpha, beta) -> np.ndarray:
    """``log P(BetaBin(p, alpha, beta) = k)`` for ``k = 0..p``."""
    a = np.asarray(alpha, dtype=float)[..., None]
    b = np.asarray(beta, dtype=float)[..., None]
    k = np.arange(p + 1)
    return _log_binom_coef(p) + special.betaln(k + a, p - k + b) - special.betaln(a, b)


def _bb_params(m: int, t, rho: float):
    c = (m - rho) / (rho - 1.0)
    t = np.asarray(t, dtype=float)
    return t * c, (1.0 - t) * c


def _bb_inner(m: int, t: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # parameters below the normal range are indistinguishable from the limits
    # in double precision (and make betaln overflow), so they are sent there
    a, b = _bb_params(m, t, rho)
    tiny = np.finfo(float).tiny
    return (a >= tiny) & (b >= tiny), a, b


def _beta_binomial_sf_t(m: int, t: np.ndarray, rho: float) -> np.ndarray:
    # survival table with the t in {0, 1} limits (mass at 0, resp. at m)
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (m + 1,))
    inner, a, b = _bb_inner(m, t, rho)
    if np.any(inner):
        out[inner] = _sf_from_logpmf(beta_binomial_logpmf_table(m, a[inner], b[inner]))
    lo, hi = ~inner & (t < 0.5), ~inner & (t >= 0.5)
    out[lo] = 0.0
    out[lo, 0] = 1.0
    out[hi] = 1.0
    return out


def _dirac_sf(m: int, x: np.ndarray) -> np.ndarray:
    c = rank_count_below(x, m)
    return (np.arange(m + 1)[None, :] <= c[:, None]).astype(float)


@lru_cache(maxsize=4096)
def _survival_table_cached(kind: SmoothingKind, rho: float, m: int, xbytes: bytes) -> np.ndarray:
    x = np.frombuffer(xbytes, dtype=float)
    if np.any(~(x >= 0) | ~(x <= 1)):
        raise DomainError("smoothing margins are evaluated on [0, 1]")
    if kind is SmoothingKind.DIRAC:
        out = _dirac_sf(m, x)
    elif kind is SmoothingKind.BINOMIAL:
        out = _sf_from_logpmf(binomial_logpmf_table(m, x))
    else:
        out = _beta_binomial_sf_t(m, x, rho)
    out.setflags(write=False)
    return out


def binomial_survival(p: int, u, w):
    """``P(Bin(p, u) > w)``.

    Parameters
    ----------
    p : int
        Number of trials.
    u : float or array_like
        Success probability in ``[0, 1]``.
    w : int or array_like
        Threshold(s), ``w >= 0``; broadcast against ``u``.

    Returns
    -------
    float or ndarray
    """
    if p < 0:
        raise DomainError("p must be nonnegative")
    u_arr, w_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(w))
    if np.any(w_arr < 0):
        raise DomainError("w must be nonnegative")
    if np.any(~(u_arr >= 0) | ~(u_arr <= 1)):
        raise DomainError("u must lie in [0, 1]")
    sf = _sf_from_logpmf(binomial_logpmf_table(p, u_arr.ravel()))
    out = _pick_survival(sf, w_arr.ravel(), p).reshape(u_arr.shape)
    return float(out) if out.ndim == 0 else out


def binomial_cdf(p: int, u, w):
    """``P(Bin(p, u) <= w)``, accurate where the survival function rounds to 1."""
    u_arr, w_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(w))
    cdf = _cdf_from_logpmf(binomial_logpmf_table(p, u_arr.ravel()))
    out = _pick_cdf(cdf, w_arr.ravel(), p).reshape(u_arr.shape)
    return float(out) if out.ndim == 0 else out


def _pick_survival(sf: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
    idx = w.astype(np.int64) + 1
    out = np.zeros(len(w))
    ok = idx <= p
    out[ok] = sf[np.flatnonzero(ok), idx[ok]]
    return out


def _pick_cdf(cdf: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
    idx = w.astype(np.int64)
    out = np.ones(len(w))
    ok = idx < p
    neg = idx < 0
    out[ok & ~neg] = cdf[np.flatnonzero(ok & ~neg), idx[ok & ~neg]]
    out[neg] = 0.0
    return out


def beta_binomial_survival(p: int, alpha, beta, w):
    """``P(BetaBin(p, alpha, beta) > w)`` by log-gamma pmf summation.

    Raises
    ------
    DomainError
        If ``alpha <= 0`` or ``beta <= 0``; use :func:`beta_binomial_survival_t`
        for the boundary limits in the mean parametrisation.
    """
    if p < 1:
        raise DomainError("p must be at least 1")
    a, b, w_arr = np.broadcast_arrays(np.asarray(alpha, dtype=float),
                                      np.asarray(beta, dtype=float), np.asarray(w))
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("beta-binomial parameters must be positive")
    if np.any(w_arr < 0):
        raise DomainError("w must be nonnegative")
    sf = _sf_from_logpmf(beta_binomial_logpmf_table(p, a.ravel(), b.ravel()))
    out = _pick_survival(sf, w_arr.ravel(), p).reshape(a.shape)
    return float(out) if out.ndim == 0 else out


def beta_binomial_survival_t(p: int, t, rho: float, w):
    """Beta-binomial survival in the mean parametrisation ``E[S] = p t``.

    ``alpha = t (p - rho)/(rho - 1)`` and ``beta = (1 - t)(p - rho)/(rho - 1)``;
    ``t = 0`` and ``t = 1`` are the continuous limits (mass at 0, resp. ``p``).
    """
    if not 1.0 < rho < p:
        raise DomainError(f"need 1 < rho < p (rho={rho}, p={p})")
    t_arr, w_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(w))
    if np.any(~(t_arr >= 0) | ~(t_arr <= 1)):
        raise DomainError("t must lie in [0, 1]")
    sf = _beta_binomial_sf_t(p, t_arr.ravel(), rho)
    out = _pick_survival(sf, w_arr.ravel(), p).reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out


def beta_binomial_cdf_t(p: int, t, rho: float, w):
    """``P(S <= w)`` for the beta-binomial law of :func:`beta_binomial_survival_t`."""
    t_arr, w_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(w))
    t_flat = t_arr.ravel()
    cdf = np.empty((len(t_flat), p + 1))
    inner, a, b = _bb_inner(p, t_flat, rho)
    cdf[inner] = _cdf_from_logpmf(beta_binomial_logpmf_table(p, a[inner], b[inner]))
    lo, hi = ~inner & (t_flat < 0.5), ~inner & (t_flat >= 0.5)
    cdf[lo] = 1.0
    cdf[hi] = 0.0
    cdf[hi, p] = 1.0
    out = _pick_cdf(cdf, w_arr.ravel(), p).reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# smooth empirical copula


def _unique_index(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, inv = np.unique(x, return_inverse=True)
    return vals, inv.ravel()


class SmoothEmpiricalCopula:
    """Smooth empirical copula of a window.

    Parameters
    ----------
    ranks : RankMatrix, Sample or array_like
        Ranks of the window; samples are ranked over their full length.
    family : SmoothingFamily or str

    Notes
    -----
    Instances are immutable; evaluation is pure (the only state is a cache
    of data-independent survival tables, which is keyed by its inputs).
    """

    def __init__(self, ranks, family="bin"):
        if not isinstance(ranks, RankMatrix):
            ranks = compute_ranks(ranks if isinstance(ranks, Sample) else Sample(ranks))
        self._ranks = ranks
        self._family = SmoothingFamily.parse(family)
        self._family.check_window(ranks.m)

    @property
    def ranks(self) -> RankMatrix:
        return self._ranks

    @property
    def family(self) -> SmoothingFamily:
        return self._family

    @property
    def m(self) -> int:
        return self._ranks.m

    @property
    def d(self) -> int:
        return self._ranks.d

    def __repr__(self):
        return f"SmoothEmpiricalCopula(m={self.m}, d={self.d}, family={self.family.name!r})"

    # -- margin survival values ------------------------------------------------
    def margin_survival(self, j: int, x, r=None) -> np.ndarray:
        """``Fbar_{j, x}((r - 1)/m)`` for the ranks ``r`` (default: column ``j``).

        Returns an array of shape ``(len(x), len(r))``.
        """
        x = np.asarray(x, dtype=float).ravel()
        r = self._ranks.ranks[:, j] if r is None else np.asarray(r, dtype=np.int64).ravel()
        vals, inv = _unique_index(x)
        table = self._family.survival_table(self.m, vals)
        return table[inv][:, r]

    # -- kernel -------------------------------------------------------------------
    def kernel_matrix(self, u, rank_rows=None) -> np.ndarray:
        """Kernel values ``K_r(u_p)``.

        Parameters
        ----------
        u : array_like, shape (P, d) or (d,)
        rank_rows : array_like of int, shape (Q, d), optional
            Rank vectors; defaults to the rows of the rank matrix.

        Returns
        -------
        ndarray, shape (P, Q)
        """
        pts, _ = _as_points(u, self.d)
        rows = self._ranks.ranks if rank_rows is None else np.atleast_2d(
            np.asarray(rank_rows, dtype=np.int64))
        if rows.shape[1] != self.d or np.any(rows < 1) or np.any(rows > self.m):
            raise DomainError(f"rank vectors must lie in [1, {self.m}]^{self.d}")
        if self._family.kind is SmoothingKind.BETABINOMIAL:
            return self._kernel_betabinomial(pts, rows)
        out = self.margin_survival(0, pts[:, 0], rows[:, 0])
        for j in range(1, self.d):
            out = out * self.margin_survival(j, pts[:, j], rows[:, j])
        return out

    def _kernel_betabinomial(self, pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
        # Cbar is the empirical beta copula of the window, evaluated at the
        # margin survival values a_j(u_j, r_j):
        #   K_r(u) = (1/m) sum_k prod_j P(Bin(m, a_j) >= R_kj)
        m, d = self.m, self.d
        R = self._ranks.ranks
        gathered, index = [], []
        for j in range(d):
            vals, inv = _unique_index(pts[:, j])
            a = self._family.survival_table(m, vals)[:, rows[:, j]]      # (V, Q)
            # data-dependent arguments: computed directly, not cached
            tb = _sf_from_logpmf(binomial_logpmf_table(m, a.ravel())).reshape(a.shape + (m + 1,))
            gathered.append(tb[:, :, R[:, j]])                          # (V, Q, m)
            index.append(inv)
        P, Q = len(pts), len(rows)
        out = np.empty((P, Q))
        step = max(1, _CHUNK_ENTRIES // max(1, Q * m))
        for s in range(0, P, step):
            sl = slice(s, s + step)
            prod = gathered[0][index[0][sl]]
            for j in range(1, d):
                prod = prod * gathered[j][index[j][sl]]
            out[sl] = prod.mean(axis=2)
        return out

    def kernel(self, r, u):
        """``K_r(u)`` for one rank vector ``r`` at one or several points."""
        pts, scalar = _as_points(u, self.d)
        out = self.kernel_matrix(pts, np.asarray(r)[None, :])[:, 0]
        return float(out[0]) if scalar else out

    # -- evaluation ---------------------------------------------------------------
    def evaluate(self, u):
        """Estimator value at one point ``(d,)`` or at points ``(P, d)``."""
        pts, scalar = _as_points(u, self.d)
        out = self.kernel_matrix(pts).mean(axis=1)
        return float(out[0]) if scalar else out

    __call__ = evaluate


def kernel_K(cop: SmoothEmpiricalCopula, r, u):
    """Kernel ``K_r(u)`` of a smooth empirical copula."""
    return cop.kernel(r, u)


def smooth_eval(cop: SmoothEmpiricalCopula, u):
    """Value of a smooth empirical copula at ``u``."""
    return cop.evaluate(u)


def beta_copula_closed_form(ranks: RankMatrix, u):
    """Empirical beta copula as a mixture of products of beta cdfs.

    ``(1/m) sum_i prod_j F_{m, R_ij}(u_j)`` with ``F_{m, r}`` the cdf of
    Beta(r, m + 1 - r), evaluated with the regularised incomplete beta
    function.
    """
    if not isinstance(ranks, RankMatrix):
        ranks = RankMatrix.from_ranks(ranks)
    pts, scalar = _as_points(u, ranks.d)
    m, R = ranks.m, ranks.ranks
    terms = np.ones((len(pts), m))
    for j in range(ranks.d):
        terms *= special.betainc(R[None, :, j], m + 1 - R[None, :, j], pts[:, j, None])
    out = terms.mean(axis=1)
    return float(out[0]) if scalar else out
