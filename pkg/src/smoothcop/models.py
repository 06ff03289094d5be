"""Parametric copulas used as data-generating processes.

Independence, Clayton, Gumbel-Hougaard and Frank copulas with sampling,
cdf, closed-form first-order partial derivatives and Kendall's tau maps.
Archimedean families are sampled with the Marshall-Olkin frailty
construction; the bivariate Frank copula with negative parameter by
conditional inversion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, RangeError, ToleranceError


class Family(str, enum.Enum):
    INDEPENDENCE = "independence"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"indep": "independence", "gumbel_hougaard": "gumbel", "gh": "gumbel"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown copula family {name!r}") from None


def debye1(x: float) -> float:
    """First-order Debye function ``D1(x) = (1/x) * int_0^x t / (e^t - 1) dt``."""
    if x == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0.0, abs(x),
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    d = val / abs(x)
    # D1(-x) = D1(x) + x/2
    return d if x > 0 else d - x / 2


def frank_tau(theta: float) -> float:
    """Kendall's tau of the Frank copula, ``1 - 4/theta + 4 D1(theta)/theta``."""
    if theta == 0:
        return 0.0
    if theta < 0:
        return -frank_tau(-theta)
    return 1.0 - 4.0 / theta + 4.0 * debye1(theta) / theta


@lru_cache(maxsize=256)
def _frank_theta(tau: float) -> float:
    a = abs(tau)
    lo, hi = 1e-6, 10.0
    while frank_tau(hi) < a:
        hi *= 2.0
        if hi > 1e7:
            raise RangeError(f"tau={tau} too close to 1 for the Frank copula")
    if frank_tau(lo) > a:
        raise RangeError(f"tau={tau} too close to 0 for the Frank copula")
    theta = optimize.brentq(lambda t: frank_tau(t) - a, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    if abs(frank_tau(theta) - a) > 1e-10:
        raise ToleranceError(f"Frank tau inversion failed for tau={tau}")
    return theta if tau > 0 else -theta


def tau_to_theta(family, tau: float) -> float:
    """Copula parameter with the given Kendall's tau.

    Raises
    ------
    RangeError
        If ``tau`` is not attainable by the family (e.g. negative tau for
        Gumbel-Hougaard, or ``|tau| >= 1``).
    """
    fam = Family.parse(family)
    tau = float(tau)
    if not -1.0 < tau < 1.0:
        raise RangeError(f"tau must lie in (-1, 1), got {tau}")
    if fam is Family.INDEPENDENCE:
        if tau != 0.0:
            raise RangeError("the independence copula has tau = 0")
        return 0.0
    if fam is Family.CLAYTON:
        if tau <= 0:
            raise RangeError("Clayton copula requires tau > 0")
        return 2.0 * tau / (1.0 - tau)
    if fam is Family.GUMBEL:
        if tau < 0:
            raise RangeError("Gumbel-Hougaard copula requires tau >= 0")
        return 1.0 / (1.0 - tau)
    if tau == 0:
        raise RangeError("Frank copula requires tau != 0")
    return _frank_theta(tau)


def theta_to_tau(family, theta: float) -> float:
    fam = Family.parse(family)
    if fam is Family.INDEPENDENCE:
        return 0.0
    if fam is Family.CLAYTON:
        return theta / (theta + 2.0)
    if fam is Family.GUMBEL:
        return 1.0 - 1.0 / theta
    return frank_tau(theta)


def _unit_points(u, d: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(u, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != d:
        raise DomainError(f"points must have {d} coordinates, got shape {np.shape(u)}")
    if np.any(~(pts >= 0.0) | ~(pts <= 1.0)):
        raise DomainError("points must lie in [0, 1]^d")
    return pts, scalar


@dataclass(frozen=True)
class CopulaModel:
    """A parametric copula.

    Parameters
    ----------
    family : Family or str
    theta : float
        Clayton ``theta > 0``; Gumbel-Hougaard ``theta >= 1``; Frank
        ``theta != 0`` (negative only for ``d = 2``). Ignored for independence.
    d : int
        Dimension, at least 2.
    """

    family: Family
    theta: float = 0.0
    d: int = 2

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "theta", float(self.theta))
        th, d = self.theta, int(self.d)
        if d < 2:
            raise DomainError("dimension must be at least 2")
        if not np.isfinite(th):
            raise DomainError("theta must be finite")
        if fam is Family.CLAYTON and th <= 0:
            raise DomainError("Clayton copula requires theta > 0")
        if fam is Family.GUMBEL and th < 1:
            raise DomainError("Gumbel-Hougaard copula requires theta >= 1")
        if fam is Family.FRANK:
            if th == 0:
                raise DomainError("Frank copula requires theta != 0")
            if th < 0 and d > 2:
                raise DomainError("Frank copula with theta < 0 is only valid for d = 2")
        if fam is Family.INDEPENDENCE:
            object.__setattr__(self, "theta", 0.0)

    @classmethod
    def from_tau(cls, family, tau: float, d: int = 2) -> "CopulaModel":
        """Model with the given Kendall's tau; ``tau = 0`` gives independence."""
        if tau == 0:
            return cls(Family.INDEPENDENCE, 0.0, d)
        return cls(Family.parse(family), tau_to_theta(family, tau), d)

    @property
    def tau(self) -> float:
        return theta_to_tau(self.family, self.theta)

    # ------------------------------------------------------------------ sampling
    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``m`` i.i.d. variates, returned as an ``(m, d)`` array."""
        return sample_copula(self, m, rng)

    # ------------------------------------------------------------------ cdf
    def cdf(self, u):
        """Copula cdf at one point ``(d,)`` or at several points ``(P, d)``."""
        pts, scalar = _unit_points(u, self.d)
        out = _cdf(self, pts)
        return float(out[0]) if scalar else out

    def partial_derivative(self, j: int, u):
        """First-order partial derivative with respect to margin ``j`` (0-based).

        Defined as 0 when ``u_j`` is 0 or 1.
        """
        if not 0 <= j < self.d:
            raise DomainError(f"margin index {j} out of range for d={self.d}")
        pts, scalar = _unit_points(u, self.d)
        out = _partial(self, j, pts)
        inner = (pts[:, j] > 0) & (pts[:, j] < 1)
        out = np.where(inner, np.clip(out, 0.0, 1.0), 0.0)
        return float(out[0]) if scalar else out


def _cdf(model: CopulaModel, u: np.ndarray) -> np.ndarray:
    th, d = model.theta, model.d
    fam = model.family
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if fam is Family.INDEPENDENCE:
            out = np.prod(u, axis=1)
        elif fam is Family.CLAYTON:
            s = np.sum(u ** (-th), axis=1) - d + 1.0
            out = s ** (-1.0 / th)
        elif fam is Family.GUMBEL:
            t = np.sum((-np.log(u)) ** th, axis=1)
            out = np.exp(-t ** (1.0 / th))
        else:
            g = np.expm1(-th * u)
            out = -np.log1p(np.prod(g, axis=1) / np.expm1(-th) ** (d - 1)) / th
    out = np.where(np.any(u == 0, axis=1), 0.0, out)
    return np.clip(out, 0.0, 1.0)


def _partial(model: CopulaModel, j: int, u: np.ndarray) -> np.ndarray:
    th, d = model.theta, model.d
    fam = model.family
    others = [i for i in range(d) if i != j]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if fam is Family.INDEPENDENCE:
            out = np.prod(u[:, others], axis=1)
        elif fam is Family.CLAYTON:
            s = np.sum(u ** (-th), axis=1) - d + 1.0
            out = u[:, j] ** (-th - 1.0) * s ** (-1.0 / th - 1.0)
        elif fam is Family.GUMBEL:
            lu = -np.log(u)
            t = np.sum(lu ** th, axis=1)
            c = np.exp(-t ** (1.0 / th))
            out = c * t ** (1.0 / th - 1.0) * lu[:, j] ** (th - 1.0) / u[:, j]
        else:
            g = np.expm1(-th * u)
            num = np.exp(-th * u[:, j]) * np.prod(g[:, others], axis=1)
            out = num / (np.expm1(-th) ** (d - 1) + np.prod(g, axis=1))
    return np.where(np.isfinite(out), out, 0.0)


def _positive_stable(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # Kanter / Chambers-Mallows-Stuck representation of the positive stable
    # law with Laplace transform exp(-t^alpha), 0 < alpha < 1.
    U = rng.uniform(0.0, np.pi, size)
    W = rng.exponential(1.0, size)
    return (np.sin(alpha * U) / np.sin(U) ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * U) / W) ** ((1.0 - alpha) / alpha))


def _log_series(theta: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Logarithmic series variates with ``p = 1 - exp(-theta)`` (Kemp's LK algorithm).

    Works with ``log(1 - p) = -theta`` directly so that p rounding to 1 for
    large theta is harmless.
    """
    p = -np.expm1(-theta)
    V = rng.uniform(size=size)
    U = rng.uniform(size=size)
    out = np.ones(size)
    small = V < p
    q = -np.expm1(-theta * U)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.floor(1.0 + np.log(V) / np.log1p(-np.exp(-theta * U)))
    deep = small & (V <= q * q)
    mid = small & ~deep & (V <= q)
    out[deep] = k[deep]
    out[mid] = 2.0
    return out


def sample_copula(model: CopulaModel, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` i.i.d. draws from ``model`` as an ``(m, d)`` array."""
    th, d, fam = model.theta, model.d, model.family
    if fam is Family.INDEPENDENCE or (fam is Family.GUMBEL and th == 1.0):
        return rng.uniform(size=(m, d))
    if fam is Family.FRANK and th < 0:
        u = rng.uniform(size=m)
        w = rng.uniform(size=m)
        a = np.exp(-th * u)
        v = -np.log1p(w * np.expm1(-th) / (w + (1.0 - w) * a)) / th
        return np.column_stack([u, np.clip(v, 0.0, 1.0)])
    E = rng.exponential(1.0, size=(m, d))
    if fam is Family.CLAYTON:
        V = rng.gamma(1.0 / th, 1.0, size=m)
        out = (1.0 + E / V[:, None]) ** (-1.0 / th)
    elif fam is Family.GUMBEL:
        alpha = 1.0 / th
        V = _positive_stable(alpha, m, rng)
        out = np.exp(-(E / V[:, None]) ** alpha)
    else:
        V = _log_series(th, m, rng)
        t = E / V[:, None]
        # psi(t) = -log(1 - (1 - e^-th) e^-t) / th; the two forms avoid
        # cancellation for small and for large t respectively
        with np.errstate(divide="ignore"):
            small = np.log(-np.expm1(-t) + np.exp(-th - t))
            large = np.log1p(np.expm1(-th) * np.exp(-t))
        out = -np.where(t < 1.0, small, large) / th
    return out


def frank_log_density(theta: float, u) -> np.ndarray | float:
    """Log-density of the bivariate Frank copula.

    Stable for ``|theta|`` up to about 40 and exactly 0 at ``theta = 0``.

    Parameters
    ----------
    theta : float
    u : array_like, shape (2,) or (..., 2)
        Points in the open unit square.
    """
    pts = np.asarray(u, dtype=float)
    scalar = pts.ndim == 1
    x, y = pts[..., 0], pts[..., 1]
    out = _frank_logc(float(theta), x, y)
    return float(out) if scalar else out


def _frank_logc(theta, x, y):
    if theta == 0:
        return np.zeros(np.broadcast(x, y).shape)
    if theta < 0:
        theta, y = -theta, 1.0 - y
    # denominator e^{-th x}(1 - e^{-th y}) + e^{-th y}(1 - e^{-th (1 - y)}), both terms >= 0
    den = np.exp(-theta * x) * -np.expm1(-theta * y) + np.exp(-theta * y) * -np.expm1(-theta * (1.0 - y))
    return (np.log(theta) + np.log(-np.expm1(-theta)) - theta * (x + y) - 2.0 * np.log(den))


def frank_log_density_batch(theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Frank log-density for a vector of parameters, ``theta[:, None]`` against ``(B, n)`` points.

    Parameters may have mixed signs; zero gives 0.
    """
    th = np.asarray(theta, dtype=float)[:, None]
    neg = th < 0
    a = np.abs(th)
    yy = np.where(neg, 1.0 - y, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = np.exp(-a * x) * -np.expm1(-a * yy) + np.exp(-a * yy) * -np.expm1(-a * (1.0 - yy))
        out = np.log(a) + np.log(-np.expm1(-a)) - a * (x + yy) - 2.0 * np.log(den)
    return np.where(a == 0, 0.0, out)

