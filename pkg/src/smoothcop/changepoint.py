"""Test for a change in the copula of a multivariate sequence.

For a split ``k`` of ``1..n`` (``s = k/n``) let

    D(s, u) = sqrt(n) (k/n) ((n-k)/n) {C^nu_{1:k}(u) - C^nu_{k+1:n}(u)}.

The statistic is ``S = max_k mean_p D(k/n, U_p)^2`` where ``U_p`` are the
pseudo-observations of the whole sample (the mean is the integral against
the empirical copula). Bootstrap replicates use local (check) multiplier
replicates of the sequential copula process on both sub-windows,

    Dcheck(s, u) = ((n-k)/n) Ccheck(0, s, u) - (k/n) Ccheck(s, 1, u),

with partial derivatives estimated on each sub-window by truncated centred
differences of ``C^nu`` with ``h = h' = min(m^{-1/2}, 1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal, special

from .data import RankMatrix, Sample, as_sample, compute_ranks
from .derivatives import PdEstimatorSpec, pd_eval
from .errors import DomainError
from .models import CopulaModel
from .multiplier import MultiplierConfig, MultiplierKind, gen_multipliers
from .parallel import run_replications
from .smoothing import SmoothEmpiricalCopula, SmoothingFamily, SmoothingKind

BURN_IN = 100


@dataclass(frozen=True)
class ChangePointResult:
    """Outcome of the change-point test.

    Attributes
    ----------
    statistic : float
    p_value : float
        Fraction of replicates at least as large as the statistic.
    replicate_values : ndarray, shape (B,)
    argmax_s : float
        ``k/n`` for the split attaining the maximum.
    """

    statistic: float
    p_value: float
    replicate_values: np.ndarray = field(repr=False)
    argmax_s: float


@dataclass(frozen=True)
class Ar1Config:
    """Bivariate AR(1) design with copula-driven Gaussian innovations.

    ``X_ij = beta X_{i-1,j} + Phi^{-1}(U_ij)`` where ``U_i`` follows
    ``innovation_copula``, or ``change[1]`` for ``i > change[0]``.
    """

    beta: float
    innovation_copula: CopulaModel
    n: int
    change: tuple[int, CopulaModel] | None = None

    def __post_init__(self):
        if not abs(self.beta) < 1:
            raise DomainError("AR coefficient must satisfy |beta| < 1")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.change is not None:
            k, post = self.change
            if not 0 <= int(k) <= self.n:
                raise DomainError("change point must lie in 0..n")
            if post.d != self.innovation_copula.d:
                raise DomainError("pre- and post-change copulas differ in dimension")

    @classmethod
    def with_change_at(cls, beta: float, pre: CopulaModel, post: CopulaModel, n: int, t: float) -> "Ar1Config":
        """Change after observation ``floor(n t)``."""
        return cls(beta, pre, n, (int(np.floor(n * t + 1e-9)), post))


def generate_ar1(cfg: Ar1Config, rng: np.random.Generator) -> Sample:
    """Draw an ``n x d`` sample; the first 100 of ``n + 101`` values are discarded."""
    total = cfg.n + BURN_IN + 1
    u = cfg.innovation_copula.sample(total, rng)
    if cfg.change is not None:
        k, post = cfg.change
        n_post = cfg.n - int(k)
        if n_post > 0:
            u[total - n_post:] = post.sample(n_post, rng)
    eps = special.ndtri(u)
    x = signal.lfilter([1.0], [1.0, -cfg.beta], eps, axis=0)
    return Sample(x[BURN_IN + 1:])


# ---------------------------------------------------------------------------
# per-window ingredients


def _min_window(fam: SmoothingFamily, min_window: int | None) -> int:
    base = 2 if min_window is None else int(min_window)
    if fam.kind is SmoothingKind.BETABINOMIAL:
        base = max(base, int(np.floor(fam.rho)) + 1)
    return max(base, 1)


def _cp_bandwidth(m: int) -> float:
    return min(m ** -0.5, 0.5)


@lru_cache(maxsize=2048)
def _shift_grid(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(1, n + 1) / n
    h = _cp_bandwidth(m)
    return np.minimum(x + h, 1.0), np.maximum(x - h, 0.0)


def _product_terms(fam: SmoothingFamily, R: np.ndarray, r: np.ndarray, n: int):
    """Window terms for families whose kernel is a product over margins."""
    m, d = r.shape
    x = np.arange(1, n + 1) / n
    xu, xd = _shift_grid(n, m)
    G0, Gu, Gd = [], [], []
    for j in range(d):
        idx = np.ix_(R[:, j] - 1, r[:, j])
        G0.append(fam.survival_table(m, x)[idx])
        Gu.append(fam.survival_table(m, xu)[idx])
        Gd.append(fam.survival_table(m, xd)[idx])
    K = G0[0]
    for j in range(1, d):
        K = K * G0[j]
    C = K.mean(axis=1)
    A = K - C[:, None]
    for j in range(d):
        others = [G0[t] for t in range(d) if t != j]
        rest = others[0]
        for g in others[1:]:
            rest = rest * g
        up = (Gu[j] * rest).mean(axis=1)
        dn = (Gd[j] * rest).mean(axis=1)
        den = xu[R[:, j] - 1] - xd[R[:, j] - 1]
        dot = np.clip((up - dn) / den, 0.0, 1.0)
        A -= dot[:, None] * (G0[j] - G0[j].mean(axis=1)[:, None])
    return C, A


def _generic_terms(fam: SmoothingFamily, U: np.ndarray, r: np.ndarray, pd_spec: PdEstimatorSpec | None):
    m, d = r.shape
    P = len(U)
    cop = SmoothEmpiricalCopula(RankMatrix.from_ranks(r), fam)
    blocks = [U]
    for j in range(d):
        c = np.ones_like(U)
        c[:, j] = U[:, j]
        blocks.append(c)
    h = _cp_bandwidth(m)
    if pd_spec is None:
        for j in range(d):
            up, dn = U.copy(), U.copy()
            up[:, j] = np.minimum(U[:, j] + h, 1.0)
            dn[:, j] = np.maximum(U[:, j] - h, 0.0)
            blocks += [up, dn]
    Kall = cop.kernel_matrix(np.concatenate(blocks))
    Call = Kall.mean(axis=1)
    K = Kall[:P]
    C = Call[:P]
    A = K - C[:, None]
    for j in range(d):
        sl = slice((j + 1) * P, (j + 2) * P)
        if pd_spec is None:
            b = (d + 1 + 2 * j) * P
            up, dn = Call[b:b + P], Call[b + P:b + 2 * P]
            den = np.minimum(U[:, j] + h, 1.0) - np.maximum(U[:, j] - h, 0.0)
            dot = np.clip((up - dn) / den, 0.0, 1.0)
        else:
            dot = np.clip(pd_eval(pd_spec, cop.ranks, j, U), 0.0, 1.0)
        A -= dot[:, None] * (Kall[sl] - Call[sl][:, None])
    return C, A


def _window_terms(fam, R, r, n, pd_spec):
    """``C^nu`` of the window at the evaluation points and the replicate matrix.

    Returns ``C`` of shape ``(P,)`` and ``A`` of shape ``(P, m)`` such that the
    local replicate of the window is ``xi_window @ A.T / sqrt(n)``.
    """
    if pd_spec is None and fam.kind is not SmoothingKind.BETABINOMIAL:
        return _product_terms(fam, R, r, n)
    return _generic_terms(fam, R / n, r, pd_spec)


def _ranks_of(x: np.ndarray) -> np.ndarray:
    return (np.argsort(np.argsort(x, axis=0, kind="stable"), axis=0) + 1).astype(np.int64)


def _prepare(sample, family):
    s = as_sample(sample)
    if s.n < 4:
        raise DomainError("the change-point statistic needs n >= 4")
    fam = SmoothingFamily.parse(family)
    return s, fam, compute_ranks(s).ranks


def _splits(n: int, fam: SmoothingFamily, min_window: int | None) -> range:
    lo = _min_window(fam, min_window)
    return range(lo, n - lo + 1)


def _engine(sample, family, xi, pd_spec, min_window):
    """Statistic and (if ``xi`` is given) replicate values in one pass."""
    s, fam, R = _prepare(sample, family)
    n, x = s.n, s.values
    best, arg = 0.0, None
    reps = None if xi is None else np.zeros(len(xi))
    for k in _splits(n, fam, min_window):
        CL, AL = _window_terms(fam, R, _ranks_of(x[:k]), n, pd_spec)
        CR, AR = _window_terms(fam, R, _ranks_of(x[k:]), n, pd_spec)
        wl, wr = k / n, (n - k) / n
        D = np.sqrt(n) * wl * wr * (CL - CR)
        val = float(np.mean(D ** 2))
        if arg is None or val > best:
            best, arg = val, k
        if xi is not None:
            Dc = (wr * (xi[:, :k] @ AL.T) - wl * (xi[:, k:] @ AR.T)) / np.sqrt(n)
            np.maximum(reps, np.mean(Dc ** 2, axis=1), out=reps)
    argmax = (arg if arg is not None else 0) / n
    return best, argmax, reps


def split_values(sample, family="bin", min_window: int | None = None) -> np.ndarray:
    """``mean_p D(k/n, U_p)^2`` for every split ``k = 1..n-1`` (zero outside the scanned range)."""
    s, fam, R = _prepare(sample, family)
    n, x = s.n, s.values
    out = np.zeros(n - 1)
    for k in _splits(n, fam, min_window):
        CL, _ = _window_terms(fam, R, _ranks_of(x[:k]), n, None)
        CR, _ = _window_terms(fam, R, _ranks_of(x[k:]), n, None)
        out[k - 1] = np.mean((np.sqrt(n) * (k / n) * ((n - k) / n) * (CL - CR)) ** 2)
    return out


def statistic_S(sample, family="bin", min_window: int | None = None) -> tuple[float, float]:
    """Maximally selected Cramer-von Mises statistic.

    Parameters
    ----------
    sample : Sample or array_like, shape (n, d)
    family : SmoothingFamily or str
    min_window : int, optional
        Splits leaving fewer observations on either side contribute zero.
        Defaults to 2, and to ``floor(rho) + 1`` for beta-binomial smoothing.

    Returns
    -------
    (S, argmax_s)
    """
    S, arg, _ = _engine(sample, family, None, None, min_window)
    return S, arg


def replicate_S(sample, family, multipliers, pd_spec: PdEstimatorSpec | None = None,
                min_window: int | None = None):
    """Multiplier replicates of the statistic.

    Parameters
    ----------
    multipliers : array_like, shape (n,) or (B, n)
    pd_spec : PdEstimatorSpec, optional
        Derivative estimator applied on each sub-window. The default is the
        truncated centred difference of ``C^nu`` with ``h = min(m^{-1/2}, 1/2)``.

    Returns
    -------
    float or ndarray of shape (B,)
    """
    xi = np.asarray(multipliers, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    n = as_sample(sample).n
    if xi.shape[1] != n:
        raise DomainError(f"need {n} multipliers per replicate, got {xi.shape[1]}")
    _, _, reps = _engine(sample, family, xi, pd_spec, min_window)
    return float(reps[0]) if single else reps


def p_value(statistic: float, replicates) -> float:
    """``(1/B) #{replicates >= statistic}``."""
    r = np.asarray(replicates, dtype=float)
    return float(np.mean(r >= statistic))


def default_multipliers() -> MultiplierConfig:
    return MultiplierConfig(MultiplierKind.DEPENDENT)


def run_test(sample, family="bin", B: int = 1000, mult_cfg: MultiplierConfig | None = None,
             rng: np.random.Generator | None = None, pd_spec: PdEstimatorSpec | None = None,
             min_window: int | None = None, multipliers=None) -> ChangePointResult:
    """Change-point test with multiplier p-value.

    Parameters
    ----------
    B : int
        Number of replicates (at least 100).
    mult_cfg : MultiplierConfig, optional
        Defaults to dependent multipliers with the default dependence length.
    rng : numpy.random.Generator
    multipliers : array_like, shape (B, n), optional
        Use these instead of drawing from ``mult_cfg``.
    """
    s = as_sample(sample)
    if multipliers is None:
        if B < 100:
            raise DomainError("use at least B = 100 replicates")
        rng = rng if rng is not None else np.random.default_rng()
        xi = gen_multipliers(mult_cfg or default_multipliers(), s.n, rng, size=B)
    else:
        xi = np.atleast_2d(np.asarray(multipliers, dtype=float))
    S, arg, reps = _engine(s, family, xi, pd_spec, min_window)
    return ChangePointResult(S, p_value(S, reps), reps, arg)


# ---------------------------------------------------------------------------
# rejection-rate experiments


def _rejection_rep(rng, cfg, families, B, mult, level):
    x = generate_ar1(cfg, rng)
    xi = gen_multipliers(mult, cfg.n, rng, size=B)
    return [run_test(x, f, multipliers=xi).p_value <= level for f in families]


def rejection_rates(cfg: Ar1Config, families=("dirac", "bin"), B: int = 250, reps: int = 100,
                    level: float = 0.05, mult: MultiplierConfig | None = None,
                    seed: int = 0, workers: int = 1) -> dict:
    """Fraction of rejections at ``level`` per smoothing family.

    All families share the data and the multipliers within a replication.
    """
    mult = mult or default_multipliers()
    fams = [SmoothingFamily.parse(f) for f in families]
    res = np.array(run_replications(_rejection_rep, reps, seed, workers, args=(cfg, fams, B, mult, level)),
                   dtype=float).reshape(reps, len(fams))
    return {f.name: float(res[:, i].mean()) for i, f in enumerate(fams)}
