"""Samples, ranks, pseudo-observations, Kendall's tau and the empirical copula.

Windows (sub-stretches) are addressed with 1-based inclusive bounds ``k:l``
as in the usual time-series notation; margins are addressed 0-based.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import DataError, DomainError, TieError, WindowError

# Tolerance used when turning u into a count of scaled ranks below it, so that
# u = r/m computed in floating point still counts rank r.
_FLOOR_FUZZ = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_no_ties(values: np.ndarray) -> None:
    srt = np.sort(values, axis=0)
    dup = np.any(srt[1:] == srt[:-1], axis=0)
    if np.any(dup):
        cols = [int(c) for c in np.flatnonzero(dup)]
        raise TieError(f"tied values in column(s) {cols}")


@dataclass(frozen=True, eq=False)
class Sample:
    """An n x d matrix of continuous observations (rows are time points).

    Parameters
    ----------
    values : array_like
        Observations, shape ``(n, d)`` with ``n >= 1`` and ``d >= 2``. All
        entries must be finite and no column may contain ties.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError(f"sample must be two-dimensional, got shape {v.shape}")
        if v.shape[0] < 1:
            raise DataError("sample must contain at least one observation")
        if v.shape[1] < 2:
            raise DataError("sample must have at least two columns")
        if not np.all(np.isfinite(v)):
            raise DataError("sample contains NaN or infinite values")
        _check_no_ties(v)
        object.__setattr__(self, "values", _readonly(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def window(self, k: int, l: int) -> "Sample":
        """Sub-stretch ``k:l`` (1-based, inclusive) as a new sample."""
        _check_window(k, l, self.n)
        return Sample(self.values[k - 1:l])


def as_sample(x) -> Sample:
    """Return ``x`` unchanged if it is a :class:`Sample`, else wrap it."""
    return x if isinstance(x, Sample) else Sample(x)


def _check_window(k: int, l: int, n: int) -> None:
    if k > l:
        raise WindowError(f"empty window {k}:{l}")
    if k < 1 or l > n:
        raise WindowError(f"window {k}:{l} outside 1:{n}")


@dataclass(frozen=True, eq=False)
class RankMatrix:
    """Within-window ranks of a sample.

    Attributes
    ----------
    ranks : ndarray of int, shape (m, d)
        Each column is a permutation of ``1..m``.
    window : tuple of int
        The 1-based inclusive bounds ``(k, l)`` the ranks were computed on.
    """

    ranks: np.ndarray
    window: tuple[int, int]

    def __post_init__(self):
        r = np.asarray(self.ranks)
        if r.ndim != 2 or r.shape[0] < 1:
            raise DataError(f"rank matrix must be (m, d), got shape {r.shape}")
        m = r.shape[0]
        if not np.array_equal(np.sort(r, axis=0),
                              np.broadcast_to(np.arange(1, m + 1)[:, None], r.shape)):
            raise DataError("each rank column must be a permutation of 1..m")
        object.__setattr__(self, "ranks", _readonly(r.astype(np.int64)))
        object.__setattr__(self, "window", (int(self.window[0]), int(self.window[1])))

    @classmethod
    def from_ranks(cls, ranks) -> "RankMatrix":
        """Build directly from an integer rank matrix (window ``1:m``)."""
        r = np.asarray(ranks)
        return cls(r, (1, r.shape[0]))

    @property
    def m(self) -> int:
        return self.ranks.shape[0]

    @property
    def d(self) -> int:
        return self.ranks.shape[1]

    def pseudo_observations(self) -> np.ndarray:
        return pseudo_observations(self)


def _ranks_of(values: np.ndarray) -> np.ndarray:
    # ranks along axis -2, valid without ties
    order = np.argsort(values, axis=-2, kind="stable")
    ranks = np.empty(values.shape, dtype=np.int64)
    m = values.shape[-2]
    idx = np.broadcast_to(np.arange(1, m + 1).reshape((m, 1)), values.shape)
    np.put_along_axis(ranks, order, idx, axis=-2)
    return ranks


def compute_ranks(sample, k: int = 1, l: int | None = None) -> RankMatrix:
    """Maximal ranks of the observations of the window ``k:l``.

    Parameters
    ----------
    sample : Sample or array_like
    k, l : int
        1-based inclusive window bounds; ``l`` defaults to ``n``.

    Returns
    -------
    RankMatrix

    Raises
    ------
    WindowError
        If ``k > l`` or the window leaves ``1:n``.
    TieError
        If a column of the window contains duplicates.
    """
    if isinstance(sample, Sample):
        values = sample.values
    else:
        values = np.asarray(sample, dtype=float)
        if values.ndim != 2:
            raise DataError(f"sample must be two-dimensional, got shape {values.shape}")
    n = values.shape[0]
    l = n if l is None else l
    _check_window(k, l, n)
    win = values[k - 1:l]
    if not isinstance(sample, Sample):
        _check_no_ties(win)
    return RankMatrix(_ranks_of(win), (k, l))


def batch_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks along axis ``-2`` of a stack of tie-free samples, shape ``(..., m, d)``."""
    return _ranks_of(np.asarray(values, dtype=float))


def pseudo_observations(ranks: RankMatrix) -> np.ndarray:
    """Scaled ranks ``R / m``."""
    return ranks.ranks / ranks.m


def _as_points(u, d: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(u, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != d:
        raise DomainError(f"points must have {d} coordinates, got shape {np.shape(u)}")
    if np.any(~(pts >= 0.0) | ~(pts <= 1.0)):
        raise DomainError("points must lie in [0, 1]^d")
    return pts, scalar


def rank_count_below(u, m: int) -> np.ndarray:
    """Largest integer ``r`` with ``r / m <= u`` (up to a rounding fuzz)."""
    return np.floor(np.asarray(u, dtype=float) * m + _FLOOR_FUZZ).astype(np.int64)


def empirical_copula_eval(ranks: RankMatrix, u):
    """Empirical copula of a window evaluated at one or several points.

    Parameters
    ----------
    ranks : RankMatrix
    u : array_like, shape (d,) or (P, d)

    Returns
    -------
    float or ndarray of shape (P,)
    """
    pts, scalar = _as_points(u, ranks.d)
    thr = rank_count_below(pts, ranks.m)  # (P, d)
    ind = np.all(ranks.ranks[None, :, :] <= thr[:, None, :], axis=2)
    out = ind.mean(axis=1)
    return float(out[0]) if scalar else out


def _tau_pair(x: np.ndarray, y: np.ndarray) -> float:
    m = x.shape[0]
    if m < 2:
        raise DataError("Kendall's tau needs at least two observations")
    res = stats.kendalltau(x, y)
    # without ties the numerator (concordant minus discordant pairs) is an
    # integer; recover it exactly to remove the rounding of tau-b's scaling
    npairs = m * (m - 1) // 2
    return float(np.rint(res.statistic * npairs) / npairs)


def kendall_tau(sample) -> float:
    """Sample Kendall's tau (tau-a); for d > 2 the mean over all pairs of margins.

    Raises
    ------
    TieError
        If a column contains ties.
    """
    s = as_sample(sample)
    taus = [_tau_pair(s.values[:, a], s.values[:, b])
            for a, b in combinations(range(s.d), 2)]
    return float(np.mean(taus))


def kendall_tau_batch(values: np.ndarray) -> np.ndarray:
    """Kendall's tau-a of a stack of tie-free samples of shape ``(B, m, d)``.

    Uses the O(m^2) concordance count, which is the fastest option for the
    small samples met in bootstrap loops.
    """
    x = np.asarray(values, dtype=float)
    B, m, d = x.shape
    if m < 2:
        raise DataError("Kendall's tau needs at least two observations")
    iu = np.triu_indices(m, 1)
    out = np.zeros(B)
    for a, b in combinations(range(d), 2):
        sa = np.sign(x[:, :, None, a] - x[:, None, :, a])
        sb = np.sign(x[:, :, None, b] - x[:, None, :, b])
        out += (sa * sb)[:, iu[0], iu[1]].sum(axis=1)
    npairs = m * (m - 1) / 2
    return out / npairs / (d * (d - 1) / 2)


def _parse_row(row: list[str]) -> list[float] | None:
    try:
        return [float(c) for c in row]
    except ValueError:
        return None


def read_sample_csv(path) -> Sample:
    """Read a sample from a CSV file (optional header row, one observation per line).

    Raises
    ------
    DataError
        On malformed rows or non-finite values.
    TieError
        If a column contains ties.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data")
    first = _parse_row(rows[0])
    start = 0 if first is not None else 1
    data = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        vals = _parse_row(row)
        if vals is None:
            raise DataError(f"{path}:{lineno}: non-numeric entry")
        if data and len(vals) != len(data[0]):
            raise DataError(f"{path}:{lineno}: expected {len(data[0])} columns, got {len(vals)}")
        data.append(vals)
    if not data:
        raise DataError(f"{path}: no data rows")
    arr = np.array(data, dtype=float)
    bad = ~np.isfinite(arr)
    if np.any(bad):
        i = int(np.argwhere(bad)[0, 0])
        raise DataError(f"{path}:{start + i + 1}: NaN or infinite value")
    return Sample(arr)


def write_sample_csv(path, values, header: list[str] | None = None) -> None:
    """Write a matrix as CSV with full float precision (atomic replace)."""
    values = np.asarray(values, dtype=float)
    if header is None:
        header = [f"x{j + 1}" for j in range(values.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in values:
        w.writerow([repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
