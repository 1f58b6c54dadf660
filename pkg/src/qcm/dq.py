"""In-sample dynamic quantile (DQ) screening of fitted quantile paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, InsufficientPoolError

N_LAGS = 4
MIN_LENGTH = 50


@dataclass(frozen=True)
class HitSeries:
    hits: np.ndarray
    alpha: float


@dataclass(frozen=True)
class DQResult:
    statistic: float
    pvalue: float
    degenerate: bool = False


def hits(y, q_path, alpha: float) -> HitSeries:
    """``Hit_t = 1{y_t < Q_t} - alpha``."""
    y = np.asarray(y, dtype=float)
    q_path = np.asarray(q_path, dtype=float)
    if y.shape != q_path.shape:
        raise ValueError(f"length mismatch: y has {y.shape}, quantile path has {q_path.shape}")
    return HitSeries((y < q_path).astype(float) - alpha, float(alpha))


def lag_matrix(h: np.ndarray, lags: int = N_LAGS) -> np.ndarray:
    """Rows ``(h_{t-1}, ..., h_{t-lags})`` for ``t = lags+1 .. T``."""
    T = h.size
    return np.column_stack([h[lags - j: T - j] for j in range(1, lags + 1)])


def dq_insample(h: HitSeries, lags: int = N_LAGS, rcond: float = 1e-10) -> DQResult:
    """Quadratic-form DQ statistic on the lagged hits, chi-square(lags) reference.

    ``DQ = Hit' X (X'X)^{-1} X' Hit / (alpha (1 - alpha))`` over ``t > lags``.
    A rank-deficient ``X'X`` is flagged as degenerate with statistic 0 and
    p-value 1.
    """
    x = np.asarray(h.hits, dtype=float)
    if x.size < MIN_LENGTH:
        raise ConfigError(f"DQ test needs at least {MIN_LENGTH} hits, got {x.size}")
    X = lag_matrix(x, lags)
    hit = x[lags:]
    XtX = X.T @ X
    eig = np.linalg.eigvalsh(XtX)
    if eig[0] <= rcond * max(eig[-1], 1e-300):
        return DQResult(0.0, 1.0, degenerate=True)
    Xh = X.T @ hit
    stat = float(Xh @ np.linalg.solve(XtX, Xh)) / (h.alpha * (1.0 - h.alpha))
    stat = max(stat, 0.0)
    return DQResult(stat, float(stats.chi2.sf(stat, lags)))


@dataclass
class PathRecord:
    """One fitted quantile path plus its screening outcome."""

    family: str
    alpha: float
    q_path: np.ndarray | None
    pvalue: float = float("nan")
    statistic: float = float("nan")
    degenerate: bool = False
    failed: bool = False
    kept: bool = False


@dataclass
class PooledQuantiles:
    """Surviving paths stacked as a (T, n0) matrix with their levels and sources."""

    levels: np.ndarray
    values: np.ndarray
    sources: list

    @property
    def n0(self) -> int:
        return self.levels.size

    def at(self, t: int):
        from .cornish_fisher import QuantilePool

        return QuantilePool(self.levels, self.values[t], list(self.sources))


def filter_pool(records: list[PathRecord], y, p_star: float, min_pool: int = 5) -> PooledQuantiles:
    """Drop paths whose DQ p-value is below ``p_star`` and stack the rest.

    Records without a path (failed estimations) are treated as discarded.
    Mutates each record's test fields and ``kept`` flag.
    """
    if not 0.0 <= p_star < 1.0:
        raise ConfigError(f"p_star must be in [0, 1), got {p_star}")
    y = np.asarray(y, dtype=float)
    kept = []
    for rec in records:
        if rec.q_path is None:
            rec.failed = True
            rec.kept = False
            continue
        res = dq_insample(hits(y, rec.q_path, rec.alpha))
        rec.statistic, rec.pvalue, rec.degenerate = res.statistic, res.pvalue, res.degenerate
        rec.kept = not res.pvalue < p_star
        if rec.kept:
            kept.append(rec)
    if len(kept) < min_pool:
        raise InsufficientPoolError(
            f"only {len(kept)} of {len(records)} quantile paths survived DQ screening "
            f"at p* = {p_star}; at least {min_pool} are needed")
    return PooledQuantiles(
        levels=np.array([r.alpha for r in kept]),
        values=np.column_stack([r.q_path for r in kept]),
        sources=[r.family for r in kept],
    )
