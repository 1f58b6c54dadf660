"""Descriptive statistics, Ljung-Box tests and validity t-tests for QCM series."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError

LB_LAGS = 20


@dataclass(frozen=True)
class Descriptive:
    n: int
    mean: float
    variance: float
    skewness: float
    kurtosis: float
    max: float
    min: float
    degenerate: bool = False

    def as_row(self) -> list:
        return [self.n, self.mean, self.variance, self.skewness, self.kurtosis, self.max, self.min]


def descriptive_stats(x) -> Descriptive:
    """Sample moments: variance with ``n - 1``; skewness and (non-excess) kurtosis
    as standardized central moments with ``1/n``. Zero variance leaves the shape
    moments NaN and sets ``degenerate``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ConfigError(f"need at least 4 observations, got {n}")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    var = float(d @ d) / (n - 1)
    if not m2 > 0:
        return Descriptive(n, float(mean), 0.0, float("nan"), float("nan"),
                           float(x.max()), float(x.min()), degenerate=True)
    return Descriptive(n, float(mean), var, float(np.mean(d ** 3) / m2 ** 1.5),
                       float(np.mean(d ** 4) / m2 ** 2), float(x.max()), float(x.min()))


@dataclass(frozen=True)
class LjungBox:
    statistic: float
    pvalue: float
    lags: int
    degenerate: bool = False


def ljung_box(x, lags: int = LB_LAGS) -> LjungBox:
    """``Q = n(n+2) sum_j rho_j^2 / (n - j)`` against chi-square(lags)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if lags < 1 or not lags < n / 4:
        raise ConfigError(f"lags must satisfy 1 <= lags < n/4 (n={n}, lags={lags})")
    d = x - x.mean()
    c0 = float(d @ d)
    if not c0 > 0:
        return LjungBox(0.0, 1.0, lags, degenerate=True)
    rho = np.array([d[j:] @ d[:-j] for j in range(1, lags + 1)]) / c0
    q = n * (n + 2) * float(np.sum(rho ** 2 / (n - np.arange(1, lags + 1))))
    return LjungBox(q, float(stats.chi2.sf(q, lags)), lags)


def newey_west_variance(e, lag: int | None = None) -> float:
    """Bartlett-weighted long-run variance of a demeaned series."""
    e = np.asarray(e, dtype=float)
    n = e.size
    if lag is None:
        lag = int(np.floor(n ** (1.0 / 3.0)))
    d = e - e.mean()
    lrv = float(d @ d) / n
    for j in range(1, min(lag, n - 1) + 1):
        lrv += 2.0 * (1.0 - j / (lag + 1.0)) * float(d[j:] @ d[:-j]) / n
    return lrv


@dataclass(frozen=True)
class MeanTest:
    tstat: float
    pvalue: float
    degenerate: bool = False


def mean_ttest(e, robust: bool = True, lag: int | None = None) -> MeanTest:
    """Two-sided t test of zero mean; Newey-West variance unless ``robust=False``."""
    e = np.asarray(e, dtype=float)
    n = e.size
    var = newey_west_variance(e, lag) if robust else float(np.var(e, ddof=1))
    m = float(e.mean())
    if not var > 0:
        if m == 0.0:
            return MeanTest(0.0, 1.0, degenerate=True)
        return MeanTest(np.copysign(np.inf, m), 0.0, degenerate=True)
    t = m / np.sqrt(var / n)
    return MeanTest(float(t), float(2.0 * stats.t.sf(abs(t), n - 1)))


@dataclass
class MomentResiduals:
    e_h: np.ndarray
    e_s: np.ndarray
    e_k: np.ndarray


def moment_residuals(y, mu_hat, h, s, k) -> MomentResiduals:
    y, mu_hat, h, s, k = (np.asarray(v, dtype=float) for v in (y, mu_hat, h, s, k))
    n = y.size
    if any(v.shape != (n,) for v in (mu_hat, h, s, k)):
        raise ValueError("y, mu_hat and the QCM series must have equal length")
    if np.any(~(h > 0)):
        raise DomainError(f"variance estimates must be positive; first offending t = "
                          f"{int(np.flatnonzero(~(h > 0))[0]) + 1}")
    u = y - mu_hat
    z = u / np.sqrt(h)
    res = MomentResiduals(u * u - h, z ** 3 - s, z ** 4 - k)
    if not all(np.all(np.isfinite(r)) for r in (res.e_h, res.e_s, res.e_k)):
        raise DomainError("moment residuals are not finite")
    return res


@dataclass(frozen=True)
class ValidityResult:
    h: MeanTest
    s: MeanTest
    k: MeanTest

    @property
    def pvalues(self) -> tuple[float, float, float]:
        return self.h.pvalue, self.s.pvalue, self.k.pvalue


def validity_ttests(y, mu_hat, qcm, robust: bool = True, lag: int | None = None) -> ValidityResult:
    """Zero-mean t tests on the variance, skewness and kurtosis residuals."""
    r = moment_residuals(y, mu_hat, qcm.h, qcm.s, qcm.k)
    return ValidityResult(*(mean_ttest(e, robust, lag) for e in (r.e_h, r.e_s, r.e_k)))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_descriptive(path, named_series: dict, lb_lags: int = LB_LAGS) -> None:
    """One row per series: n, moments, extremes, Ljung-Box p-values on y and y^2."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "n", "mean", "variance", "skewness", "kurtosis", "max", "min",
                    "lb_pvalue", "lb_pvalue_sq"])
        for name, x in named_series.items():
            x = np.asarray(x, dtype=float)
            d = descriptive_stats(x)
            lags = min(lb_lags, max(1, (x.size - 1) // 4))
            w.writerow([name, *map(_fmt, d.as_row()), _fmt(ljung_box(x, lags).pvalue),
                        _fmt(ljung_box(x * x, lags).pvalue)])


def write_validity(path, results: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "t_h", "p_h", "t_s", "p_s", "t_k", "p_k"])
        for name, r in results.items():
            w.writerow([name, *(_fmt(v) for m in (r.h, r.s, r.k) for v in (m.tstat, m.pvalue))])
