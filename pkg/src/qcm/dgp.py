"""Simulation designs with exact conditional moments and quantiles.

* GARCH(1,1) with N(0,1) or standardized Student-t innovations whose degrees of
  freedom are redrawn uniformly on [5, 20] at every timepoint.
* ARMA(1,1) mean on two-component mixed-normal GARCH shocks.

Each simulator returns the series together with its true conditional mean,
variance, skewness, kurtosis and a method for true conditional quantiles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigError

BURN_IN = 500
ERROR_SIGMA2 = 0.2


@dataclass(frozen=True)
class GarchParams:
    omega: float = 0.1
    alpha: float = 0.1
    beta: float = 0.8

    def validate(self):
        if not self.omega > 0 or self.alpha < 0 or self.beta < 0 or not self.alpha + self.beta < 1:
            raise ConfigError(f"GARCH parameters not stationary/positive: {self}")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass
class GarchTruth:
    y: np.ndarray
    sigma2: np.ndarray
    nu: np.ndarray | None = None

    @property
    def mu(self) -> np.ndarray:
        return np.zeros_like(self.y)

    @property
    def h(self) -> np.ndarray:
        return self.sigma2

    @property
    def s(self) -> np.ndarray:
        return np.zeros_like(self.y)

    @property
    def k(self) -> np.ndarray:
        if self.nu is None:
            return np.full_like(self.y, 3.0)
        return 6.0 / (self.nu - 4.0) + 3.0

    def quantiles(self, levels) -> np.ndarray:
        """True conditional quantiles, shape (T, len(levels))."""
        levels = np.asarray(levels, dtype=float)
        sigma = np.sqrt(self.sigma2)[:, None]
        if self.nu is None:
            return sigma * stats.norm.ppf(levels)[None, :]
        nu = self.nu[:, None]
        return sigma * np.sqrt((nu - 2.0) / nu) * stats.t.ppf(levels[None, :], nu)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def simulate_garch(T: int, params: GarchParams = GarchParams(), innovation: str = "normal",
                   seed=None, burn_in: int = BURN_IN, eta=None) -> GarchTruth:
    """``y_t = sigma_t eta_t``, ``sigma_t^2 = omega + alpha y_{t-1}^2 + beta sigma_{t-1}^2``.

    The recursion starts from the unconditional variance with ``y_0 = 0``.
    Passing ``eta`` (length ``T``) fixes the innovations and skips the burn-in.
    """
    params.validate()
    if innovation not in ("normal", "student-t"):
        raise ConfigError(f"innovation must be 'normal' or 'student-t', got {innovation!r}")
    rng = _rng(seed)
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (T,):
            raise ConfigError("eta must have length T")
        burn_in = 0
        nu = None if innovation == "normal" else rng.uniform(5.0, 20.0, T)
    else:
        n = T + burn_in
        if innovation == "normal":
            nu = None
            eta = rng.standard_normal(n)
        else:
            nu = rng.uniform(5.0, 20.0, n)
            eta = rng.standard_t(nu) * np.sqrt((nu - 2.0) / nu)
    n = eta.size
    y = np.empty(n)
    s2 = np.empty(n)
    prev_s2 = params.unconditional_variance
    prev_y = 0.0
    for t in range(n):
        s2[t] = params.omega + params.alpha * prev_y * prev_y + params.beta * prev_s2
        y[t] = np.sqrt(s2[t]) * eta[t]
        prev_s2, prev_y = s2[t], y[t]
    nu = None if nu is None else nu[burn_in:]
    return GarchTruth(y=y[burn_in:], sigma2=s2[burn_in:], nu=nu)


# ---------------------------------------------------------------- mixed normal


@dataclass(frozen=True)
class MnGarchParams:
    lam1: float = 0.2
    tau1: float = 0.4
    a0: float = 0.5
    a1: float = 0.4
    b1: float = -0.3
    c10: float = 0.1
    c20: float = 0.3
    c11: float = 0.05
    c21: float = 0.1
    c12: float = 0.85
    c22: float = 0.8

    @property
    def lam2(self) -> float:
        return 1.0 - self.lam1

    @property
    def tau2(self) -> float:
        return -(self.lam1 / self.lam2) * self.tau1

    def validate(self):
        if not 0.0 < self.lam1 < 1.0:
            raise ConfigError(f"mixture weight lam1 must be in (0, 1), got {self.lam1}")
        for c0, c1, c2 in ((self.c10, self.c11, self.c12), (self.c20, self.c21, self.c22)):
            if not c0 > 0 or c1 < 0 or c2 < 0 or not c1 + c2 < 1:
                raise ConfigError(f"component GARCH not stationary/positive: {self}")
        if not abs(self.a1) < 1:
            raise ConfigError("AR coefficient must satisfy |a1| < 1")


def mn_moments(lam1, tau1, tau2, s1sq, s2sq):
    """Variance, skewness and kurtosis of a two-component normal mixture.

    Raw-moment formulas; they coincide with central ones when the mixture mean
    ``lam1 tau1 + lam2 tau2`` is zero, as it is for the simulation design.
    """
    lam2 = 1.0 - lam1
    m2 = lam1 * (tau1 ** 2 + s1sq) + lam2 * (tau2 ** 2 + s2sq)
    h = m2 - (lam1 * tau1 + lam2 * tau2) ** 2
    m3 = lam1 * (tau1 ** 3 + 3 * tau1 * s1sq) + lam2 * (tau2 ** 3 + 3 * tau2 * s2sq)
    m4 = (lam1 * (tau1 ** 4 + 6 * tau1 ** 2 * s1sq + 3 * s1sq ** 2)
          + lam2 * (tau2 ** 4 + 6 * tau2 ** 2 * s2sq + 3 * s2sq ** 2))
    return h, m3 / m2 ** 1.5, m4 / m2 ** 2


def mn_cdf(q, lam1, tau1, tau2, s1sq, s2sq):
    return (lam1 * special.ndtr((q - tau1) / np.sqrt(s1sq))
            + (1.0 - lam1) * special.ndtr((q - tau2) / np.sqrt(s2sq)))


def mn_pdf(q, lam1, tau1, tau2, s1sq, s2sq):
    return (lam1 * stats.norm.pdf(q, tau1, np.sqrt(s1sq))
            + (1.0 - lam1) * stats.norm.pdf(q, tau2, np.sqrt(s2sq)))


def mn_quantile(alpha, lam1, tau1, tau2, s1sq, s2sq):
    """Solve ``mixture CDF(q) = alpha``; all arguments broadcast.

    Bisection on a bracket that contains both components, then Newton steps
    that are only accepted when they stay inside the bracket.
    """
    alpha, lam1, tau1, tau2, s1sq, s2sq = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (alpha, lam1, tau1, tau2, s1sq, s2sq)))
    if np.any(~((alpha > 0) & (alpha < 1))):
        raise ConfigError("alpha must be in (0, 1)")
    args = (lam1, tau1, tau2, s1sq, s2sq)
    smax = np.sqrt(np.maximum(s1sq, s2sq))
    lo = np.minimum(tau1, tau2) - 40.0 * smax
    hi = np.maximum(tau1, tau2) + 40.0 * smax
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = mn_cdf(mid, *args) < alpha
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    q = 0.5 * (lo + hi)
    for _ in range(3):
        dens = mn_pdf(q, *args)
        step = (mn_cdf(q, *args) - alpha) / np.where(dens > 0, dens, np.inf)
        cand = q - step
        q = np.where((cand >= lo) & (cand <= hi), cand, q)
    return q[()] if q.ndim == 0 else q


@dataclass
class MnGarchTruth:
    y: np.ndarray
    eps: np.ndarray
    mu: np.ndarray
    sigma2_1: np.ndarray
    sigma2_2: np.ndarray
    params: MnGarchParams

    def __post_init__(self):
        p = self.params
        self.h, self.s, self.k = mn_moments(p.lam1, p.tau1, p.tau2, self.sigma2_1, self.sigma2_2)

    def quantiles(self, levels) -> np.ndarray:
        p = self.params
        levels = np.asarray(levels, dtype=float)[None, :]
        qe = mn_quantile(levels, p.lam1, p.tau1, p.tau2, self.sigma2_1[:, None], self.sigma2_2[:, None])
        return self.mu[:, None] + qe


def simulate_mn_garch(T: int, params: MnGarchParams = MnGarchParams(), seed=None,
                      burn_in: int = BURN_IN) -> MnGarchTruth:
    """ARMA(1,1) on mixed-normal shocks with per-component GARCH(1,1) variances.

    Starts from ``eps_0 = 0``, ``y_0 = a0 / (1 - a1)`` and component variances at
    ``c_j0 / (1 - c_j1 - c_j2)``.
    """
    params.validate()
    rng = _rng(seed)
    p = params
    n = T + burn_in
    comp1 = rng.random(n) < p.lam1
    z = rng.standard_normal(n)
    y = np.empty(n)
    eps = np.empty(n)
    mu = np.empty(n)
    v1 = np.empty(n)
    v2 = np.empty(n)
    pv1 = p.c10 / (1.0 - p.c11 - p.c12)
    pv2 = p.c20 / (1.0 - p.c21 - p.c22)
    pe = 0.0
    py = p.a0 / (1.0 - p.a1)
    tau2 = p.tau2
    for t in range(n):
        v1[t] = p.c10 + p.c11 * pe * pe + p.c12 * pv1
        v2[t] = p.c20 + p.c21 * pe * pe + p.c22 * pv2
        mu[t] = p.a0 + p.a1 * py + p.b1 * pe
        if comp1[t]:
            eps[t] = p.tau1 + np.sqrt(v1[t]) * z[t]
        else:
            eps[t] = tau2 + np.sqrt(v2[t]) * z[t]
        y[t] = mu[t] + eps[t]
        pv1, pv2, pe, py = v1[t], v2[t], eps[t], y[t]
    b = burn_in
    return MnGarchTruth(y=y[b:], eps=eps[b:], mu=mu[b:], sigma2_1=v1[b:], sigma2_2=v2[b:], params=p)


# ---------------------------------------------------------------- error cases


def error_variance(levels, sigma2: float = ERROR_SIGMA2) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    return 0.5 * sigma2 + np.abs(levels - 0.5) * sigma2


def error_mean(levels) -> np.ndarray:
    """Bias profile: ``exp(-200 a)`` below the median, ``exp(-200 (1 - a))`` from it up."""
    levels = np.asarray(levels, dtype=float)
    return np.where(levels < 0.5, np.exp(-200.0 * levels), np.exp(-200.0 * (1.0 - levels)))


def inject_errors(truth_q, levels, case: int, seed=None, sigma2: float = ERROR_SIGMA2) -> np.ndarray:
    """Contaminate a (T, n) true-quantile matrix according to error case 1, 2 or 3.

    Case 4 (CAViaR-estimated quantiles) is produced by the pipeline instead.
    """
    truth_q = np.asarray(truth_q, dtype=float)
    if case == 1:
        return truth_q.copy()
    if case not in (2, 3):
        raise ConfigError(f"error case must be 1, 2 or 3 here, got {case}")
    rng = _rng(seed)
    sd = np.sqrt(error_variance(levels, sigma2))
    noise = rng.standard_normal(truth_q.shape) * sd[None, :]
    if case == 3:
        noise += error_mean(levels)[None, :]
    return truth_q + noise


def delta_metrics(qcm, truth) -> np.ndarray:
    """Estimate minus truth for (h, s, k); shape (T, 3)."""
    est = np.column_stack([np.asarray(qcm.h), np.asarray(qcm.s), np.asarray(qcm.k)])
    tru = np.column_stack([np.asarray(truth.h), np.asarray(truth.s), np.asarray(truth.k)])
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: estimates {est.shape[0]}, truth {tru.shape[0]}")
    return est - tru
