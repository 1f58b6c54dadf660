"""Cornish-Fisher regression of conditional quantiles on normal quantiles.

A pool of ``n`` estimated conditional quantiles ``Y_i`` at levels ``alpha_i`` is
regressed on ``(1, x, x^2 - 1, x^3 - 3x)`` with ``x = Phi^{-1}(alpha_i)``. The
slope coefficients map to conditional variance, skewness and kurtosis; the
intercept absorbs the conditional mean together with any common bias of the
quantile estimates, so no mean model is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

from .errors import DegenerateScaleError, DomainError, EstimationError, SingularDesignError

COND_MAX = 1e12
MIN_POOL = 5

# Acklam's rational approximation, |rel err| < 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _tail(q):
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


def norm_ppf(p):
    """Standard normal quantile function.

    Rational approximation followed by one Halley step on the exact CDF, which
    brings the relative error well below 1e-9 across (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den
    x[lo] = _tail(np.sqrt(-2.0 * np.log(p[lo])))
    x[hi] = -_tail(np.sqrt(-2.0 * np.log1p(-p[hi])))

    # Halley refinement. The residual Phi(x) - p is formed through erf near the
    # centre and through the smaller tail elsewhere, avoiding cancellation.
    r2 = np.sqrt(2.0)
    e = np.where(x > 0, (1.0 - p) - 0.5 * special.erfc(x / r2),
                 0.5 * special.erfc(-x / r2) - p)
    centre = np.abs(p - 0.5) < 0.25
    e = np.where(centre, 0.5 * special.erf(x / r2) - (p - 0.5), e)
    u = e * np.sqrt(2.0 * np.pi) * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return x[()] if x.ndim == 0 else x


@dataclass(frozen=True)
class CFDesignRow:
    alpha: float
    x: float
    row: np.ndarray


def _rows(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(x), x, x * x - 1.0, x ** 3 - 3.0 * x])


def design_row(alpha: float) -> CFDesignRow:
    """Regressor row ``(1, x, x^2 - 1, x^3 - 3x)`` at quantile level ``alpha``."""
    x = float(norm_ppf(alpha))
    return CFDesignRow(alpha=float(alpha), x=x, row=_rows(np.array([x]))[0])


def design_matrix(levels) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    return _rows(np.atleast_1d(norm_ppf(levels)))


@dataclass(frozen=True)
class ThetaEstimate:
    """Fitted coefficients; ``beta0`` holds the conditional mean plus the common error offset."""

    beta0: float
    beta1: float
    beta2: float
    beta3: float

    @classmethod
    def from_array(cls, a) -> "ThetaEstimate":
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.beta3])


@dataclass(frozen=True)
class QcmTriple:
    h: float
    s: float
    k: float
    constraint_ok: bool


@dataclass
class QuantilePool:
    """Estimated conditional quantiles at one timepoint.

    Levels may repeat when several models contribute at the same level.
    """

    levels: np.ndarray
    values: np.ndarray
    sources: list = field(default_factory=list)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.levels.shape != self.values.shape or self.levels.ndim != 1:
            raise ValueError("levels and values must be 1-d arrays of equal length")

    def __len__(self) -> int:
        return self.levels.size


class CFDesign:
    """QR factorisation of a fixed design, reusable across many response vectors."""

    def __init__(self, levels):
        self.levels = np.asarray(levels, dtype=float)
        if self.levels.size < MIN_POOL:
            raise SingularDesignError(
                f"need at least {MIN_POOL} quantile levels, got {self.levels.size}")
        self.Z = design_matrix(self.levels)
        self.Q, self.R = np.linalg.qr(self.Z)
        sv = np.linalg.svd(self.R, compute_uv=False)
        cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
        if not cond <= COND_MAX:
            uniq = np.unique(self.levels)
            raise SingularDesignError(
                f"design condition number {cond:.3g} exceeds {COND_MAX:g}; "
                f"distinct levels: {uniq.tolist()}")

    def solve(self, Y) -> np.ndarray:
        """OLS coefficients; ``Y`` is (n,) or (n, m) with one column per response."""
        return linalg.solve_triangular(self.R, self.Q.T @ Y)


def ols_fit(pool: QuantilePool) -> ThetaEstimate:
    """Least-squares fit of the pool values on the Cornish-Fisher design."""
    return ThetaEstimate.from_array(CFDesign(pool.levels).solve(pool.values))


def moment_constraint_holds(theta: ThetaEstimate) -> bool:
    """True iff the implied moments satisfy ``k - s^2 - 1 >= 0``."""
    return bool(constraint_value(theta.beta1, theta.beta2, theta.beta3) >= 0.0)


def constraint_value(b1, b2, b3):
    return b1 * b1 - 18.0 * b2 * b2 + 12.0 * b1 * b3


def qcm_from_theta(theta: ThetaEstimate, eps: float = 1e-8) -> QcmTriple:
    """Map coefficients to (variance, skewness, kurtosis)."""
    b1 = theta.beta1
    if not abs(b1) > eps:
        raise DegenerateScaleError(f"|beta1| = {abs(b1):.3g} <= {eps:.3g}")
    return QcmTriple(
        h=b1 * b1,
        s=6.0 * theta.beta2 / b1,
        k=24.0 * theta.beta3 / b1 + 3.0,
        constraint_ok=moment_constraint_holds(theta),
    )


def qcm_arrays(theta: np.ndarray, eps) -> dict:
    """Vectorised ``qcm_from_theta`` over rows of a (T, 4) coefficient array.

    Degenerate rows get NaN skewness and kurtosis and ``constraint_ok = False``.
    """
    theta = np.atleast_2d(theta)
    b1, b2, b3 = theta[:, 1], theta[:, 2], theta[:, 3]
    ok_scale = np.abs(b1) > eps
    safe = np.where(ok_scale, b1, 1.0)
    s = np.where(ok_scale, 6.0 * b2 / safe, np.nan)
    k = np.where(ok_scale, 24.0 * b3 / safe + 3.0, np.nan)
    return {
        "h": b1 * b1,
        "s": s,
        "k": k,
        "constraint_ok": ok_scale & (constraint_value(b1, b2, b3) >= 0.0),
    }


def _feasible(beta) -> bool:
    return beta[0] >= 0.0 and constraint_value(*beta) >= 0.0


def _polish(beta: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Push a near-feasible slope vector onto the feasible set by the smallest moves.

    A vanishing ``beta1`` forces ``beta2 = 0``; ``beta3`` is then the exact
    minimiser of the quadratic objective on that face.
    """
    b1, b2, b3 = beta
    if b1 <= 1e-10:
        d = -b[:2]
        return np.array([0.0, 0.0, b[2] - (A[2, :2] @ d) / A[2, 2]])
    return _to_feasible(b1, b2, b3)


def _to_feasible(b1, b2, b3) -> np.ndarray:
    """Shrink ``|beta2|`` (and raise ``beta3`` if needed) until the constraint holds
    in floating point; ``b1 > 0`` or ``b1 = b2 = 0`` is assumed."""
    if b1 * b1 + 12.0 * b1 * b3 < 0.0:
        b3 = -b1 / 12.0
        while b1 * b1 + 12.0 * b1 * b3 < 0.0:
            b3 = np.nextafter(b3, np.inf)
    if constraint_value(b1, b2, b3) < 0.0:
        b2 = np.copysign(np.sqrt(max(b1 * b1 + 12.0 * b1 * b3, 0.0) / 18.0), b2)
        while constraint_value(b1, b2, b3) < 0.0:
            b2 *= 1.0 - 1e-14
    return np.array([b1, b2, b3])


def constrained_ls_fit(pool: QuantilePool, n_starts: int = 2) -> ThetaEstimate:
    """Least squares subject to ``beta1 >= 0`` and the moment constraint.

    Returns the OLS fit untouched when it is already feasible. The feasible set
    is convex (``beta3 >= (18 beta2^2 - beta1^2) / (12 beta1)`` is a
    quadratic-over-linear epigraph), so SLSQP on the intercept-profiled, scaled
    problem reaches the global optimum; the end point is nudged onto the
    boundary and the intercept re-profiled.
    """
    design = CFDesign(pool.levels)
    Y = pool.values
    ols = design.solve(Y)
    if _feasible(ols[1:]):
        return ThetaEstimate.from_array(ols)

    X = design.Z[:, 1:]
    Xc = X - X.mean(axis=0)
    n = Y.size
    scale = max(float(np.ptp(Y)), float(np.abs(ols[1:]).max()), 1e-300)
    A = Xc.T @ Xc / n
    b = ols[1:] / scale

    def obj(beta):
        d = beta - b
        return d @ A @ d, 2.0 * A @ d

    cons = [{"type": "ineq",
             "fun": lambda v: constraint_value(*v),
             "jac": lambda v: np.array([2 * v[0] + 12 * v[2], -36 * v[1], 12 * v[0]])}]
    starts = [np.array([max(b[0], 1e-3), 0.0, max(b[2], 0.0)]),
              np.array([abs(b[0]) + 1e-3, 0.0, 0.0])][: max(1, n_starts)]
    best, best_f = None, np.inf
    for x0 in starts:
        res = optimize.minimize(obj, x0, jac=True, method="SLSQP",
                                bounds=[(0.0, None), (None, None), (None, None)],
                                constraints=cons, options={"ftol": 1e-16, "maxiter": 500})
        if not np.all(np.isfinite(res.x)):
            continue
        x = _polish(res.x, A, b)
        f = obj(x)[0]
        if f < best_f:
            best, best_f = x, f
    if best is None:
        raise EstimationError("constrained least squares failed from every start")
    slopes = _to_feasible(*(best * scale))
    beta0 = float(np.mean(Y - X @ slopes))
    return ThetaEstimate(beta0, *map(float, slopes))


def rss(pool: QuantilePool, theta: ThetaEstimate) -> float:
    r = pool.values - design_matrix(pool.levels) @ theta.as_array()
    return float(r @ r)
