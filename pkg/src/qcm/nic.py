"""News impact curves of QCM series.

TAR(p) conditional-mean fits give the shocks; a partially linear model
``m_t = theta m_{t-1} + g(driver_{t-1}) + error`` is then estimated by
Robinson's double-residual method with Gaussian Nadaraya-Watson smoothers,
and compared with the usual parametric shapes of ``g`` through adjusted R^2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateError, EstimationError, SingularDesignError

N_CANDIDATES = 30
CV_SPAN = (0.1, 3.0)
MIN_CV = 50
GRID_POINTS = 201
MASS_GUARD = 1e-8
T_CRIT = 1.96


# ----------------------------------------------------------------------- TAR


@dataclass
class TarFit:
    """Two-regime threshold AR; regime 0 is ``y_{t-1} <= 0``.

    ``mu_hat`` and ``resid`` cover ``t = p+1 .. T`` (1-based); ``start = p``.
    """

    order: int
    coef_low: np.ndarray
    coef_high: np.ndarray
    mu_hat: np.ndarray
    resid: np.ndarray
    start: int
    kept_low: np.ndarray = field(repr=False, default=None)
    kept_high: np.ndarray = field(repr=False, default=None)


def _tar_design(y: np.ndarray, p: int) -> np.ndarray:
    T = y.size
    return np.column_stack([np.ones(T - p)] + [y[p - j: T - j] for j in range(1, p + 1)])


def _ols_tstats(X, z):
    beta, *_ = np.linalg.lstsq(X, z, rcond=None)
    r = z - X @ beta
    dof = X.shape[0] - X.shape[1]
    s2 = float(r @ r) / dof if dof > 0 else np.nan
    cov = s2 * np.linalg.pinv(X.T @ X)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = beta / np.sqrt(np.diag(cov))
    return beta, t


def fit_tar(y, p: int, prune: bool = False) -> TarFit:
    """Least-squares TAR(p) with delay 1 and threshold 0.

    With ``prune=True`` coefficients with ``|t| < 1.96`` (i.i.d. standard
    errors) are dropped and the regime refitted once.
    """
    y = np.asarray(y, dtype=float)
    if p < 1:
        raise ConfigError("TAR order must be at least 1")
    if not y.size > 10 * p:
        raise ConfigError(f"need more than {10 * p} observations for TAR({p}), got {y.size}")
    if np.ptp(y) == 0.0:
        raise DegenerateError("constant series; TAR regimes are not identified")
    X = _tar_design(y, p)
    z = y[p:]
    low = y[p - 1: -1] <= 0.0
    coefs, kept = [], []
    mu = np.empty_like(z)
    for mask in (low, ~low):
        if mask.sum() < p + 2:
            raise EstimationError(f"a TAR regime has {mask.sum()} observations; need at least {p + 2}")
        Xr, zr = X[mask], z[mask]
        if np.linalg.matrix_rank(Xr) < Xr.shape[1]:
            raise DegenerateError("TAR regime design is rank deficient")
        beta, t = _ols_tstats(Xr, zr)
        keep = np.ones(p + 1, dtype=bool)
        if prune:
            keep = np.abs(t) >= T_CRIT
            beta = np.zeros(p + 1)
            if keep.any():
                beta[keep] = np.linalg.lstsq(Xr[:, keep], zr, rcond=None)[0]
        coefs.append(beta)
        kept.append(keep)
        mu[mask] = Xr @ beta
    return TarFit(order=p, coef_low=coefs[0], coef_high=coefs[1], mu_hat=mu, resid=z - mu,
                  start=p, kept_low=kept[0], kept_high=kept[1])


# -------------------------------------------------------------- kernel smoothing


@dataclass
class NWCurve:
    grid: np.ndarray
    values: np.ndarray
    supported: np.ndarray
    bandwidth: float


def _nw_at(points, x, target, b, chunk: int = 2048):
    """Gaussian-kernel NW fit at ``points``; also returns the kernel mass."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    vals = np.empty(points.size)
    mass = np.empty(points.size)
    for i in range(0, points.size, chunk):
        u = (points[i:i + chunk, None] - x[None, :]) / b
        e = 0.5 * u * u
        emin = e.min(axis=1, keepdims=True)
        w = np.exp(-(e - emin))      # ratio is unchanged by the row shift
        sw = w.sum(axis=1)
        vals[i:i + chunk] = (w @ target) / sw
        mass[i:i + chunk] = sw * np.exp(-emin[:, 0]) / (b * np.sqrt(2.0 * np.pi))
    return vals, mass


def nw_regress(x, target, bandwidth: float, grid) -> NWCurve:
    """Nadaraya-Watson regression of ``target`` on ``x`` evaluated on ``grid``.

    Grid points where the kernel mass ``sum K_b`` falls below ``1e-8 n`` are
    flagged unsupported; their values are still the (stably computed) ratio.
    """
    if not bandwidth > 0:
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.shape != target.shape or x.ndim != 1 or x.size == 0:
        raise ValueError("x and target must be non-empty 1-d arrays of equal length")
    grid = np.asarray(grid, dtype=float)
    vals, mass = _nw_at(grid, x, target, bandwidth)
    return NWCurve(grid=grid, values=vals, supported=mass >= MASS_GUARD * x.size,
                   bandwidth=float(bandwidth))


def silverman(x) -> float:
    x = np.asarray(x, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def loo_errors(x, target, b: float, chunk: int = 1024) -> float:
    """Mean squared leave-one-out prediction error of the NW smoother."""
    n = x.size
    sse = 0.0
    for i in range(0, n, chunk):
        u = (x[i:i + chunk, None] - x[None, :]) / b
        e = 0.5 * u * u
        rows = np.arange(i, min(i + chunk, n))
        e[rows - i, rows] = np.inf
        emin = e.min(axis=1, keepdims=True)
        w = np.exp(-(e - emin))
        pred = (w @ target) / w.sum(axis=1)
        sse += float(np.sum((target[rows] - pred) ** 2))
    return sse / n


@dataclass(frozen=True)
class CVResult:
    bandwidth: float
    candidates: np.ndarray
    scores: np.ndarray
    reference: float


def cv_bandwidth(x, target, n_candidates: int = N_CANDIDATES, span=CV_SPAN) -> CVResult:
    """Leave-one-out CV over a log-spaced grid of multiples of Silverman's bandwidth."""
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.size < MIN_CV:
        raise ConfigError(f"cross-validation needs at least {MIN_CV} points, got {x.size}")
    ref = silverman(x)
    if not ref > 0:
        raise DegenerateError("driver has zero spread; bandwidth undefined")
    cands = ref * np.geomspace(span[0], span[1], n_candidates)
    scores = np.array([loo_errors(x, target, b) for b in cands])
    return CVResult(float(cands[int(np.argmin(scores))]), cands, scores, ref)


def eval_grid(driver, n: int = GRID_POINTS) -> np.ndarray:
    lo, hi = np.percentile(np.asarray(driver, dtype=float), [1, 99])
    return np.linspace(lo, hi, n)


# -------------------------------------------------------------------- Robinson


@dataclass
class NicEstimate:
    theta: float
    grid: np.ndarray
    g: np.ndarray
    supported: np.ndarray
    bandwidths: tuple[float, float, float]
    driver_kind: str = "shock"


def robinson_fit(response, lagged, driver, grid=None, driver_kind: str = "shock") -> NicEstimate:
    """Partially linear fit ``response = theta * lagged + g(driver) + error``.

    ``phi1``/``phi2`` are NW regressions of the lagged/current response on the
    driver; theta is the slope of the double residuals; ``g`` is the NW
    regression of ``response - theta * lagged`` on the driver. All three
    bandwidths come from leave-one-out CV.
    """
    resp, lag, drv = (np.asarray(v, dtype=float) for v in (response, lagged, driver))
    n = resp.size
    if lag.shape != (n,) or drv.shape != (n,):
        raise ValueError("response, lagged response and driver must be aligned")
    if n < 100:
        raise ConfigError(f"need at least 100 aligned observations, got {n}")
    if np.ptp(resp) == 0.0 or np.ptp(lag) == 0.0:
        raise DegenerateError("constant response; persistence is not identified")
    b1 = cv_bandwidth(drv, lag).bandwidth
    b2 = cv_bandwidth(drv, resp).bandwidth
    phi1, _ = _nw_at(drv, drv, lag, b1)
    phi2, _ = _nw_at(drv, drv, resp, b2)
    u = lag - phi1
    den = float(u @ u)
    if not den > 1e-12 * float(lag @ lag):
        raise DegenerateError("lagged response is explained by the driver; theta undefined")
    theta = float(u @ (resp - phi2)) / den
    r = resp - theta * lag
    b3 = cv_bandwidth(drv, r).bandwidth
    grid = eval_grid(drv) if grid is None else np.asarray(grid, dtype=float)
    curve = nw_regress(drv, r, b3, grid)
    return NicEstimate(theta=theta, grid=grid, g=curve.values, supported=curve.supported,
                       bandwidths=(b1, b2, b3), driver_kind=driver_kind)


# ------------------------------------------------------------ parametric NICs


FORMS = {
    "h-quadratic": ("h", lambda x: [np.ones_like(x), x * x]),
    "h-leverage": ("h", lambda x: [np.ones_like(x), x * x, x * x * (x < 0)]),
    "s-cubic": ("s", lambda x: [np.ones_like(x), x ** 3]),
    "k-quartic": ("k", lambda x: [np.ones_like(x), x ** 4]),
}


@dataclass
class ParametricNicFit:
    form: str
    vartheta: np.ndarray
    theta: float
    r2: float
    adj_r2: float
    n: int

    def g(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.column_stack(FORMS[self.form][1](x)) @ self.vartheta


def adjusted_r2(r2: float, n: int, k: int) -> float:
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def fit_parametric_nic(form: str, response, lagged, driver) -> ParametricNicFit:
    """OLS of the response on its lag and the form's regressors in the driver."""
    if form not in FORMS:
        raise ConfigError(f"unknown NIC form {form!r}; choose from {sorted(FORMS)}")
    resp, lag, drv = (np.asarray(v, dtype=float) for v in (response, lagged, driver))
    n = resp.size
    X = np.column_stack([lag, *FORMS[form][1](drv)])
    k = X.shape[1] - 1
    if n <= k + 1:
        raise ConfigError("not enough observations for the regression")
    sv = np.linalg.svd(X / np.maximum(np.abs(X).max(axis=0), 1e-300), compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise SingularDesignError(f"regressors for form {form!r} are collinear")
    beta, *_ = np.linalg.lstsq(X, resp, rcond=None)
    r = resp - X @ beta
    tss = float(np.sum((resp - resp.mean()) ** 2))
    rss = float(r @ r)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return ParametricNicFit(form=form, vartheta=beta[1:], theta=float(beta[0]), r2=r2,
                            adj_r2=adjusted_r2(r2, n, k), n=n)


# ------------------------------------------------------------------ workflow


def nic_inputs(moment: str, resid, h, m):
    """Aligned (response_t, response_{t-1}, driver_{t-1}) for moment h, s or k.

    ``resid``, ``h`` and ``m`` are aligned per-t series (shocks, variance QCM
    and the moment's own QCM). The driver is the shock for ``h`` and the
    shock rescaled by ``sqrt(h)`` for ``s`` and ``k``.
    """
    resid, h, m = (np.asarray(v, dtype=float) for v in (resid, h, m))
    if moment == "h":
        drv = resid
    elif moment in ("s", "k"):
        if np.any(~(h > 0)):
            raise ConfigError("variance QCMs must be positive to rescale shocks")
        drv = resid / np.sqrt(h)
    else:
        raise ConfigError(f"moment must be 'h', 's' or 'k', got {moment!r}")
    return m[1:], m[:-1], drv[:-1]


@dataclass
class NicStudy:
    tar: TarFit
    nonparametric: dict
    parametric: dict


def nic_study(y, qcm, p: int, prune: bool = False) -> NicStudy:
    """TAR shocks, nonparametric NICs for (h, s, k) and the four parametric forms."""
    y = np.asarray(y, dtype=float)
    tar = fit_tar(y, p, prune)
    sl = slice(tar.start, None)
    h, s, k = (np.asarray(getattr(qcm, a), dtype=float)[sl] for a in ("h", "s", "k"))
    series = {"h": h, "s": s, "k": k}
    nonpar, par = {}, {}
    for mom in ("h", "s", "k"):
        resp, lag, drv = nic_inputs(mom, tar.resid, h, series[mom])
        nonpar[mom] = robinson_fit(resp, lag, drv, driver_kind="shock" if mom == "h" else "rescaled")
    for form, (mom, _) in FORMS.items():
        par[form] = fit_parametric_nic(form, *nic_inputs(mom, tar.resid, h, series[mom]))
    return NicStudy(tar=tar, nonparametric=nonpar, parametric=par)


def write_curves(out_dir, study: NicStudy) -> list:
    """One CSV per moment: grid, nonparametric g, support flag and parametric overlays."""
    import os

    paths = []
    for mom, est in study.nonparametric.items():
        forms = [f for f, (m, _) in FORMS.items() if m == mom]
        path = os.path.join(out_dir, f"nic_{mom}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "g_hat", "supported", *(f"g_{f}" for f in forms)])
            over = [study.parametric[f].g(est.grid) for f in forms]
            for i, x in enumerate(est.grid):
                w.writerow([f"{x:.10g}", f"{est.g[i]:.10g}", str(bool(est.supported[i])).lower(),
                            *(f"{o[i]:.10g}" for o in over)])
        paths.append(path)
    return paths


def write_adjusted_r2(path, study: NicStudy) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["form", "moment", "theta", "vartheta", "r2", "adj_r2", "n",
                    "theta_robinson", "b1", "b2", "b3"])
        for form, fit in study.parametric.items():
            mom = FORMS[form][0]
            est = study.nonparametric[mom]
            w.writerow([form, mom, f"{fit.theta:.10g}", ";".join(f"{v:.10g}" for v in fit.vartheta),
                        f"{fit.r2:.10g}", f"{fit.adj_r2:.10g}", fit.n, f"{est.theta:.10g}",
                        *(f"{b:.10g}" for b in est.bandwidths)])
