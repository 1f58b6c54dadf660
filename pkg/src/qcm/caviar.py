"""CAViaR conditional quantile models and their check-loss estimation.

Four recursions are supported (``psi`` indexed from 0):

* SAV:  Q_t = psi0 + psi1 Q_{t-1} + psi2 |y_{t-1}|
* AS:   Q_t = psi0 + psi1 Q_{t-1} + psi2 max(y_{t-1}, 0) + psi3 min(y_{t-1}, 0)
* IG:   Q_t = -/+ sqrt(psi0 + psi1 Q_{t-1}^2 + psi2 y_{t-1}^2)   (negative root for alpha <= 0.5)
* ADAP: Q_t = Q_{t-1} + psi0 {[1 + exp(N (y_{t-1} - Q_{t-1}))]^{-1} - alpha}

Estimation minimises the mean check loss by random screening of a parameter
box followed by Nelder-Mead from the best candidates. Both stages run inside
numba with the GIL released.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError, EstimationError

FAMILIES = ("SAV", "AS", "IG", "ADAP")
N_PARAMS = {"SAV": 3, "AS": 4, "IG": 3, "ADAP": 1}
_CODE = {name: i for i, name in enumerate(FAMILIES)}

ADAP_N = 10.0
N_RANDOM = 10_000
N_KEEP = 10
NM_MAXITER = 500
NM_TOL = 1e-8
MIN_T = 100


@dataclass(frozen=True)
class CaviarSpec:
    family: str
    alpha: float
    adap_N: float = ADAP_N

    def __post_init__(self):
        if self.family not in _CODE:
            raise ConfigError(f"unknown CAViaR family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.adap_N > 0:
            raise ConfigError("adap_N must be positive")

    @property
    def n_params(self) -> int:
        return N_PARAMS[self.family]

    @property
    def sign(self) -> float:
        # root branch for IG; unused by the other families
        return -1.0 if self.alpha <= 0.5 else 1.0


@dataclass
class CaviarFit:
    spec: CaviarSpec
    psi: np.ndarray
    loss: float
    q_path: np.ndarray
    q_init: float
    y: np.ndarray | None = field(default=None, repr=False)

    @property
    def hit_rate(self) -> float:
        return float(np.mean(self.y < self.q_path))

    @property
    def coverage_error(self) -> float:
        """``|#{y_t < Q_t}/T - alpha|``."""
        return abs(self.hit_rate - self.spec.alpha)


def check_loss(residuals, alpha: float) -> float:
    """Sum of ``rho_alpha(u) = u (alpha - 1{u < 0})``."""
    u = np.asarray(residuals, dtype=float)
    return float(np.sum(u * (alpha - (u < 0))))


# ---------------------------------------------------------------- numba kernels


@njit(cache=True, nogil=True)
def _next_q(fam, psi, q, y, alpha, adap_n, sign):
    if fam == 0:
        return psi[0] + psi[1] * q + psi[2] * abs(y)
    elif fam == 1:
        return psi[0] + psi[1] * q + psi[2] * max(y, 0.0) + psi[3] * min(y, 0.0)
    elif fam == 2:
        r = psi[0] + psi[1] * q * q + psi[2] * y * y
        if r < 0.0:
            return np.nan
        return sign * np.sqrt(r)
    else:
        w = 1.0 / (1.0 + np.exp(adap_n * (y - q)))
        return q + psi[0] * (w - alpha)


@njit(cache=True, nogil=True)
def _path_kernel(fam, psi, y, q0, alpha, adap_n, sign, out):
    out[0] = q0
    for t in range(1, y.shape[0]):
        out[t] = _next_q(fam, psi, out[t - 1], y[t - 1], alpha, adap_n, sign)
        if out[t] != out[t]:
            return t
    return -1


@njit(cache=True, nogil=True)
def _lane_losses(fam, P, y, q0, alpha, adap_n, sign, lo, hi, caps):
    """Mean check loss of every row of ``P`` (one parameter vector per lane).

    Lanes advance through time together so the recursions interleave. A lane
    whose running sum passes ``caps[j] * n`` is reported as +inf; the loop ends
    early once every lane has done so. Out-of-box rows and non-finite paths
    are +inf as well.
    """
    L = P.shape[0]
    n = y.shape[0]
    out = np.empty(L)
    q = np.full(L, q0)
    tot = np.zeros(L)
    limit = caps * n
    p0 = P[:, 0].copy()
    p1 = P[:, 1].copy() if P.shape[1] > 1 else np.zeros(L)
    p2 = P[:, 2].copy() if P.shape[1] > 2 else np.zeros(L)
    p3 = P[:, 3].copy() if P.shape[1] > 3 else np.zeros(L)
    am1 = alpha - 1.0
    u = y[0] - q0
    tot[:] = max(alpha * u, am1 * u)
    t = 1
    while t < n:
        stop = min(n, t + 25)
        if fam == 0:
            for tt in range(t, stop):
                ay = abs(y[tt - 1])
                yt = y[tt]
                for j in range(L):
                    qj = p0[j] + p1[j] * q[j] + p2[j] * ay
                    q[j] = qj
                    u = yt - qj
                    tot[j] += max(alpha * u, am1 * u)
        elif fam == 1:
            for tt in range(t, stop):
                yp = max(y[tt - 1], 0.0)
                ym = min(y[tt - 1], 0.0)
                yt = y[tt]
                for j in range(L):
                    qj = p0[j] + p1[j] * q[j] + p2[j] * yp + p3[j] * ym
                    q[j] = qj
                    u = yt - qj
                    tot[j] += max(alpha * u, am1 * u)
        elif fam == 2:
            for tt in range(t, stop):
                y2 = y[tt - 1] * y[tt - 1]
                yt = y[tt]
                for j in range(L):
                    qj = sign * np.sqrt(p0[j] + p1[j] * q[j] * q[j] + p2[j] * y2)
                    q[j] = qj
                    u = yt - qj
                    tot[j] += max(alpha * u, am1 * u)
        else:
            for tt in range(t, stop):
                yp = y[tt - 1]
                yt = y[tt]
                for j in range(L):
                    w = 1.0 / (1.0 + np.exp(adap_n * (yp - q[j])))
                    qj = q[j] + p0[j] * (w - alpha)
                    q[j] = qj
                    u = yt - qj
                    tot[j] += max(alpha * u, am1 * u)
        t = stop
        done = True
        for j in range(L):
            if not tot[j] > limit[j]:
                done = False
                break
        if done:
            break
    k = P.shape[1]
    for j in range(L):
        ok = tot[j] == tot[j] and tot[j] <= limit[j]
        for i in range(k):
            if not (lo[i] <= P[j, i] <= hi[i]):
                ok = False
        out[j] = tot[j] / n if ok else np.inf
    return out


@njit(cache=True, nogil=True)
def _loss_kernel(fam, psi, y, q0, alpha, adap_n, sign, lo, hi, cap):
    P = psi.reshape(1, psi.shape[0])
    return _lane_losses(fam, P, y, q0, alpha, adap_n, sign, lo, hi, np.array([cap]))[0]


@njit(cache=True, nogil=True)
def _screen(fam, cands, y, q0, alpha, adap_n, sign, lo, hi, keep):
    """Indices and losses of the ``keep`` lowest-loss candidates (ties by index).

    Candidates are ranked by their loss on a short prefix and then evaluated in
    blocks in that order, so the running cutoff tightens early and blocks of
    poor candidates stop partway through the sample. The selected set does not
    depend on the visiting order.
    """
    m_total = cands.shape[0]
    n_pre = min(y.shape[0], 50)
    inf_caps = np.full(m_total, np.inf)
    pre = _lane_losses(fam, cands, y[:n_pre], q0, alpha, adap_n, sign, lo, hi, inf_caps)
    order = np.argsort(pre, kind="mergesort")
    best_f = np.full(keep, np.inf)
    best_i = np.full(keep, -1, dtype=np.int64)
    block = 32
    for b0 in range(0, m_total, block):
        ids = order[b0:b0 + block]
        if pre[ids[0]] == np.inf:
            break
        caps = np.full(ids.shape[0], best_f[keep - 1])
        f_blk = _lane_losses(fam, cands[ids], y, q0, alpha, adap_n, sign, lo, hi, caps)
        for r in range(ids.shape[0]):
            f = f_blk[r]
            m = ids[r]
            if f == np.inf:
                continue
            if f < best_f[keep - 1] or (f == best_f[keep - 1] and m < best_i[keep - 1]):
                j = keep - 1
                while j > 0 and (best_f[j - 1] > f or (best_f[j - 1] == f and best_i[j - 1] > m)):
                    best_f[j] = best_f[j - 1]
                    best_i[j] = best_i[j - 1]
                    j -= 1
                best_f[j] = f
                best_i[j] = m
    return best_i, best_f


@njit(cache=True, nogil=True)
def _sort_simplex(sim, fsim):
    n1 = fsim.shape[0]
    for i in range(1, n1):
        fv = fsim[i]
        xv = sim[i].copy()
        j = i - 1
        while j >= 0 and fsim[j] > fv:
            fsim[j + 1] = fsim[j]
            sim[j + 1] = sim[j]
            j -= 1
        fsim[j + 1] = fv
        sim[j + 1] = xv


# Nelder-Mead phases: which trial point a run is waiting on.
_INIT, _REFLECT, _EXPAND, _CONTRACT_OUT, _CONTRACT_IN, _SHRINK, _DONE = 0, 1, 2, 3, 4, 5, 6


@njit(cache=True, nogil=True)
def _nm_start_iteration(r, sim, fsim, it, xbar, pend, cap, phase, maxiter, xatol, fatol):
    """Sort, test convergence, and queue the reflection point for run ``r``."""
    n = sim.shape[2]
    _sort_simplex(sim[r], fsim[r])
    if it[r] >= maxiter:
        phase[r] = _DONE
        return
    xdev = 0.0
    fdev = 0.0
    for i in range(1, n + 1):
        fdev = max(fdev, abs(fsim[r, 0] - fsim[r, i]))
        for j in range(n):
            xdev = max(xdev, abs(sim[r, i, j] - sim[r, 0, j]))
    if xdev <= xatol and fdev <= fatol:
        phase[r] = _DONE
        return
    xbar[r] = 0.0
    for i in range(n):
        xbar[r] += sim[r, i]
    xbar[r] /= n
    pend[r] = 2.0 * xbar[r] - sim[r, n]
    cap[r] = fsim[r, n]
    phase[r] = _REFLECT


@njit(cache=True, nogil=True)
def _nelder_mead_many(fam, X0, y, q0, alpha, adap_n, sign, lo, hi, maxiter, xatol, fatol):
    """Independent Nelder-Mead searches from each row of ``X0``, run in lockstep.

    Each run follows the textbook sequence (reflection 1, expansion 2,
    contraction 1/2, shrink 1/2; 5% initial simplex) exactly as it would alone;
    only the loss evaluations of the runs are batched. Trial points are
    evaluated with a cap equal to the value they must beat, which cannot change
    a branch decision.
    """
    R, n = X0.shape
    sim = np.empty((R, n + 1, n))
    fsim = np.full((R, n + 1), np.inf)
    for r in range(R):
        sim[r, 0] = X0[r]
        for k in range(n):
            v = X0[r].copy()
            v[k] = v[k] * 1.05 if v[k] != 0.0 else 0.00025
            sim[r, k + 1] = v
    phase = np.full(R, _INIT, dtype=np.int64)
    idx = np.zeros(R, dtype=np.int64)
    it = np.ones(R, dtype=np.int64)
    xbar = np.zeros((R, n))
    xr = np.zeros((R, n))
    fxr = np.zeros(R)
    pend = np.empty((R, n))
    cap = np.full(R, np.inf)
    for r in range(R):
        pend[r] = sim[r, 0]

    while True:
        active = np.empty(R, dtype=np.int64)
        na = 0
        for r in range(R):
            if phase[r] != _DONE:
                active[na] = r
                na += 1
        if na == 0:
            break
        act = active[:na]
        f_act = _lane_losses(fam, pend[act], y, q0, alpha, adap_n, sign, lo, hi, cap[act])
        for a in range(na):
            r = act[a]
            f = f_act[a]
            ph = phase[r]
            finished = False
            shrink = False
            if ph == _INIT:
                fsim[r, idx[r]] = f
                idx[r] += 1
                if idx[r] <= n:
                    pend[r] = sim[r, idx[r]]
                    cap[r] = np.inf
                else:
                    _nm_start_iteration(r, sim, fsim, it, xbar, pend, cap, phase, maxiter, xatol, fatol)
                continue
            if ph == _REFLECT:
                xr[r] = pend[r]
                fxr[r] = f
                if f < fsim[r, 0]:
                    pend[r] = 3.0 * xbar[r] - 2.0 * sim[r, n]
                    cap[r] = f
                    phase[r] = _EXPAND
                elif f < fsim[r, n - 1]:
                    sim[r, n] = xr[r]
                    fsim[r, n] = f
                    finished = True
                elif f < fsim[r, n]:
                    pend[r] = 1.5 * xbar[r] - 0.5 * sim[r, n]
                    cap[r] = f
                    phase[r] = _CONTRACT_OUT
                else:
                    pend[r] = 0.5 * xbar[r] + 0.5 * sim[r, n]
                    cap[r] = fsim[r, n]
                    phase[r] = _CONTRACT_IN
            elif ph == _EXPAND:
                if f < fxr[r]:
                    sim[r, n] = pend[r]
                    fsim[r, n] = f
                else:
                    sim[r, n] = xr[r]
                    fsim[r, n] = fxr[r]
                finished = True
            elif ph == _CONTRACT_OUT:
                if f <= fxr[r]:
                    sim[r, n] = pend[r]
                    fsim[r, n] = f
                    finished = True
                else:
                    shrink = True
            elif ph == _CONTRACT_IN:
                if f < fsim[r, n]:
                    sim[r, n] = pend[r]
                    fsim[r, n] = f
                    finished = True
                else:
                    shrink = True
            else:  # _SHRINK
                fsim[r, idx[r]] = f
                idx[r] += 1
                if idx[r] <= n:
                    sim[r, idx[r]] = sim[r, 0] + 0.5 * (sim[r, idx[r]] - sim[r, 0])
                    pend[r] = sim[r, idx[r]]
                else:
                    finished = True
            if shrink:
                idx[r] = 1
                sim[r, 1] = sim[r, 0] + 0.5 * (sim[r, 1] - sim[r, 0])
                pend[r] = sim[r, 1]
                cap[r] = np.inf
                phase[r] = _SHRINK
            if finished:
                it[r] += 1
                _nm_start_iteration(r, sim, fsim, it, xbar, pend, cap, phase, maxiter, xatol, fatol)
    best = np.empty((R, n))
    fbest = np.empty(R)
    for r in range(R):
        best[r] = sim[r, 0]
        fbest[r] = fsim[r, 0]
    return best, fbest, it


@njit(cache=True, nogil=True)
def _fit_kernel(fam, cands, y, q0, alpha, adap_n, sign, lo, hi, keep, maxiter, tol):
    idx, _ = _screen(fam, cands, y, q0, alpha, adap_n, sign, lo, hi, keep)
    nk = 0
    while nk < keep and idx[nk] >= 0:
        nk += 1
    if nk == 0:
        return cands[0].copy(), np.inf
    X, F, _ = _nelder_mead_many(fam, cands[idx[:nk]], y, q0, alpha, adap_n, sign,
                                lo, hi, maxiter, tol, tol)
    b = 0
    for r in range(1, nk):
        if F[r] < F[b]:
            b = r
    return X[b].copy(), F[b]


# ------------------------------------------------------------------ public API


def quantile_path(spec: CaviarSpec, psi, y, q_init: float) -> np.ndarray:
    """Run the family recursion from ``Q_1 = q_init``."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (spec.n_params,):
        raise ConfigError(f"{spec.family} expects {spec.n_params} parameters, got {psi.shape}")
    y = np.ascontiguousarray(y, dtype=float)
    out = np.empty_like(y)
    bad = _path_kernel(_CODE[spec.family], psi, y, float(q_init), spec.alpha,
                       spec.adap_N, spec.sign, out)
    if bad >= 0:
        raise DomainError(f"IG radicand negative at t={bad + 1}")
    return out


def initial_quantile(y, alpha: float) -> float:
    """Empirical ``alpha``-quantile of the first ``min(300, ceil(T/10))`` observations."""
    m = min(300, math.ceil(len(y) / 10))
    return float(np.quantile(np.asarray(y[:m]), alpha))


def parameter_box(family: str, y) -> tuple[np.ndarray, np.ndarray]:
    """Soft bounds for the random screen and the optimiser, scaled by ``max |y|``."""
    m = max(float(np.max(np.abs(y))), 1e-8)
    if family == "SAV":
        lo, hi = [-m, -1.0, -3.0], [m, 1.0, 3.0]
    elif family == "AS":
        lo, hi = [-m, -1.0, -3.0, -3.0], [m, 1.0, 3.0, 3.0]
    elif family == "IG":
        lo, hi = [0.0, 0.0, 0.0], [m * m, 1.0, 3.0]
    else:
        lo, hi = [-10.0 * m], [10.0 * m]
    return np.array(lo, dtype=float), np.array(hi, dtype=float)


def flat_baseline(spec: CaviarSpec, y) -> np.ndarray:
    """Parameters with the dynamics switched off (constant path at the sample quantile)."""
    q = float(np.quantile(y, spec.alpha))
    if spec.family == "SAV":
        return np.array([q, 0.0, 0.0])
    if spec.family == "AS":
        return np.array([q, 0.0, 0.0, 0.0])
    if spec.family == "IG":
        return np.array([q * q, 0.0, 0.0])
    return np.array([0.0])


def estimate(spec: CaviarSpec, y, rng: np.random.Generator | int | None = None, *,
             n_random: int = N_RANDOM, n_keep: int = N_KEEP,
             maxiter: int = NM_MAXITER, tol: float = NM_TOL,
             q_init: float | None = None) -> CaviarFit:
    """Minimise the mean check loss of ``spec`` on ``y``."""
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < MIN_T:
        raise ConfigError(f"need at least {MIN_T} observations, got {y.size}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    q0 = initial_quantile(y, spec.alpha) if q_init is None else float(q_init)
    lo, hi = parameter_box(spec.family, y)
    base = np.clip(flat_baseline(spec, y), lo, hi)
    cands = np.vstack([base, rng.uniform(lo, hi, size=(n_random, spec.n_params))])
    fam = _CODE[spec.family]
    args = (y, q0, spec.alpha, spec.adap_N, spec.sign, lo, hi)

    psi, loss = _fit_kernel(fam, cands, *args, min(n_keep, len(cands)), maxiter, tol)
    base_loss = _loss_kernel(fam, base, *args, np.inf)
    if base_loss <= loss:
        psi, loss = base, base_loss
    if not np.isfinite(loss):
        raise EstimationError(f"{spec.family} at alpha={spec.alpha}: no start produced a finite loss")
    path = quantile_path(spec, psi, y, q0)
    return CaviarFit(spec=spec, psi=psi, loss=float(loss), q_path=path, q_init=q0, y=y)
