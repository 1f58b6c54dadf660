"""Monte Carlo campaigns: QCM estimation error against known truth.

Error cases for the quantile pool fed to the Cornish-Fisher stage:

1. exact conditional quantiles,
2. quantiles plus N(0, sigma^2(alpha)) noise,
3. quantiles plus N(mu(alpha), sigma^2(alpha)) noise,
4. CAViaR-estimated quantiles after DQ screening (full pipeline).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dgp
from .dq import PooledQuantiles
from .diagnostics import validity_ttests
from .errors import ConfigError, DomainError
from .pipeline import PipelineConfig, compute_qcms, run

DGPS = ("garch-normal", "garch-t", "arma-mn-garch")
CASES = (1, 2, 3, 4)
MOMENTS = ("h", "s", "k")


def simulate(name: str, T: int, seed):
    if name == "garch-normal":
        return dgp.simulate_garch(T, innovation="normal", seed=seed)
    if name == "garch-t":
        return dgp.simulate_garch(T, innovation="student-t", seed=seed)
    if name == "arma-mn-garch":
        return dgp.simulate_mn_garch(T, seed=seed)
    raise ConfigError(f"unknown data generating process {name!r}; choose from {DGPS}")


@dataclass
class Replication:
    delta: np.ndarray            # (T, 3)
    constraint_ok: np.ndarray    # (T,)
    constraint_ok_enforced: np.ndarray | None = None
    n0: int = 0
    validity: np.ndarray | None = None   # (p_h, p_s, p_k) against the true mean


@dataclass
class Campaign:
    dgp: str
    case: int
    T: int
    delta: np.ndarray            # (reps, T, 3)
    constraint_ok: np.ndarray    # (reps, T)
    constraint_ok_enforced: np.ndarray | None = None
    n0: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    validity: np.ndarray | None = None   # (reps, 3)

    def median(self, t_max: int | None = None) -> np.ndarray:
        """Median Delta across replications, shape (t_max, 3); NaNs ignored."""
        d = self.delta if t_max is None else self.delta[:, :t_max]
        return np.nanmedian(d, axis=0)

    def iqr(self, t_max: int | None = None) -> np.ndarray:
        d = self.delta if t_max is None else self.delta[:, :t_max]
        q1, q3 = np.nanpercentile(d, [25, 75], axis=0)
        return q3 - q1


def _seeds(seed: int, rep: int):
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    data_ss, noise_ss, fit_ss = ss.spawn(3)
    return (np.random.default_rng(data_ss), np.random.default_rng(noise_ss),
            int(fit_ss.generate_state(1)[0]))


def run_replication(name: str, case: int, T: int, seed: int, rep: int,
                    cfg: PipelineConfig | None = None, threads: int = 1,
                    also_enforce: bool = False) -> Replication:
    cfg = cfg or PipelineConfig()
    if case not in CASES:
        raise ConfigError(f"error case must be one of {CASES}, got {case}")
    data_rng, noise_rng, fit_seed = _seeds(seed, rep)
    truth = simulate(name, T, data_rng)
    if case == 4:
        fit_cfg = PipelineConfig.from_dict({**cfg.to_dict(), "seed": fit_seed})
        series, report = run(truth.y, fit_cfg, threads)
        pool = report.pool
    else:
        levels = np.asarray(cfg.grid)
        values = dgp.inject_errors(truth.quantiles(levels), levels, case, noise_rng)
        pool = PooledQuantiles(levels=levels, values=values, sources=["truth"] * levels.size)
        series = compute_qcms(pool, cfg.constraint_policy)
    enforced = None
    if also_enforce:
        enforced = (series.constraint_ok if cfg.constraint_policy == "enforce"
                    else compute_qcms(pool, "enforce").constraint_ok)
    try:
        validity = np.array(validity_ttests(truth.y, truth.mu, series).pvalues)
    except DomainError:
        validity = np.full(3, np.nan)
    return Replication(delta=dgp.delta_metrics(series, truth), constraint_ok=series.constraint_ok,
                       constraint_ok_enforced=enforced, n0=pool.n0, validity=validity)


def run_campaign(name: str, case: int, reps: int = 100, T: int = 1000, seed: int = 0,
                 cfg: PipelineConfig | None = None, threads: int = 1,
                 also_enforce: bool = False, progress=None) -> Campaign:
    """Independent replications of one (process, error case) cell."""
    out = []
    for r in range(reps):
        out.append(run_replication(name, case, T, seed, r, cfg, threads, also_enforce))
        if progress is not None:
            progress(r + 1, reps)
    enforced = np.array([o.constraint_ok_enforced for o in out]) if also_enforce else None
    return Campaign(dgp=name, case=case, T=T,
                    delta=np.array([o.delta for o in out]),
                    constraint_ok=np.array([o.constraint_ok for o in out]),
                    constraint_ok_enforced=enforced,
                    n0=np.array([o.n0 for o in out]),
                    validity=np.array([o.validity for o in out]))


def boxplot_rows(campaigns: list[Campaign], t_max: int = 10) -> list[dict]:
    """Box-plot statistics per (case, t, moment) with 1.5 IQR whiskers."""
    rows = []
    for c in campaigns:
        for t in range(min(t_max, c.T)):
            for m, name in enumerate(MOMENTS):
                v = c.delta[:, t, m]
                v = v[np.isfinite(v)]
                if v.size == 0:
                    continue
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                lo_f, hi_f = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
                inside = v[(v >= lo_f) & (v <= hi_f)]
                outliers = np.sort(v[(v < lo_f) | (v > hi_f)])
                rows.append({
                    "dgp": c.dgp, "case": c.case, "t": t + 1, "moment": name,
                    "n": v.size, "min": v.min(), "q1": q1, "median": med, "q3": q3, "max": v.max(),
                    "whisker_lo": inside.min(), "whisker_hi": inside.max(),
                    "outliers": ";".join(f"{x:.10g}" for x in outliers),
                })
    return rows


def write_delta_summary(path, campaigns: list[Campaign], t_max: int = 10) -> None:
    rows = boxplot_rows(campaigns, t_max)
    cols = ["dgp", "case", "t", "moment", "n", "min", "q1", "median", "q3", "max",
            "whisker_lo", "whisker_hi", "outliers"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([f"{r[c]:.10g}" if isinstance(r[c], float) else r[c] for c in cols])
