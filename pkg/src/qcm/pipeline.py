"""End-to-end QCM computation: CAViaR fits on a level grid, DQ screening, and
per-timepoint Cornish-Fisher regressions."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import caviar
from .cornish_fisher import CFDesign, QuantilePool, constrained_ls_fit, qcm_arrays
from .dq import PathRecord, PooledQuantiles, filter_pool
from .errors import ConfigError, EstimationError

POLICIES = ("check", "enforce")
EPS_SCALE = 1e-8


def default_grid() -> tuple[float, ...]:
    return parse_grid("0.01:0.01:0.99")


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive) or a comma-separated list of levels."""
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ConfigError("grid step must be positive")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(float(round(start + i * step, 12)) for i in range(n))
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None


def default_threads() -> int:
    env = os.environ.get("QCM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"QCM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass
class PipelineConfig:
    grid: tuple[float, ...] = field(default_factory=default_grid)
    families: tuple[str, ...] = caviar.FAMILIES
    p_star: float = 0.1
    constraint_policy: str = "check"
    seed: int = 0
    # optimiser settings for each CAViaR fit
    n_random: int = caviar.N_RANDOM
    n_keep: int = caviar.N_KEEP
    maxiter: int = caviar.NM_MAXITER
    tol: float = caviar.NM_TOL
    adap_N: float = caviar.ADAP_N

    def __post_init__(self):
        self.grid = tuple(float(a) for a in self.grid)
        self.families = tuple(f.upper() for f in self.families)
        self.validate()

    def validate(self) -> None:
        g = np.asarray(self.grid)
        if g.size == 0 or np.any(~((g > 0) & (g < 1))):
            raise ConfigError("grid levels must lie strictly inside (0, 1)")
        if np.any(np.diff(g) <= 0):
            raise ConfigError("grid must be strictly increasing")
        if not self.families or any(f not in caviar.FAMILIES for f in self.families):
            raise ConfigError(f"families must be a non-empty subset of {caviar.FAMILIES}")
        if len(set(self.families)) != len(self.families):
            raise ConfigError("duplicate family in configuration")
        if not 0.0 <= self.p_star < 1.0:
            raise ConfigError(f"p_star must be in [0, 1), got {self.p_star}")
        if self.constraint_policy not in POLICIES:
            raise ConfigError(f"constraint policy must be one of {POLICIES}")
        if self.n_random < 1 or self.n_keep < 1 or self.maxiter < 1:
            raise ConfigError("optimiser counts must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["families"] = list(self.families)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**{**d, "grid": tuple(d["grid"]), "families": tuple(d["families"])})


@dataclass
class QCMSeries:
    """Per-timepoint QCMs; ``t`` is 1-based."""

    h: np.ndarray
    s: np.ndarray
    k: np.ndarray
    constraint_ok: np.ndarray
    beta0: np.ndarray
    n0: int
    refit: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.h.size + 1)

    def __len__(self) -> int:
        return self.h.size


@dataclass
class RunReport:
    records: list[PathRecord]
    n0: int
    timings: dict
    fits: list = field(default_factory=list, repr=False)
    pool: PooledQuantiles | None = field(default=None, repr=False)


def job_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one job."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def estimate_paths(y, cfg: PipelineConfig, threads: int | None = None) -> tuple[list[PathRecord], list]:
    """Fit every (family, level) CAViaR model; failures become path-less records."""
    y = np.ascontiguousarray(y, dtype=float)
    jobs = [(fi, li, fam, a) for fi, fam in enumerate(cfg.families) for li, a in enumerate(cfg.grid)]
    fam_index = {f: i for i, f in enumerate(caviar.FAMILIES)}

    def work(job):
        fi, li, fam, a = job
        spec = caviar.CaviarSpec(fam, a, cfg.adap_N)
        try:
            fit = caviar.estimate(spec, y, job_rng(cfg.seed, fam_index[fam], li),
                                  n_random=cfg.n_random, n_keep=cfg.n_keep,
                                  maxiter=cfg.maxiter, tol=cfg.tol)
        except EstimationError:
            return PathRecord(fam, a, None, failed=True), None
        return PathRecord(fam, a, fit.q_path), fit

    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(work, jobs))
    else:
        out = [work(j) for j in jobs]
    return [r for r, _ in out], [f for _, f in out]


def compute_qcms(pool: PooledQuantiles, policy: str = "check") -> QCMSeries:
    """Cornish-Fisher regression at every timepoint of a pooled quantile matrix.

    A negative volatility coefficient is always refitted under the constraints;
    a moment-constraint violation is refitted only under ``policy="enforce"``.
    """
    if policy not in POLICIES:
        raise ConfigError(f"constraint policy must be one of {POLICIES}")
    design = CFDesign(pool.levels)
    values = pool.values
    theta = design.solve(values.T).T
    eps = EPS_SCALE * np.ptp(values, axis=1)
    first = qcm_arrays(theta, eps)
    need = theta[:, 1] < -eps
    if policy == "enforce":
        need |= (~first["constraint_ok"]) & (np.abs(theta[:, 1]) > eps)
    refit = np.zeros(len(values), dtype=bool)
    for t in np.flatnonzero(need):
        th = constrained_ls_fit(QuantilePool(pool.levels, values[t]))
        theta[t] = th.as_array()
        refit[t] = True
    out = qcm_arrays(theta, eps)
    return QCMSeries(h=out["h"], s=out["s"], k=out["k"], constraint_ok=out["constraint_ok"],
                     beta0=theta[:, 0].copy(), n0=pool.n0, refit=refit)


def run(y, cfg: PipelineConfig | None = None, threads: int | None = None) -> tuple[QCMSeries, RunReport]:
    """Fit, screen, pool and regress; returns the QCM series and a run report."""
    cfg = cfg or PipelineConfig()
    y = np.asarray(y, dtype=float)
    if y.size < caviar.MIN_T:
        raise ConfigError(f"need at least {caviar.MIN_T} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ConfigError("series contains non-finite values")
    t0 = time.perf_counter()
    records, fits = estimate_paths(y, cfg, threads)
    t1 = time.perf_counter()
    pool = filter_pool(records, y, cfg.p_star)
    t2 = time.perf_counter()
    series = compute_qcms(pool, cfg.constraint_policy)
    t3 = time.perf_counter()
    timings = {"caviar_s": t1 - t0, "dq_s": t2 - t1, "regression_s": t3 - t2}
    return series, RunReport(records=records, n0=pool.n0, timings=timings, fits=fits, pool=pool)


__all__ = ["PipelineConfig", "QCMSeries", "RunReport", "run", "compute_qcms", "estimate_paths",
           "parse_grid", "default_grid", "job_rng"]
