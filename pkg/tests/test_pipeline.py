import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcm import pipeline
from qcm.dgp import simulate_garch
from qcm.dq import PooledQuantiles
from qcm.errors import ConfigError
from qcm.pipeline import PipelineConfig, compute_qcms, parse_grid, run

FAST = dict(n_random=200, n_keep=3, maxiter=200)


def test_parse_grid():
    g = parse_grid("0.01:0.01:0.99")
    assert len(g) == 99 and g[0] == 0.01 and g[-1] == 0.99 and g[49] == 0.5
    assert parse_grid("0.1,0.5,0.9") == (0.1, 0.5, 0.9)
    with pytest.raises(ConfigError):
        parse_grid("a:b")
    with pytest.raises(ConfigError):
        parse_grid("0.1:0:0.9")


@pytest.mark.parametrize("bad", [dict(grid=(0.0, 0.5)), dict(grid=(0.5, 1.0)), dict(grid=(0.6, 0.4)),
                                 dict(families=("GARCH",)), dict(families=()), dict(p_star=1.0),
                                 dict(constraint_policy="maybe"), dict(families=("SAV", "sav"))])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        PipelineConfig(**bad)


def test_config_roundtrip():
    cfg = PipelineConfig(grid=(0.1, 0.5, 0.9), families=("sav", "ig"), p_star=0.05, seed=3)
    assert cfg.families == ("SAV", "IG")
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_threads_env(monkeypatch):
    monkeypatch.setenv("QCM_THREADS", "3")
    assert pipeline.default_threads() == 3
    monkeypatch.setenv("QCM_THREADS", "x")
    with pytest.raises(ConfigError):
        pipeline.default_threads()


def test_run_rejects_short_or_nonfinite():
    with pytest.raises(ConfigError):
        run(np.zeros(50))
    y = np.random.default_rng(0).standard_normal(200)
    y[3] = np.nan
    with pytest.raises(ConfigError):
        run(y)


@pytest.fixture(scope="module")
def sav_run():
    y = simulate_garch(400, seed=11).y
    cfg = PipelineConfig(families=("SAV",), p_star=0.0, seed=5, **FAST)
    return y, cfg, run(y, cfg, threads=1)


def test_single_family_no_screen_keeps_all_levels(sav_run):
    y, cfg, (qcm, rep) = sav_run
    assert rep.n0 == 99 and qcm.n0 == 99
    assert len(qcm) == y.size and qcm.t[0] == 1 and qcm.t[-1] == y.size
    assert set(rep.timings) == {"caviar_s", "dq_s", "regression_s"}
    assert all(v >= 0 for v in rep.timings.values())


def test_deterministic_across_thread_counts(sav_run):
    y, cfg, (qcm, _) = sav_run
    again, _ = run(y, cfg, threads=2)
    for name in ("h", "s", "k", "beta0"):
        assert getattr(again, name).tobytes() == getattr(qcm, name).tobytes()


def test_location_shift_of_pool(sav_run):
    _, _, (qcm, rep) = sav_run
    pool = rep.pool
    shifted = PooledQuantiles(pool.levels, pool.values + 2.5, pool.sources)
    q2 = compute_qcms(shifted)
    np.testing.assert_allclose(q2.h, qcm.h, atol=1e-6)
    np.testing.assert_allclose(q2.s, qcm.s, atol=1e-6, equal_nan=True)
    np.testing.assert_allclose(q2.k, qcm.k, atol=1e-6, equal_nan=True)
    np.testing.assert_allclose(q2.beta0, qcm.beta0 + 2.5, atol=1e-6)


def test_enforce_policy_always_satisfies_constraint(sav_run):
    _, _, (_, rep) = sav_run
    q = compute_qcms(rep.pool, "enforce")
    finite = np.isfinite(q.k)
    assert np.all(q.constraint_ok[finite])
    assert np.all(q.k[finite] - q.s[finite] ** 2 - 1 >= -1e-9)
    assert np.all(q.h >= 0)


def synthetic_pool(theta, levels):
    from qcm.cornish_fisher import design_matrix
    X = design_matrix(levels)
    return PooledQuantiles(np.asarray(levels), theta @ X.T, ["SAV"] * len(levels))


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(0.1, 3), st.floats(-0.3, 0.3), st.floats(-0.2, 0.3))
def test_exact_cf_pool_recovers_moments(b0, b1, b2, b3):
    levels = np.array(parse_grid("0.01:0.01:0.99"))
    pool = synthetic_pool(np.array([[b0, b1, b2, b3]]), levels)
    q = compute_qcms(pool, "check")
    assert q.h[0] == pytest.approx(b1 * b1, rel=1e-9)
    assert q.s[0] == pytest.approx(6 * b2 / b1, rel=1e-7, abs=1e-9)
    assert q.k[0] == pytest.approx(24 * b3 / b1 + 3, rel=1e-7, abs=1e-9)
    g = b1 * b1 - 18 * b2 * b2 + 12 * b1 * b3
    if abs(g) > 1e-6:
        assert bool(q.constraint_ok[0]) == (g >= 0)
    e = compute_qcms(pool, "enforce")
    assert e.constraint_ok[0] or not np.isfinite(e.k[0])


def test_negative_slope_is_refitted_under_check():
    levels = np.array(parse_grid("0.01:0.01:0.99"))
    q = compute_qcms(synthetic_pool(np.array([[0.0, -1.0, 0.0, 0.0]]), levels), "check")
    assert q.refit[0] and q.h[0] >= 0
