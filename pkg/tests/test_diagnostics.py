import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from statsmodels.stats.diagnostic import acorr_ljungbox
import statsmodels.api as sm

from qcm import diagnostics as dg
from qcm.errors import ConfigError, DomainError


def test_descriptive_constant_flagged():
    d = dg.descriptive_stats([1, 1, 1, 1])
    assert d.degenerate and d.variance == 0 and np.isnan(d.skewness)


def test_descriptive_hand_example():
    d = dg.descriptive_stats([-1, 1, -1, 1])
    assert d.mean == 0 and d.variance == pytest.approx(4 / 3)
    # central moments with 1/n: m2 = 1, m4 = 1
    assert d.skewness == 0 and d.kurtosis == pytest.approx(1.0)
    assert (d.max, d.min, d.n) == (1, -1, 4)


def test_descriptive_too_short():
    with pytest.raises(ConfigError):
        dg.descriptive_stats([1, 2, 3])


def test_descriptive_normal_sample():
    n = 1_000_000
    x = np.random.default_rng(0).standard_normal(n)
    d = dg.descriptive_stats(x)
    # standard errors of mean, variance, skewness, kurtosis for a normal sample
    se = np.sqrt(np.array([1, 2, 6, 24]) / n)
    assert np.all(np.abs(np.array([d.mean, d.variance - 1, d.skewness, d.kurtosis - 3])) <= 3 * se)


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-100, 100), st.floats(0.01, 100))
def test_shape_moments_affine_invariant(seed, a, b):
    x = np.random.default_rng(seed).gamma(2.0, size=200)
    d1, d2 = dg.descriptive_stats(x), dg.descriptive_stats(a + b * x)
    assert d2.skewness == pytest.approx(d1.skewness, abs=1e-10)
    assert d2.kurtosis == pytest.approx(d1.kurtosis, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_ljung_box_matches_statsmodels(seed):
    x = np.random.default_rng(seed).standard_normal(500)
    x[1:] += 0.1 * x[:-1]
    ours = dg.ljung_box(x, 20)
    ref = acorr_ljungbox(x, lags=[20])
    assert ours.statistic == pytest.approx(float(ref["lb_stat"].iloc[0]), rel=1e-10)
    assert ours.pvalue == pytest.approx(float(ref["lb_pvalue"].iloc[0]), rel=1e-8)


def test_ljung_box_precondition_and_degenerate():
    with pytest.raises(ConfigError):
        dg.ljung_box(np.arange(10.0), 20)
    assert dg.ljung_box(np.ones(200), 5).degenerate


def test_ljung_box_pvalue_monotone():
    rng = np.random.default_rng(1)
    res = [dg.ljung_box(rng.standard_normal(300), 10) for _ in range(30)]
    order = np.argsort([r.statistic for r in res])
    p = np.array([r.pvalue for r in res])[order]
    assert np.all(np.diff(p) <= 0) and np.all((p >= 0) & (p <= 1))


@pytest.mark.slow
def test_ljung_box_size_and_power():
    rng = np.random.default_rng(2)
    rej = np.mean([dg.ljung_box(rng.standard_normal(1000)).pvalue < 0.05 for _ in range(2000)])
    assert 0.02 <= rej <= 0.09
    hits = 0
    for _ in range(200):
        e = rng.standard_normal(1000)
        x = np.empty(1000)
        x[0] = e[0]
        for t in range(1, 1000):
            x[t] = 0.5 * x[t - 1] + e[t]
        hits += dg.ljung_box(x).pvalue < 0.01
    assert hits / 200 >= 0.99


def test_newey_west_matches_statsmodels():
    e = np.random.default_rng(3).standard_normal(800)
    e[1:] += 0.4 * e[:-1]
    lag = int(800 ** (1 / 3))
    # OLS on a constant: the HAC covariance is the long-run variance of the mean
    res = sm.OLS(e, np.ones(800)).fit(cov_type="HAC", cov_kwds={"maxlags": lag, "use_correction": False})
    assert dg.newey_west_variance(e, lag) / 800 == pytest.approx(float(res.cov_params()[0, 0]), rel=1e-10)


def test_mean_ttest_sign_symmetry():
    e = np.random.default_rng(4).standard_normal(300) + 0.1
    a, b = dg.mean_ttest(e), dg.mean_ttest(-e)
    assert a.tstat == pytest.approx(-b.tstat) and a.pvalue == pytest.approx(b.pvalue)
    assert dg.mean_ttest(e, robust=False).pvalue != a.pvalue


def test_zero_residuals_degenerate():
    r = dg.mean_ttest(np.zeros(100))
    assert r.degenerate and r.pvalue == 1.0


class Q:
    def __init__(self, h, s, k):
        self.h, self.s, self.k = h, s, k


def test_validity_requires_positive_variance():
    y = np.zeros(10)
    with pytest.raises(DomainError):
        dg.validity_ttests(y, y, Q(np.r_[np.ones(9), 0.0], y, y + 3))


def test_moment_residuals_definition():
    y, mu, h = np.array([1.0, -2.0]), np.array([0.5, 0.0]), np.array([0.25, 4.0])
    r = dg.moment_residuals(y, mu, h, np.zeros(2), np.full(2, 3.0))
    np.testing.assert_allclose(r.e_h, [0.0, 0.0])
    np.testing.assert_allclose(r.e_s, [1.0, -1.0])
    np.testing.assert_allclose(r.e_k, [-2.0, -2.0])


def garch_truth_case(seed, bias=1.0):
    from qcm.dgp import simulate_garch
    tr = simulate_garch(1000, seed=seed)
    return dg.validity_ttests(tr.y, np.zeros(1000), Q(bias * tr.h, tr.s, tr.k))


@pytest.mark.slow
def test_validity_size_and_power_with_true_moments():
    ok = np.mean([min(garch_truth_case(s).pvalues) > 0.05 for s in range(100)])
    # three tests at 5% each; with true moments most replications pass all three
    assert ok >= 0.8
    power = np.mean([garch_truth_case(s, bias=2.0).h.pvalue < 0.05 for s in range(100)])
    assert power >= 0.95


def test_writers(tmp_path):
    x = np.random.default_rng(5).standard_normal(300)
    dg.write_descriptive(tmp_path / "d.csv", {"x": x})
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].startswith("series,n,mean") and lines[1].startswith("x,300,")
    dg.write_validity(tmp_path / "v.csv", {"x": garch_truth_case(0)})
    assert (tmp_path / "v.csv").read_text().splitlines()[0] == "series,t_h,p_h,t_s,p_s,t_k,p_k"
