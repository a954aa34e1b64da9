import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smile_lab import estimators as est, fv_framework as fv, garch
from smile_lab.errors import DegenerateModelError, DomainError, InsufficientDataError

P05 = garch.SP500.replace(nu=0.05)


def iid(n, seed=0, scale=0.01):
    return np.random.default_rng(seed).standard_normal(n) * scale


# --- containers ------------------------------------------------------------

def test_return_series_validation():
    with pytest.raises(InsufficientDataError):
        est.ReturnSeries([0.1])
    with pytest.raises(DomainError):
        est.ReturnSeries([0.1, np.nan])
    with pytest.raises(DomainError):
        est.ReturnSeries([0.1, 0.2], dates=["2020-01-02", "2020-01-02"])
    s = est.ReturnSeries.from_prices([100.0, 101.0, 99.0], ["2020-01-01", "2020-01-02", "2020-01-03"])
    assert s.returns[0] == pytest.approx(math.log(1.01))
    assert str(s.dates[0]) == "2020-01-02"


def test_config_validation():
    est.EstimatorConfig()
    with pytest.raises(DomainError):
        est.EstimatorConfig(ssr_window=1)
    with pytest.raises(DomainError):
        est.EstimatorConfig(ema_vol_span=0)


# --- EMA vol ---------------------------------------------------------------

def test_ema_vol_constant_magnitude():
    r = 0.02 * np.where(np.arange(200) % 3 == 0, -1.0, 1.0)
    s = est.ema_vol(r, 20)
    assert np.all(np.isnan(s[:20]))
    assert np.allclose(s[20:] ** 2, 0.02**2, rtol=1e-13)


def test_ema_vol_unit_span_is_previous_square():
    r = iid(50, 1)
    s = est.ema_vol(r, 1)
    assert np.allclose(s[1:] ** 2, r[:-1] ** 2, rtol=1e-14)


def test_ema_vol_recursion_and_seed():
    r = iid(100, 2)
    s2 = est.ema_vol(r, 10) ** 2
    assert s2[10] == pytest.approx(np.mean(r[:10] ** 2))
    assert s2[11] == pytest.approx(0.9 * s2[10] + 0.1 * r[10] ** 2)
    assert s2[57] == pytest.approx(0.9 * s2[56] + 0.1 * r[56] ** 2)


def test_ema_vol_gaussian_mean():
    sigma = 0.01
    s2 = est.ema_vol(iid(200_000, 3, sigma), 20)[20:] ** 2
    # neighbouring values are correlated: batch means over 100 blocks
    blocks = s2[: s2.size // 100 * 100].reshape(100, -1).mean(axis=1)
    se = blocks.std(ddof=1) / 10
    assert abs(s2.mean() - sigma**2) < 3 * se


def test_ema_vol_is_causal_and_sign_invariant():
    r = iid(300, 4)
    base = est.ema_vol(r, 20)
    r2 = r.copy()
    r2[150:] *= 5
    assert np.array_equal(est.ema_vol(r2, 20)[:151], base[:151], equal_nan=True)
    assert np.array_equal(est.ema_vol(-r, 20), base, equal_nan=True)


def test_ema_vol_short_series():
    with pytest.raises(InsufficientDataError):
        est.ema_vol(iid(5), 20)


# --- leverage correlation --------------------------------------------------

@pytest.mark.parametrize("norm", est.NORMALIZATIONS)
def test_leverage_corr_odd_under_sign_flip(norm):
    r = garch.simulate(P05, 5000, 1, seed=5).returns[0]
    a = est.leverage_corr(r, 10, normalization=norm)
    b = est.leverage_corr(est.ReturnSeries(r).flipped(), 10, normalization=norm)
    assert np.array_equal(a.values, -b.values)
    assert np.array_equal(a.stderr, b.stderr)


@pytest.mark.parametrize("norm", est.NORMALIZATIONS)
def test_leverage_corr_zero_for_iid(norm):
    c = est.leverage_corr(iid(200_000, 6), 20, normalization=norm)
    z = c.values / c.stderr
    assert np.all(np.abs(z) < 4)
    assert abs(z.mean()) < 3 / math.sqrt(20) * 3


def test_leverage_corr_recovers_garch_curve():
    p = garch.SP500.replace(nu=0.1)
    r = garch.simulate(p, 300_000, 1, seed=7).returns[0]
    c = est.leverage_corr(r, 20)
    pred = 0.1 * est.GARCH_DERIV_MEAN * p.rho ** np.arange(20)
    assert np.all(np.abs(c.values - pred) < 4 * c.stderr)


def test_leverage_corr_errors():
    with pytest.raises(InsufficientDataError):
        est.leverage_corr(iid(100), 50)
    with pytest.raises(DomainError):
        est.leverage_corr(iid(1000), 5, normalization="bogus")
    with pytest.raises(DomainError):
        est.leverage_corr(iid(1000), 0)


# --- skewness --------------------------------------------------------------

def test_beta_boundaries():
    assert est.beta_from_probability(0.5) == 0.0
    assert est.beta_from_probability(1.0) == pytest.approx(-math.sqrt(math.pi / 2))


def test_low_moment_skewness_sign_follows_skewness():
    x = np.random.default_rng(8).exponential(size=20_000)
    r = x - x.mean()
    up = est.low_moment_skewness(r, 5, detrend_span=500)
    down = est.low_moment_skewness(-r, 5, detrend_span=500)
    assert up.prob_positive < 0.5 and up.beta > 3 * up.stderr
    assert down.beta < -3 * down.stderr
    assert up.overlapping


def test_low_moment_skewness_coverage_on_iid():
    hits = 0
    n_rep = 1000
    rng = np.random.default_rng(9)
    for _ in range(n_rep):
        r = rng.standard_normal(3000)
        b = est.low_moment_skewness(r, 5, detrend_span=100)
        hits += abs(b.beta) <= 3 * b.stderr
    assert hits / n_rep >= 0.99


def test_low_moment_skewness_insufficient():
    with pytest.raises(InsufficientDataError):
        est.low_moment_skewness(iid(1100), 20)


def test_skewness_from_leverage_trivial_cases():
    assert est.skewness_from_leverage(np.zeros(10), 0.0, 10) == 0.0
    assert est.skewness_from_leverage(np.zeros(10), 0.3, 9) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        est.skewness_from_leverage(np.zeros(5), 0.0, 10)


def test_skewness_from_leverage_exponential_reference():
    A, tau, T = 0.2, 40, 100
    g = -A * np.exp(-np.arange(1, T + 1) / tau)
    ref = 0.0
    for l in range(1, T + 1):
        ref += (1 - l / T) * (-A * math.exp(-l / tau))
    assert est.skewness_from_leverage(g, 0.0, T) == pytest.approx(3 * ref / math.sqrt(T), rel=1e-13)


def test_gamma_theoretical_geometric_sum():
    A, tau, T = 0.2, 40, 60
    g = -A * np.exp(-np.arange(1, T + 1) / tau)
    q = math.exp(-1 / tau)
    ref = -A / (2 * T) * q * (1 - q**T) / (1 - q)
    assert est.gamma_theoretical(g, T) == pytest.approx(ref, rel=1e-13)
    assert est.gamma_theoretical(np.zeros(T), T) == 0.0


def test_gamma_theoretical_equals_garch_gamma_on_model_curve():
    p = garch.SP500
    for T in (5, 20, 100):
        g = p.nu * est.GARCH_DERIV_MEAN * p.rho ** np.arange(T)
        assert est.gamma_theoretical(g, T) == pytest.approx(garch.garch_gamma(p, T), rel=1e-12)


def test_gamma_theoretical_from_simulated_curve():
    p = garch.SP500.replace(nu=0.1)
    r = garch.simulate(p, 300_000, 1, seed=10).returns[0]
    T = 20
    c = est.leverage_corr(r, T)
    # errors across lags are positively correlated; their sum bounds the SE
    assert abs(est.gamma_theoretical(c.values, T) - garch.garch_gamma(p, T)) < 3 * c.stderr.sum() / (2 * T)


# --- smile fits ------------------------------------------------------------

def surface(T, m, v, convention="market"):
    return est.SmileSurface(np.datetime64("2020-01-02"), {T: (m, v)}, convention)


def test_fit_flat_smile():
    m = np.linspace(-0.5, 0.5, 7)
    f = est.fit_smile_skew(surface(30, m, np.full(7, 0.2)), 30)
    assert f.skew == 0.0 or abs(f.skew) < 1e-15
    assert f.atm_vol == pytest.approx(0.2, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.05, 1.0))
def test_fit_linear_smile_exact(slope, atm):
    m = np.linspace(-0.5, 0.5, 9)
    f = est.fit_smile_skew(surface(30, m, atm * (1 + slope * m)), 30)
    assert f.skew == pytest.approx(slope, abs=1e-10)
    assert f.atm_vol == pytest.approx(atm, rel=1e-10)


def test_fit_window_and_errors():
    m = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    with pytest.raises(InsufficientDataError):
        est.fit_smile_skew(surface(30, m, np.full(5, 0.2)), 30)
    with pytest.raises(DomainError):
        est.fit_smile_skew(surface(30, m, np.full(5, 0.2)), 60)
    with pytest.raises(DomainError):
        surface(30, m, np.array([0.2, 0.2, -0.1, 0.2, 0.2]))


def test_fit_recovers_garch_skew():
    T = 40
    model = garch.garch_model(P05, T)
    m = np.linspace(-0.5, 0.5, 11)
    vols = fv.smile_curve(model, T, m) * math.sqrt(252)
    f = est.fit_smile_skew(surface(T, m, vols, "shifted"), T)
    assert f.skew == pytest.approx(fv.skew(model, T), rel=0.02)
    assert f.convention == "shifted"


def test_constant_maturity_interpolation():
    m = np.linspace(-0.5, 0.5, 5)
    s = est.SmileSurface(np.datetime64("2020-01-02"),
                         {20: (m, 0.2 * (1 - 0.1 * m)), 40: (m, 0.3 * (1 - 0.3 * m))})
    cm = est.constant_maturity_series([s], 30, weighting="uniform")
    assert cm.atm_vol[0] == pytest.approx(0.25)
    assert cm.skew[0] == pytest.approx(-0.2)
    assert np.isnan(est.constant_maturity_series([s], 60).atm_vol[0])


# --- regressions -----------------------------------------------------------

def test_fit_implied_leverage_exact():
    r = iid(200, 11)
    atm = np.concatenate([[0.2], 0.2 + np.cumsum(-0.7 * r[1:])])
    reg = est.fit_implied_leverage(atm, r)
    assert reg.slope == pytest.approx(-0.7, rel=1e-12)
    assert reg.stderr < 1e-12
    flat = est.fit_implied_leverage(np.full(200, 0.2), r)
    assert flat.slope == 0.0


def test_fit_implied_leverage_errors():
    r = iid(100, 12)
    with pytest.raises(DomainError):
        est.fit_implied_leverage(np.ones(99), r)
    with pytest.raises(InsufficientDataError):
        est.fit_implied_leverage(np.ones(20), r[:20])
    with pytest.raises(DegenerateModelError):
        est.fit_implied_leverage(np.arange(100.0), np.ones(100))


def test_local_ssr_synthetic_constant_ratio():
    T, M, R, skew = 30, 50, 1.4, -0.05
    gamma = R * skew / math.sqrt(T)
    r = iid(2000, 13)
    atm = 0.01 + np.concatenate([[0.0], np.cumsum(gamma * r[1:])])
    out = est.local_ssr(atm, np.full(2000, skew), r, M, maturity=T)
    assert out.mean == pytest.approx(R * M / (M + 1), rel=1e-12)
    assert out.n_skipped == 0
    assert np.all(np.isnan(out.values[: M + 1]))
    literal = est.local_ssr(atm, np.full(2000, skew), r, M)
    assert literal.mean == pytest.approx(R * M / (M + 1) / math.sqrt(T), rel=1e-12)


def test_local_ssr_noisy_synthetic():
    T, M, R, skew = 20, 50, 1.6, -0.04
    rng = np.random.default_rng(14)
    r = rng.standard_normal(50_000) * 0.01
    gamma = R * skew / math.sqrt(T)
    dsig = gamma * r + rng.standard_normal(r.size) * 1e-5
    atm = 0.01 + np.concatenate([[0.0], np.cumsum(dsig[1:])])
    out = est.local_ssr(atm, np.full(r.size, skew), r, M, maturity=T)
    assert out.mean * (M + 1) / M == pytest.approx(R, rel=0.02)


def test_local_ssr_skips_zero_return_windows():
    r = iid(300, 15)
    r[100:160] = 0.0
    atm = 0.01 + np.concatenate([[0.0], np.cumsum(-0.1 * r[1:])])
    out = est.local_ssr(atm, np.full(300, -0.05), r, 50)
    assert out.n_skipped > 0
    assert np.isnan(out.values[159])
    assert out.n_windows + out.n_skipped == 300 - 51


def test_local_ssr_is_causal():
    r = iid(400, 16)
    atm = 0.01 + np.cumsum(iid(400, 17, 1e-4))
    sk = np.full(400, -0.05)
    a = est.local_ssr(atm, sk, r, 20).values
    r2 = r.copy()
    r2[300:] = 1.0
    b = est.local_ssr(atm, sk, r2, 20).values
    assert np.array_equal(a[:300], b[:300], equal_nan=True)


# --- calibration -----------------------------------------------------------

def test_calibration_zero_leverage():
    p = garch.SP500.replace(nu=0.0)
    r = garch.simulate(p, 200_000, 1, seed=18).returns[0]
    cal = est.calibrate_garch(r, n_bootstrap=50)
    assert cal.params.nu < 3 * cal.stderr["nu"] + 1e-3
    assert cal.params.v0 == pytest.approx(p.v0, rel=0.02)


def test_calibration_moderate_sample():
    p = garch.SP500
    r = garch.simulate(p, 200_000, 1, seed=19).returns[0]
    cal = est.calibrate_garch(r, n_bootstrap=50)
    q = cal.params
    assert abs(q.nu - p.nu) < 4 * cal.stderr["nu"]
    assert abs(q.rho - p.rho) < 4 * cal.stderr["rho"]
    assert cal.objective > 0


def test_calibration_needs_data():
    with pytest.raises(InsufficientDataError):
        est.calibrate_garch(iid(1000))
