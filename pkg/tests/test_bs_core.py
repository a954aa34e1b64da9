import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smile_lab import bs_core
from smile_lab.errors import DomainError, NoArbitrageError

from conftest import bs_oracle, greeks_oracle

spots = st.floats(0.2, 5.0)
variances = st.floats(1e-4, 2.0)
zs = st.floats(-3.0, 3.0)


@settings(max_examples=200, deadline=None)
@given(spots, zs, variances)
def test_price_matches_high_precision_oracle(S, z, v):
    K = S * math.exp(z * math.sqrt(v))
    price = bs_core.bs_call_price(S, K, v)
    ref = float(bs_oracle(S, K, v))
    assert abs(price - ref) <= 1e-13 * S + 1e-12 * ref


@settings(max_examples=200, deadline=None)
@given(spots, st.floats(0.2, 5.0), st.floats(0.0, 4.0))
def test_price_stays_in_no_arbitrage_band(S, K, v):
    p = bs_core.bs_call_price(S, K, v)
    assert max(S - K, 0.0) <= p <= S


def test_zero_variance_gives_intrinsic():
    assert bs_core.bs_call_price(1.2, 1.0, 0.0) == 1.2 - 1.0
    assert bs_core.bs_call_price(0.8, 1.0, 0.0) == 0.0


def test_vectorized_broadcast():
    K = np.array([0.9, 1.0, 1.1])
    p = bs_core.bs_call_price(1.0, K, 0.04)
    assert p.shape == (3,)
    assert np.all(np.diff(p) < 0)


@pytest.mark.parametrize("args", [(-1.0, 1.0, 0.1), (1.0, 0.0, 0.1), (1.0, 1.0, -0.1),
                                  (math.nan, 1.0, 0.1), (1.0, math.inf, 0.1)])
def test_price_domain_errors(args):
    with pytest.raises(DomainError):
        bs_core.bs_call_price(*args)


@settings(max_examples=300, deadline=None)
@given(spots, zs, st.floats(1e-4, 4.0))
def test_implied_variance_round_trip(S, z, v):
    K = S * math.exp(z * math.sqrt(v))
    p = float(bs_core.bs_call_price(S, K, v))
    if not max(S - K, 0.0) < p < S:
        return
    v_hat = bs_core.implied_total_variance(p, S, K)
    assert bs_core.bs_call_price(S, K, v_hat) == pytest.approx(p, rel=1e-9, abs=1e-12)
    assert v_hat == pytest.approx(v, rel=1e-6)


def test_implied_variance_atm_known_value():
    v = bs_core.implied_total_variance(float(bs_core.bs_call_price(1.0, 1.0, 0.04)), 1.0, 1.0)
    assert v == pytest.approx(0.04, rel=1e-12)
    assert bs_core.implied_vol(float(bs_core.bs_call_price(1.0, 1.0, 0.04)), 1.0, 1.0, 4.0) == pytest.approx(0.1)


def test_large_variance_needs_bracket_growth():
    p = float(bs_core.bs_call_price(1.0, 1.0, 30.0))
    assert bs_core.implied_total_variance(p, 1.0, 1.0) == pytest.approx(30.0, rel=1e-8)


@pytest.mark.parametrize("price", [0.0, 0.15, 1.0, 1.5, -0.1])
def test_prices_outside_band_rejected(price):
    # S=1, K=0.8: intrinsic 0.2, upper bound 1
    with pytest.raises(NoArbitrageError):
        bs_core.implied_total_variance(price, 1.0, 0.8)


def test_greeks_closed_form_atm():
    g = bs_core.greeks(1.0, 1.0, 0.04)
    assert g.d_var == pytest.approx(math.exp(-0.005) / (2 * math.sqrt(2 * math.pi) * 0.2), rel=1e-14)
    assert g.d_spot == pytest.approx(bs_core.norm_cdf(0.1), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-2.0, 2.0), st.floats(1e-3, 1.0))
def test_greeks_match_finite_differences(S, z, v):
    K = S * math.exp(z * math.sqrt(v))
    got = bs_core.greeks(S, K, v)
    ref = greeks_oracle(S, K, v)
    for a, b in zip(got, ref):
        assert a == pytest.approx(b, rel=1e-6, abs=1e-10)


def test_greeks_reject_zero_variance():
    with pytest.raises(DomainError):
        bs_core.greeks(1.0, 1.0, 0.0)


def test_inputs_dataclass_validates():
    bs_core.BsInputs(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        bs_core.BsInputs(1.0, -1.0, 0.1)
