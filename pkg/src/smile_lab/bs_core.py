"""Black-Scholes call pricing in total-variance form.

Rates and dividends are zero; ``S`` is the forward. Total variance ``v`` is
``sigma**2 * T`` in whatever time unit the caller uses (days throughout this
package).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError, NoArbitrageError

SQRT_2PI = math.sqrt(2.0 * math.pi)

# bracket for the implied-variance solver
V_LOW = 1e-12
V_HIGH = 16.0
MAX_ITER = 200


def norm_cdf(x):
    """Standard normal CDF (``scipy.special.ndtr``, erfc based)."""
    return special.ndtr(x)


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / SQRT_2PI


@dataclass(frozen=True)
class BsInputs:
    spot: float
    strike: float
    total_variance: float

    def __post_init__(self):
        _check_scalar(self.spot, self.strike, self.total_variance)


class Greeks(NamedTuple):
    """Derivatives of the call price with respect to spot and total variance."""

    d_spot: float
    d_var: float
    d_var2: float
    d_spot_var: float


def _check_scalar(S, K, v):
    for name, x in (("spot", S), ("strike", K), ("total variance", v)):
        if not math.isfinite(x):
            raise DomainError(f"{name} must be finite, got {x!r}")
    if S <= 0 or K <= 0:
        raise DomainError(f"spot and strike must be positive (S={S}, K={K})")
    if v < 0:
        raise DomainError(f"total variance must be non-negative, got {v}")


def _check_arrays(S, K, v):
    S, K, v = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (S, K, v)))
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(K)) and np.all(np.isfinite(v))):
        raise DomainError("inputs must be finite")
    if np.any(S <= 0) or np.any(K <= 0):
        raise DomainError("spot and strike must be positive")
    if np.any(v < 0):
        raise DomainError("total variance must be non-negative")
    return S, K, v


def bs_call_price(S, K, v):
    """Call price ``S N(d+) - K N(d-)``; exact intrinsic value when ``v == 0``.

    Accepts scalars or broadcastable arrays. The result is clipped into the
    no-arbitrage band ``[(S-K)+, S]`` to absorb rounding.
    """
    S, K, v = _check_arrays(S, K, v)
    intrinsic = np.maximum(S - K, 0.0)
    pos = v > 0
    sv = np.sqrt(np.where(pos, v, 1.0))
    d1 = (np.log(S / K) + 0.5 * v) / sv
    price = S * norm_cdf(d1) - K * norm_cdf(d1 - sv)
    price = np.where(pos, np.clip(price, intrinsic, S), intrinsic)
    return price[()] if price.ndim == 0 else price


def _vega(S, K, v):
    sv = math.sqrt(v)
    d1 = (math.log(S / K) + 0.5 * v) / sv
    return S * math.exp(-0.5 * d1 * d1) / (2.0 * SQRT_2PI * sv)


def implied_total_variance(price: float, S: float, K: float, tol: float = 1e-10) -> float:
    """Invert :func:`bs_call_price` for the total variance.

    Safeguarded Newton: each Newton step on ``v`` that leaves the current
    bracket, or meets a vanishing vega, is replaced by bisection.

    Raises
    ------
    NoArbitrageError
        If ``price`` is outside ``((S-K)+, S)``.
    ConvergenceError
        If the price residual is still above ``tol`` after ``MAX_ITER`` steps.
    """
    _check_scalar(S, K, 0.0)
    if not math.isfinite(price):
        raise DomainError(f"price must be finite, got {price!r}")
    intrinsic = max(S - K, 0.0)
    if not intrinsic < price < S:
        raise NoArbitrageError(
            f"price {price!r} outside the no-arbitrage band ({intrinsic}, {S})"
        )

    lo, hi = 0.0, V_HIGH
    while bs_call_price(S, K, hi) < price:
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError(f"price {price!r} too close to the spot {S}")

    # Brenner-Subrahmanyam style starting point, kept inside the bracket
    v = min(max(2.0 * math.pi * ((price - intrinsic) / S) ** 2, V_LOW), 0.5 * hi)
    for _ in range(MAX_ITER):
        diff = float(bs_call_price(S, K, v)) - price
        if diff > 0:
            hi = v
        else:
            lo = v
        if diff == 0.0:
            return v
        vega = _vega(S, K, v)
        step = diff / vega if vega > 0 else math.inf
        v_new = v - step
        if not lo < v_new < hi:
            v_new = 0.5 * (lo + hi)
        if abs(v_new - v) <= 1e-15 * max(v, V_LOW) or hi - lo <= 1e-16 * hi:
            v = v_new
            break
        v = v_new
    else:
        v = 0.5 * (lo + hi)

    resid = abs(float(bs_call_price(S, K, v)) - price)
    if resid > tol:
        raise ConvergenceError(
            f"implied variance did not converge (price={price!r}, S={S}, K={K}, "
            f"residual={resid:.3g})"
        )
    return v


def implied_vol(price: float, S: float, K: float, T: float) -> float:
    """Implied volatility per unit time for maturity ``T``."""
    return math.sqrt(implied_total_variance(price, S, K) / T)


def greeks(S: float, K: float, v: float) -> Greeks:
    """Closed-form spot and total-variance derivatives of the call price.

    ``v`` must be strictly positive: at ``v == 0`` the derivatives are
    singular at the money.
    """
    _check_scalar(S, K, v)
    if v == 0:
        raise DomainError("greeks are singular at zero total variance")
    L = math.log(S / K)
    sv = math.sqrt(v)
    d1 = (L + 0.5 * v) / sv
    gauss = math.exp(-((L + 0.5 * v) ** 2) / (2.0 * v)) / SQRT_2PI
    d_spot = float(norm_cdf(d1))
    d_var = S * gauss / (2.0 * sv)
    d_var2 = -S * gauss / (4.0 * v**1.5) + S * gauss * (L * L - v * v / 4.0) / (4.0 * v**2.5)
    d_spot_var = (1.0 / (4.0 * sv) - L / (2.0 * v**1.5)) * gauss
    return Greeks(d_spot, d_var, d_var2, d_spot_var)
