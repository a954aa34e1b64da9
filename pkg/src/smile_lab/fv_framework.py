"""Discrete forward-variance models and their smile at first order in vol-of-vol.

The model is specified by

* an initial forward variance curve ``v[j] = E[sigma_j**2]`` for days
  ``j = 1..T_max`` (stored 0-based),
* a coupling kernel ``lam(shock_day, target_day, curve)`` giving the response
  of the forward variance of ``target_day`` to the shock of ``shock_day``,
* a shock function ``f`` with ``E[f(eps)] = 0`` for standard normal ``eps``,
* the vol-of-vol ``nu``.

Day-``i`` returns are ``r_i = sigma_i eps_i`` and the forward variance of day
``j > i`` moves by ``nu * lam(i, j) * f(eps_i)``. All quantities below are
first order in ``nu``; the kernel is evaluated on the initial curve.

Days are 1-based in every public signature, as in the usual notation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import special

from .errors import DegenerateModelError, DomainError, VolOfVolTooLargeError

Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _gauss_hermite(n: int):
    x, w = hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ShockFunction:
    """Shock function ``f`` with its derivative and Gaussian expectations.

    ``conditional_mean(a, s2)`` is ``E[f(a + Y)]`` and ``deriv_mean(s2)`` is
    ``E[f'(Y)]`` for ``Y ~ N(0, s2)``. Both default to Gauss-Hermite
    quadrature with ``n_nodes`` nodes; closed forms can be supplied instead.
    """

    f: Callable
    fprime: Callable
    name: str = "custom"
    n_nodes: int = 64
    closed_conditional_mean: Callable | None = field(default=None, repr=False)
    closed_deriv_mean: Callable | None = field(default=None, repr=False)

    def conditional_mean(self, a, s2):
        if self.closed_conditional_mean is not None:
            return self.closed_conditional_mean(a, s2)
        return self.quadrature_conditional_mean(a, s2)

    def deriv_mean(self, s2):
        if self.closed_deriv_mean is not None:
            return self.closed_deriv_mean(s2)
        return self.quadrature_deriv_mean(s2)

    def quadrature_conditional_mean(self, a, s2, n_nodes: int | None = None):
        x, w = _gauss_hermite(n_nodes or self.n_nodes)
        a = np.asarray(a, dtype=float)[..., None]
        s = np.sqrt(np.asarray(s2, dtype=float))[..., None]
        out = np.sum(w * self.f(a + s * x), axis=-1)
        return out[()] if out.ndim == 0 else out

    def quadrature_deriv_mean(self, s2, n_nodes: int | None = None):
        x, w = _gauss_hermite(n_nodes or self.n_nodes)
        s = np.sqrt(np.asarray(s2, dtype=float))[..., None]
        out = np.sum(w * self.fprime(s * x), axis=-1)
        return out[()] if out.ndim == 0 else out

    def negated(self) -> "ShockFunction":
        """The shock ``-f`` (closed forms are negated too)."""
        ccm, cdm = self.closed_conditional_mean, self.closed_deriv_mean
        return ShockFunction(
            f=lambda x: -self.f(x),
            fprime=lambda x: -self.fprime(x),
            name=f"-{self.name}",
            n_nodes=self.n_nodes,
            closed_conditional_mean=None if ccm is None else (lambda a, s2: -ccm(a, s2)),
            closed_deriv_mean=None if cdm is None else (lambda s2: -cdm(s2)),
        )


def linear_shock() -> ShockFunction:
    """``f(x) = x``: variance responds linearly to the return shock."""
    return ShockFunction(
        f=lambda x: np.asarray(x, dtype=float),
        fprime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        name="linear",
        closed_conditional_mean=lambda a, s2: np.asarray(a, dtype=float) + 0.0 * np.asarray(s2),
        closed_deriv_mean=lambda s2: np.ones_like(np.asarray(s2, dtype=float)),
    )


def _neg_square_cond_mean(a, s2):
    # E[(a+Y)^2 1{a+Y<0}] - 1/2 for Y ~ N(0, s2)
    a = np.asarray(a, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    s = np.sqrt(s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > 0, a / np.where(s > 0, s, 1.0), 0.0)
        val = (a * a + s2) * special.ndtr(-z) - a * s * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    val = np.where(s > 0, val, np.where(a < 0, a * a, 0.0))
    out = val - 0.5
    return out[()] if out.ndim == 0 else out


def asymmetric_square_shock() -> ShockFunction:
    """``f(x) = x**2 1{x<0} - 1/2``, the fully asymmetric GARCH shock.

    ``E[f'(Y)] = E[2Y 1{Y<0}] = -sqrt(2/pi) sqrt(E[Y^2])``.
    """
    return ShockFunction(
        f=lambda x: np.where(np.asarray(x) < 0, np.square(x), 0.0) - 0.5,
        fprime=lambda x: np.where(np.asarray(x) < 0, 2.0 * np.asarray(x), 0.0),
        name="asymmetric_square",
        closed_conditional_mean=_neg_square_cond_mean,
        closed_deriv_mean=lambda s2: -SQRT_2_OVER_PI * np.sqrt(np.asarray(s2, dtype=float)),
    )


@dataclass(frozen=True)
class ForwardVarianceModel:
    initial_curve: np.ndarray
    kernel: Kernel
    nu: float
    shock: ShockFunction

    def __post_init__(self):
        curve = np.array(self.initial_curve, dtype=float).ravel()
        if curve.size < 1:
            raise DomainError("initial curve is empty")
        if not np.all(np.isfinite(curve)) or np.any(curve <= 0):
            raise DomainError("forward variances must be finite and positive")
        if not math.isfinite(self.nu) or self.nu < 0:
            raise DomainError(f"vol-of-vol must be >= 0, got {self.nu}")
        curve.setflags(write=False)
        object.__setattr__(self, "initial_curve", curve)

    @property
    def horizon(self) -> int:
        return self.initial_curve.size

    def with_shock(self, shock: ShockFunction) -> "ForwardVarianceModel":
        return ForwardVarianceModel(self.initial_curve, self.kernel, self.nu, shock)

    def with_nu(self, nu: float) -> "ForwardVarianceModel":
        return ForwardVarianceModel(self.initial_curve, self.kernel, nu, self.shock)


class SmileReport(NamedTuple):
    maturity: int
    atm_vol: float
    skew: float
    skewness_over_6: float
    implied_leverage: float
    ssr: float
    correction_factor: float


class SsrFlatExponential(NamedTuple):
    discrete: float
    approximation: float


def flat_curve(variance: float, horizon: int) -> np.ndarray:
    return np.full(horizon, float(variance))


def stationary_kernel(g: Callable[[np.ndarray], np.ndarray]) -> Kernel:
    """Kernel depending only on the lag: ``lam(i, j) = g(j - i)``."""
    return lambda i, j, curve: g(np.asarray(j) - np.asarray(i))


def matrix_kernel(lam: np.ndarray) -> Kernel:
    """Kernel read from a matrix, ``lam(i, j) = lam[i-1, j-1]``."""
    lam = np.asarray(lam, dtype=float)
    return lambda i, j, curve: lam[np.asarray(i) - 1, np.asarray(j) - 1]


def exponential_leverage_model(
    amplitude: float, tau: float, variance: float, horizon: int,
    nu: float = 1.0, shock: ShockFunction | None = None,
) -> ForwardVarianceModel:
    """Flat, time-translation invariant model with ``g_L(l) = -A exp(-l/tau)``.

    The kernel is scaled so that ``E[r_i r_{i+l}^2] = g_L(l) sigma^3``.
    """
    shock = shock or linear_shock()
    d1 = float(shock.deriv_mean(1.0))
    if nu == 0 or d1 == 0:
        raise DegenerateModelError("leverage kernel needs nu != 0 and E[f'] != 0")
    scale = variance / (nu * d1)
    g = lambda lag: -amplitude * np.exp(-np.asarray(lag, dtype=float) / tau) * scale
    return ForwardVarianceModel(flat_curve(variance, horizon), stationary_kernel(g), nu, shock)


# ---------------------------------------------------------------------------
# internals

def _check_T(model: ForwardVarianceModel, T: int, extra: int = 0) -> int:
    if int(T) != T or T < 1:
        raise DomainError(f"maturity must be a positive integer, got {T}")
    T = int(T)
    if T + extra > model.horizon:
        need = T + extra
        raise DomainError(f"curve defined up to day {model.horizon}, day {need} needed")
    return T


def _kernel_pairs(model: ForwardVarianceModel, T: int):
    """Shock days ``j``, target days ``i`` (1 <= j < i <= T) and ``lam(j, i)``."""
    j, i = np.triu_indices(T, 1)
    j, i = j + 1, i + 1
    lam = np.asarray(model.kernel(j, i, model.initial_curve), dtype=float)
    lam = np.broadcast_to(lam, j.shape)
    return j, i, lam


def _response_weights(model: ForwardVarianceModel, T: int) -> np.ndarray:
    """``W[j-1] = sum_{i=j+1}^T lam(j, i)``: total response of days <= T to shock j."""
    j, _, lam = _kernel_pairs(model, T)
    return np.bincount(j - 1, weights=lam, minlength=T)


def _first_day_response(model: ForwardVarianceModel, T: int) -> float:
    j = np.arange(2, T + 2)
    lam = np.asarray(model.kernel(np.ones_like(j), j, model.initial_curve), dtype=float)
    return float(np.sum(np.broadcast_to(lam, j.shape)))


# ---------------------------------------------------------------------------
# operations

def total_variance(model: ForwardVarianceModel, T: int) -> float:
    T = _check_T(model, T)
    return float(np.sum(model.initial_curve[:T]))


def atm_vol(model: ForwardVarianceModel, T: int) -> float:
    """``sqrt(V_T / T)``: the ATM vol anchor, per unit (daily) time."""
    T = _check_T(model, T)
    return math.sqrt(total_variance(model, T) / T)


def shifted_moneyness(log_moneyness, total_var: float):
    """``(ln(K/S) + V_T/2) / sqrt(V_T)``; zero at the forward-shifted ATM point."""
    return (np.asarray(log_moneyness, dtype=float) + 0.5 * total_var) / math.sqrt(total_var)


def log_moneyness_from_shifted(moneyness, total_var: float):
    return np.asarray(moneyness, dtype=float) * math.sqrt(total_var) - 0.5 * total_var


def shifted_from_market_moneyness(moneyness, total_var: float):
    """Market moneyness ``ln(K/S)/sqrt(V_T)`` to the shifted convention."""
    return np.asarray(moneyness, dtype=float) + 0.5 * math.sqrt(total_var)


def market_from_shifted_moneyness(moneyness, total_var: float):
    return np.asarray(moneyness, dtype=float) - 0.5 * math.sqrt(total_var)


def smile_curve(model: ForwardVarianceModel, T: int, moneyness) -> np.ndarray:
    """Implied vols at first order in ``nu`` on a grid of shifted moneyness.

    ``moneyness`` is ``(ln(K/S) + V_T/2) / sqrt(V_T)``. The returned vols are
    per unit (daily) time.

    The first-order correction at zero moneyness is
    ``nu/(2 sqrt(V_T T)) sum lam(j,i) E[f(Y_j)]``, which vanishes only when
    ``E[f(Y)] = 0`` for every variance ``1 - v_j/V_T`` (linear or odd ``f``).
    For the asymmetric-square shock it is ``-nu/(4 sqrt(V_T T)) sum lam v_j/V_T``.
    """
    T = _check_T(model, T)
    m = np.atleast_1d(np.asarray(moneyness, dtype=float))
    v = model.initial_curve[:T]
    V = float(np.sum(v))
    base = math.sqrt(V / T)
    if model.nu == 0 or T < 2:
        return np.full(m.shape, base)
    W = _response_weights(model, T)
    a = np.sqrt(v / V)[None, :] * m[:, None]
    cm = model.shock.conditional_mean(a, np.broadcast_to(1.0 - v / V, a.shape))
    vols = base + model.nu / (2.0 * math.sqrt(V * T)) * (cm @ W)
    if np.any(vols <= 0):
        raise VolOfVolTooLargeError(
            f"first-order smile turns negative at T={T}; nu={model.nu} is too large"
        )
    return vols


def _no_skew_at_one(T: int, what: str) -> bool:
    if T == 1:
        warnings.warn(f"{what} is undefined for a one-day maturity; returning 0", stacklevel=3)
        return True
    return False


def skew(model: ForwardVarianceModel, T: int) -> float:
    """Relative slope of the smile in shifted moneyness at the money."""
    T = _check_T(model, T)
    if _no_skew_at_one(T, "skew"):
        return 0.0
    v = model.initial_curve[:T]
    V = float(np.sum(v))
    W = _response_weights(model, T)
    dm = np.asarray(model.shock.deriv_mean(1.0 - v / V), dtype=float)
    return float(model.nu / (2.0 * V**1.5) * np.sum(np.sqrt(v) * W * dm))


def skewness_over_6(model: ForwardVarianceModel, T: int) -> float:
    """One sixth of the skewness of the ``T``-day log return."""
    T = _check_T(model, T)
    if _no_skew_at_one(T, "skewness"):
        return 0.0
    v = model.initial_curve[:T]
    V = float(np.sum(v))
    W = _response_weights(model, T)
    d1 = float(model.shock.deriv_mean(1.0))
    return float(model.nu / (2.0 * V**1.5) * np.sum(np.sqrt(v) * W) * d1)


def implied_leverage(model: ForwardVarianceModel, T: int) -> float:
    """Regression slope of the day-1 ATM vol change on the day-1 return.

    Needs the kernel up to day ``T + 1``.
    """
    T = _check_T(model, T, extra=1)
    v1 = float(model.initial_curve[0])
    V = total_variance(model, T)
    d1 = float(model.shock.deriv_mean(1.0))
    return model.nu * d1 / (2.0 * math.sqrt(T * v1 * V)) * _first_day_response(model, T)


def leverage_from_lambda(model: ForwardVarianceModel, i: int, lag: int) -> float:
    """``E[r_i r_{i+lag}^2] = nu sqrt(v_i) lam(i, i+lag) E[f'(eps)]``."""
    if lag < 1:
        raise DomainError(f"lag must be >= 1, got {lag}")
    if i < 1 or i + lag > model.horizon:
        raise DomainError(f"days {i}..{i + lag} outside the curve (1..{model.horizon})")
    lam = float(np.asarray(model.kernel(np.array([i]), np.array([i + lag]), model.initial_curve)).ravel()[0])
    d1 = float(model.shock.deriv_mean(1.0))
    return model.nu * math.sqrt(model.initial_curve[i - 1]) * lam * d1


def gamma_from_leverage(leverage, sigma1: float, total_var: float, T: int) -> float:
    """Implied leverage from ``E[r_1 r_j^2]``, ``j = 2..T+1``.

    Model free: ``sum E[r_1 r_j^2] / (2 sqrt(T sigma1^4 V_T))``.
    """
    lev = np.asarray(leverage, dtype=float).ravel()
    if T < 1:
        raise DomainError(f"maturity must be >= 1, got {T}")
    if lev.size != T:
        raise DomainError(f"expected {T} leverage values, got {lev.size}")
    if not sigma1 > 0:
        raise DomainError(f"sigma1 must be positive, got {sigma1}")
    if not total_var > 0:
        raise DomainError(f"total variance must be positive, got {total_var}")
    return float(np.sum(lev) / (2.0 * math.sqrt(T * sigma1**4 * total_var)))


def ssr_linear(model: ForwardVarianceModel, T: int) -> float:
    """Skew-stickiness ratio of the linear model with the same curve and kernel."""
    T = _check_T(model, T, extra=1)
    if T < 2:
        raise DegenerateModelError("the skew-stickiness ratio needs T >= 2")
    v = model.initial_curve[:T]
    V = float(np.sum(v))
    denom = float(np.sum(np.sqrt(v) * _response_weights(model, T)))
    if denom == 0:
        raise DegenerateModelError(f"kernel gives no skew at T={T}")
    return V / math.sqrt(v[0]) * _first_day_response(model, T) / denom


def ssr(model: ForwardVarianceModel, T: int) -> float:
    """Skew-stickiness ratio ``gamma_T sqrt(T) / Skew_T``."""
    T = _check_T(model, T, extra=1)
    if T < 2:
        raise DegenerateModelError("the skew-stickiness ratio needs T >= 2")
    sk = skew(model, T)
    if sk == 0:
        raise DegenerateModelError(f"zero skew at T={T}")
    return implied_leverage(model, T) * math.sqrt(T) / sk


def correction_factor(model: ForwardVarianceModel, T: int) -> float:
    """``(S_T/6) / Skew_T``; equals 1 for linear shocks."""
    sk = skew(model, T)
    if sk == 0:
        raise DegenerateModelError(f"zero skew at T={T}")
    return skewness_over_6(model, T) / sk


def smile_report(model: ForwardVarianceModel, T: int) -> SmileReport:
    sk = skew(model, T)
    gamma = implied_leverage(model, T)
    s6 = skewness_over_6(model, T)
    if sk == 0:
        raise DegenerateModelError(f"zero skew at T={T}")
    return SmileReport(
        maturity=int(T),
        atm_vol=atm_vol(model, T),
        skew=sk,
        skewness_over_6=s6,
        implied_leverage=gamma,
        ssr=gamma * math.sqrt(T) / sk,
        correction_factor=s6 / sk,
    )


def ssr_flat_exponential(amplitude: float, tau: float, T: int) -> SsrFlatExponential:
    """SSR for a flat curve with ``g_L(l) = -A exp(-l/tau)``.

    Returns the discrete ratio ``sum g_L / sum (1 - l/T) g_L`` and the
    continuous approximation ``T(1-e^{-T/tau}) / (T - tau(1-e^{-T/tau}))``.
    Both are independent of ``A``.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if int(T) != T or T < 2:
        raise DomainError(f"T must be an integer >= 2, got {T}")
    if not amplitude > 0:
        raise DomainError(f"amplitude must be positive, got {amplitude}")
    lags = np.arange(1, int(T) + 1, dtype=float)
    g = -amplitude * np.exp(-lags / tau)
    discrete = float(np.sum(g) / np.sum((1.0 - lags / T) * g))
    one_minus = -math.expm1(-T / tau)
    approx = T * one_minus / (T - tau * one_minus)
    return SsrFlatExponential(discrete, approx)


def ssr_limits(tau: float, T: float) -> tuple[float, float]:
    """Asymptotes of :func:`ssr_flat_exponential`'s approximation.

    Returns ``(2 - T/(3 tau), 1 + tau/T)``: the leading terms for
    ``T << tau`` and ``T >> tau`` respectively.
    """
    if not (tau > 0 and T > 0):
        raise DomainError(f"tau and T must be positive (tau={tau}, T={T})")
    return 2.0 - T / (3.0 * tau), 1.0 + tau / T
