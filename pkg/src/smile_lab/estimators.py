"""Estimators on historical returns and implied-vol snapshots.

Every estimator is a pure function of immutable input arrays. Time-series
outputs at index ``t`` depend on data up to ``t`` only; the low-moment
skewness aggregates forward-looking windows and is therefore in-sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize, signal, stats

from .errors import (
    ConvergenceError,
    DegenerateModelError,
    DomainError,
    InsufficientDataError,
)
from .garch import GarchParams

# E|eps|^3 and E[f'(eps)] for the asymmetric-square shock, eps ~ N(0, 1)
ABS_THIRD_MOMENT = 2.0 * math.sqrt(2.0 / math.pi)
GARCH_DERIV_MEAN = -math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# data containers


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log returns, optionally dated and with the price levels they came from.

    ``returns[k]`` is ``ln(P_k / P_{k-1})`` when built from prices; dates, if
    given, are aligned with ``returns``.
    """

    returns: np.ndarray
    dates: np.ndarray | None = None
    prices: np.ndarray | None = None

    def __post_init__(self):
        r = np.array(self.returns, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise InsufficientDataError(f"need at least 2 returns, got shape {r.shape}")
        bad = np.flatnonzero(~np.isfinite(r))
        if bad.size:
            raise DomainError(f"non-finite returns at positions {bad[:10].tolist()}")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        if self.dates is not None:
            d = np.array(self.dates, dtype="datetime64[D]")
            if d.shape != r.shape:
                raise DomainError(f"{d.size} dates for {r.size} returns")
            back = np.flatnonzero(np.diff(d) <= np.timedelta64(0, "D"))
            if back.size:
                raise DomainError(f"dates not strictly increasing at {[str(d[k + 1]) for k in back[:10]]}")
            d.setflags(write=False)
            object.__setattr__(self, "dates", d)
        if self.prices is not None:
            p = np.array(self.prices, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "prices", p)

    @classmethod
    def from_prices(cls, prices, dates=None) -> "ReturnSeries":
        p = np.asarray(prices, dtype=float)
        if p.ndim != 1 or p.size < 3:
            raise InsufficientDataError("need at least 3 prices")
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            raise DomainError("prices must be finite and positive")
        d = None if dates is None else np.asarray(dates, dtype="datetime64[D]")[1:]
        return cls(np.diff(np.log(p)), d, p)

    def __len__(self) -> int:
        return self.returns.size

    def flipped(self) -> "ReturnSeries":
        """The same series with every return negated."""
        return ReturnSeries(-self.returns, self.dates)

    @property
    def daily_skewness(self) -> float:
        return daily_skewness(self.returns)


@dataclass(frozen=True)
class SmileSurface:
    """One implied-vol snapshot.

    ``quotes`` maps maturity in days to ``(moneyness, implied_vol)`` arrays.
    Vols are annualized; moneyness is ``ln(K/S)/(sigma_ATM sqrt(T))`` unless
    ``convention == "shifted"``.
    """

    date: np.datetime64 | None
    quotes: dict = field(default_factory=dict)
    convention: str = "market"
    days_per_year: int = 252

    def __post_init__(self):
        if self.convention not in ("market", "shifted"):
            raise DomainError(f"unknown moneyness convention {self.convention!r}")
        clean = {}
        for T in sorted(self.quotes):
            m, v = (np.asarray(a, dtype=float) for a in self.quotes[T])
            if m.shape != v.shape or m.ndim != 1:
                raise DomainError(f"moneyness and vols differ in shape at T={T}")
            if int(T) != T or T < 1:
                raise DomainError(f"maturity must be a positive integer number of days, got {T}")
            if np.any(~np.isfinite(v)) or np.any(v <= 0):
                raise DomainError(f"non-positive implied vol at T={T}")
            order = np.argsort(m, kind="stable")
            clean[int(T)] = (m[order], v[order])
        object.__setattr__(self, "quotes", clean)

    @property
    def maturities(self) -> list[int]:
        return list(self.quotes)

    def atm_vol(self, T: int, window: float = 0.5) -> float:
        return fit_smile_skew(self, T, window).atm_vol


@dataclass(frozen=True)
class EstimatorConfig:
    ema_vol_span: int = 20
    detrend_span: int = 1000
    ssr_window: int = 50
    skew_fit_window: float = 0.5
    days_per_year: int = 252

    def __post_init__(self):
        for name in ("ema_vol_span", "detrend_span", "days_per_year"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.ssr_window < 2:
            raise DomainError("ssr_window must be >= 2")
        if not self.skew_fit_window > 0:
            raise DomainError("skew_fit_window must be positive")


def _as_returns(series) -> np.ndarray:
    if isinstance(series, ReturnSeries):
        return series.returns
    r = np.asarray(series, dtype=float)
    if r.ndim != 1:
        raise DomainError("returns must be one-dimensional")
    if np.any(~np.isfinite(r)):
        raise DomainError("returns must be finite")
    return r


# ---------------------------------------------------------------------------
# EMA filters


def causal_ema(x, span: int) -> np.ndarray:
    """Causal EMA with ``alpha = 1/span``.

    ``out[i]`` uses ``x[:i]`` only. It is seeded at ``i = span`` with the mean
    of the first ``span`` values and is NaN before that.
    """
    x = np.asarray(x, dtype=float)
    if span < 1:
        raise DomainError(f"span must be >= 1, got {span}")
    if x.size < span:
        raise InsufficientDataError(f"series of length {x.size} shorter than span {span}")
    a = 1.0 / span
    out = np.full(x.size, np.nan)
    seed = float(np.mean(x[:span]))
    if x.size == span:
        return out
    out[span] = seed
    if x.size > span + 1:
        y, _ = signal.lfilter([a], [1.0, a - 1.0], x[span:-1], zi=[(1.0 - a) * seed])
        out[span + 1:] = y
    return out


def ema_vol(series, span: int = 20) -> np.ndarray:
    """Causal EMA vol: ``s_i^2 = (1-a) s_{i-1}^2 + a r_{i-1}^2``, ``a = 1/span``.

    Seeded with the mean square of the first ``span`` returns; NaN before
    index ``span``.
    """
    r = _as_returns(series)
    return np.sqrt(causal_ema(r * r, span))


# ---------------------------------------------------------------------------
# leverage correlation


class LeverageCurve(NamedTuple):
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    normalization: str
    n_obs: int


def _jackknife(totals, blocks, stat):
    """Delete-one-block jackknife SE of ``stat(*sums)``.

    ``totals`` is a tuple of full-sample sums, ``blocks`` a tuple of matching
    per-block sums with the block index on axis 0.
    """
    B = blocks[0].shape[0]
    reps = np.array([stat(*(t - b[k] for t, b in zip(totals, blocks))) for k in range(B)])
    return np.sqrt((B - 1) / B * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))


def _lag_block_sums(r, weights, lo, hi, max_lag, n_blocks):
    """Per-block sums of ``weights_i r_{i+l}^2`` for ``i in [lo, hi)``, ``l = 1..max_lag``."""
    edges = np.linspace(lo, hi, n_blocks + 1).astype(int)
    starts = edges[:-1] - lo
    r2 = r * r
    w = weights[lo:hi]
    out = np.empty((n_blocks, max_lag))
    for ell in range(1, max_lag + 1):
        out[:, ell - 1] = np.add.reduceat(w * r2[lo + ell:hi + ell], starts)
    return out, starts


NORMALIZATIONS = ("ema_weighted", "ema", "abs_moment", "variance")


def leverage_blocks(series, max_lag: int, span: int = 20, normalization: str = "ema_weighted",
                    n_blocks: int = 100):
    """Block sums behind :func:`leverage_corr` (also used by the calibration bootstrap).

    Returns ``(numerator, denominator, count)``: arrays with the block index on
    axis 0, such that ``g = sum(num) / sum(den)``.
    """
    r = _as_returns(series)
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"normalization must be one of {NORMALIZATIONS}")
    if max_lag < 1:
        raise DomainError(f"max_lag must be >= 1, got {max_lag}")
    n = r.size
    uses_ema = normalization.startswith("ema")
    lo = span if uses_ema else 0
    hi = n - max_lag
    if hi - lo < max(2 * n_blocks, 2):
        raise InsufficientDataError(
            f"{n} returns is not enough for max_lag={max_lag} with span={span}"
        )
    if uses_ema:
        s = ema_vol(r, span)
        inv3 = np.zeros(n)
        with np.errstate(divide="ignore"):
            inv3[lo:] = 1.0 / s[lo:] ** 3
        if not np.all(np.isfinite(inv3[lo:hi])):
            raise DegenerateModelError("EMA vol vanishes; use another normalization")
        weights = r * inv3
    else:
        weights = r
    num, starts = _lag_block_sums(r, weights, lo, hi, max_lag, n_blocks)
    count = np.diff(np.append(starts, hi - lo)).astype(float)
    if normalization == "ema":
        den = count[:, None] * np.ones(max_lag)
    elif normalization == "ema_weighted":
        den = np.add.reduceat(np.abs(r[lo:hi]) ** 3 * inv3[lo:hi], starts)[:, None] / ABS_THIRD_MOMENT * np.ones(max_lag)
    elif normalization == "abs_moment":
        den = np.add.reduceat(np.abs(r[lo:hi]) ** 3, starts)[:, None] / ABS_THIRD_MOMENT * np.ones(max_lag)
    else:
        # (mean r^2)^{3/2} is not a sum; handled by the caller through count
        den = np.add.reduceat(r[lo:hi] ** 2, starts)[:, None] * np.ones(max_lag)
    return num, den, count


def _ratio_stat(normalization):
    if normalization == "variance":
        return lambda num, den, cnt: (num / cnt) / (den / cnt) ** 1.5
    return lambda num, den, cnt: num / den


def leverage_corr(series, max_lag: int, span: int = 20, normalization: str = "ema_weighted",
                  n_blocks: int = 100) -> LeverageCurve:
    """Leverage correlation ``g(l) ~ E[r_i r_{i+l}^2] / sigma^3`` for ``l = 1..max_lag``.

    Parameters
    ----------
    normalization
        ``"ema"``: time average of ``r_i r_{i+l}^2 / s_i^3`` with ``s_i`` the
        causal EMA vol of span ``span``. ``"ema_weighted"`` (default): the
        same average divided by the average of ``|r_i|^3 / s_i^3 / E|eps|^3``.
        Because ``s_i`` is known at ``i - 1``, the ratio is consistent for
        GARCH-type returns ``sigma_i eps_i`` whatever the tracking error of
        ``s_i``, while the plain ``"ema"`` average is biased by it.
        ``"abs_moment"``: ratio of
        ``mean(r_i r_{i+l}^2)`` to ``mean|r|^3 / E|eps|^3``, which is unbiased
        for GARCH-type returns ``sigma_i eps_i`` whose leverage term scales
        with ``sigma_i^3``. ``"variance"``: ``mean(r_i r_{i+l}^2) / mean(r^2)^{3/2}``.
    n_blocks
        Contiguous blocks for the delete-one-block jackknife standard errors.

    Notes
    -----
    All lags share the index range of ``i``, so the curve is a smooth
    functional of one sample.
    """
    num, den, cnt = leverage_blocks(series, max_lag, span, normalization, n_blocks)
    stat = _ratio_stat(normalization)
    cnt2 = cnt[:, None] * np.ones(max_lag)
    tot = (num.sum(0), den.sum(0), cnt2.sum(0))
    values = stat(*tot)
    se = _jackknife(tot, (num, den, cnt2), stat)
    return LeverageCurve(np.arange(1, max_lag + 1), values, se, normalization, int(cnt.sum()))


# ---------------------------------------------------------------------------
# skewness


def daily_skewness(series) -> float:
    """Sample skewness of daily returns."""
    return float(stats.skew(_as_returns(series)))


def _check_curve(g, T):
    g = np.asarray(g, dtype=float).ravel()
    if int(T) != T or T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    if g.size < T:
        raise DomainError(f"leverage curve has {g.size} lags, need {T}")
    return g[: int(T)], int(T)


def skewness_from_leverage(g, zeta1: float, T: int) -> float:
    """Skewness of ``T``-day returns: ``zeta1/sqrt(T) + 3/sqrt(T) sum (1 - l/T) g(l)``."""
    g, T = _check_curve(g, T)
    lags = np.arange(1, T + 1)
    return float(zeta1 / math.sqrt(T) + 3.0 / math.sqrt(T) * np.sum((1.0 - lags / T) * g))


def gamma_theoretical(g, T: int) -> float:
    """Implied leverage from the leverage curve on a flat curve: ``sum g(l) / (2T)``."""
    g, T = _check_curve(g, T)
    return float(np.sum(g) / (2.0 * T))


class LowMomentSkewness(NamedTuple):
    beta: float
    stderr: float
    prob_positive: float
    n_windows: int
    overlapping: bool


def beta_from_probability(p):
    """``sqrt(pi/2) (1 - 2p)``."""
    return math.sqrt(math.pi / 2) * (1.0 - 2.0 * np.asarray(p, dtype=float))


def _newey_west_var_of_mean(x, lags):
    x = x - x.mean()
    n = x.size
    s = x @ x / n
    for k in range(1, min(lags, n - 1) + 1):
        s += 2.0 * (1.0 - k / (lags + 1)) * (x[k:] @ x[:-k]) / n
    return max(s, 0.0) / n


def low_moment_skewness(series, T: int, detrend_span: int = 1000,
                        nw_lags: int | None = None) -> LowMomentSkewness:
    """Low-moment skewness ``sqrt(pi/2) (1 - 2 P(rt_T > 0))`` of ``T``-day returns.

    ``rt_T`` is the sum of ``T`` daily returns starting at day ``t`` minus
    ``T`` times the causal EMA drift at ``t`` (span ``detrend_span``).
    Windows roll daily and overlap; the standard error is Newey-West with
    Bartlett weights up to ``nw_lags`` (default ``2T``). Zero window returns
    count as half positive.
    """
    r = _as_returns(series)
    if int(T) != T or T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    T = int(T)
    n = r.size
    n_win = n - T + 1 - detrend_span
    if n_win < 10 * T:
        raise InsufficientDataError(f"{n} returns give only {max(n_win, 0)} windows for T={T}")
    mu = causal_ema(r, detrend_span)
    c = np.concatenate([[0.0], np.cumsum(r)])
    t = np.arange(detrend_span, n - T + 1)
    agg = c[t + T] - c[t] - T * mu[t]
    ind = (agg > 0) + 0.5 * (agg == 0)
    p = float(ind.mean())
    var = _newey_west_var_of_mean(ind.astype(float), 2 * T if nw_lags is None else nw_lags)
    return LowMomentSkewness(
        float(beta_from_probability(p)), 2.0 * math.sqrt(math.pi / 2) * math.sqrt(var), p, int(t.size), True
    )


# ---------------------------------------------------------------------------
# smile snapshots


class SkewFit(NamedTuple):
    atm_vol: float
    skew: float
    residual: float
    count: int
    convention: str


def fit_skew(moneyness, vols, window: float = 0.5, weights=None, convention: str = "market") -> SkewFit:
    """Weighted least squares ``vol = atm (1 + skew m)`` over ``|m| <= window``.

    ``residual`` is the weighted RMS residual.
    """
    m = np.asarray(moneyness, dtype=float)
    v = np.asarray(vols, dtype=float)
    w = np.ones_like(m) if weights is None else np.asarray(weights, dtype=float)
    keep = np.abs(m) <= window
    m, v, w = m[keep], v[keep], w[keep]
    if m.size < 3:
        raise InsufficientDataError(f"{m.size} quotes inside |m| <= {window}; need 3")
    if np.ptp(m) == 0:
        raise DegenerateModelError("all quotes at the same moneyness")
    sw = np.sqrt(w)
    X = np.column_stack([np.ones_like(m), m]) * sw[:, None]
    (a, b), *_ = np.linalg.lstsq(X, v * sw, rcond=None)
    if a <= 0:
        raise DegenerateModelError(f"fitted ATM vol {a} is not positive")
    res = v - (a + b * m)
    rms = math.sqrt(float(np.sum(w * res**2) / np.sum(w)))
    return SkewFit(float(a), float(b / a), rms, int(m.size), convention)


def fit_smile_skew(surface: SmileSurface, T: int, window: float = 0.5,
                   weighting: str = "vega") -> SkewFit:
    """ATM vol and relative slope of one maturity of a snapshot.

    ``weighting="vega"`` weights each quote by the Black-Scholes vega density
    ``phi(d1)``; ``"uniform"`` gives ordinary least squares.
    """
    if T not in surface.quotes:
        raise DomainError(f"maturity {T} not in snapshot (have {surface.maturities})")
    m, v = surface.quotes[T]
    if weighting == "vega":
        s = v * math.sqrt(T / surface.days_per_year)
        w = np.exp(-0.5 * (-m + 0.5 * s) ** 2)
    elif weighting == "uniform":
        w = None
    else:
        raise DomainError(f"unknown weighting {weighting!r}")
    return fit_skew(m, v, window, w, surface.convention)


# ---------------------------------------------------------------------------
# regressions on ATM vol changes


class Regression(NamedTuple):
    slope: float
    stderr: float
    intercept: float
    n_obs: int


def _aligned(atm, returns, dates=None):
    a = np.asarray(atm, dtype=float)
    r = np.asarray(returns, dtype=float)
    if a.shape != r.shape or a.ndim != 1:
        raise DomainError(f"misaligned series: {a.shape} ATM vols vs {r.shape} returns")
    if dates is not None:
        d = np.asarray(dates, dtype="datetime64[D]")
        if d.shape != a.shape:
            raise DomainError("dates do not match the series length")
        if np.any(np.diff(d) <= np.timedelta64(0, "D")):
            raise DomainError("dates must be strictly increasing")
    return a, r


def fit_implied_leverage(atm, returns, dates=None) -> Regression:
    """OLS slope of ``atm[i] - atm[i-1]`` on ``returns[i]``.

    ``atm[i]`` is the constant-maturity ATM vol at the close of day ``i`` and
    ``returns[i]`` the return of that day. Pairs with a NaN are dropped.
    """
    a, r = _aligned(atm, returns, dates)
    dv = np.diff(a)
    x = r[1:]
    ok = np.isfinite(dv) & np.isfinite(x)
    dv, x = dv[ok], x[ok]
    n = dv.size
    if n < 30:
        raise InsufficientDataError(f"{n} usable pairs; need at least 30")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise DegenerateModelError("returns have zero variance")
    slope = float(xc @ (dv - dv.mean())) / sxx
    intercept = float(dv.mean() - slope * x.mean())
    resid = dv - intercept - slope * x
    se = math.sqrt(float(resid @ resid) / (n - 2) / sxx)
    return Regression(slope, se, intercept, n)


class LocalSsr(NamedTuple):
    values: np.ndarray
    mean: float
    n_windows: int
    n_skipped: int


def local_ssr(atm, skew, returns, window: int = 50, maturity: int | None = None) -> LocalSsr:
    """Rolling skew-stickiness ratio.

    For each ``t``, with ``i`` running over the ``window + 1`` days ``t-window..t``::

        R(t) = window * sum(dsigma_i r_i) / (sum(skew_i) * sum(r_i^2))

    where ``dsigma_i = atm[i] - atm[i-1]``. With a constant skew and
    ``dsigma = gamma r`` this gives ``window/(window+1) * gamma / skew``; pass
    ``maturity`` to multiply by ``sqrt(maturity)`` so the output is on the
    scale of ``gamma sqrt(T) / skew``. Windows with a zero denominator or a
    NaN are skipped; ``values`` is NaN there and before the first full window.
    """
    a, r = _aligned(atm, returns)
    s = np.asarray(skew, dtype=float)
    if s.shape != a.shape:
        raise DomainError(f"misaligned series: {s.shape} skews vs {a.shape} ATM vols")
    if window < 2:
        raise DomainError(f"window must be >= 2, got {window}")
    n = a.size
    if n <= window + 1:
        raise InsufficientDataError(f"{n} dates for a window of {window}")
    dv = np.full(n, np.nan)
    dv[1:] = np.diff(a)

    def rolling(x):
        c = np.concatenate([[0.0], np.cumsum(x)])
        out = np.full(n, np.nan)
        out[window:] = c[window + 1:] - c[: n - window]
        return out

    # NaNs propagate through the cumulative sums, so mask them per window
    bad = ~(np.isfinite(dv) & np.isfinite(r) & np.isfinite(s))
    bad_count = rolling(bad.astype(float))
    num = rolling(np.where(bad, 0.0, dv * r))
    sk = rolling(np.where(bad, 0.0, s))
    rr = rolling(np.where(bad, 0.0, r * r))
    den = sk * rr
    valid = np.arange(n) >= window + 1
    ok = valid & (bad_count == 0) & (den != 0)
    vals = np.full(n, np.nan)
    vals[ok] = window * num[ok] / den[ok]
    if maturity is not None:
        vals *= math.sqrt(maturity)
    n_ok = int(ok.sum())
    skipped = int(valid.sum()) - n_ok
    mean = float(np.mean(vals[ok])) if n_ok else math.nan
    return LocalSsr(vals, mean, n_ok, skipped)


# ---------------------------------------------------------------------------
# GARCH calibration


@dataclass(frozen=True)
class GarchCalibration:
    params: GarchParams
    objective: float
    stderr: dict
    n_obs: int
    max_lag: int
    n_bootstrap: int
    message: str


def _garch_residuals(theta, g, g_se, var, var_se, lags):
    v0, rho, nu = theta
    model = nu * GARCH_DERIV_MEAN * rho ** (lags - 1.0)
    return np.append((g - model) / g_se, (var - v0 * v0) / var_se)


def _fit_garch(g, g_se, var, var_se, lags, x0):
    lo = [1e-12, 1e-6, 0.0]
    hi = [np.inf, 1.0 - 1e-9, 2.0]
    x0 = np.clip(x0, np.add(lo, 1e-9), np.subtract([1e300, 1.0, 2.0], 1e-6))
    return optimize.least_squares(
        _garch_residuals, x0, bounds=(lo, hi), args=(g, g_se, var, var_se, lags),
        x_scale=[math.sqrt(var), 0.01, 0.01], xtol=1e-12, ftol=1e-12, gtol=1e-12,
    )


def calibrate_garch(series, max_lag: int = 100, n_bootstrap: int = 200, seed: int = 0,
                    n_blocks: int = 100, span: int = 20, min_length: int = 2000) -> GarchCalibration:
    """Fit ``(v0, rho, nu)`` of the asymmetric GARCH model to a return series.

    Weighted least squares on two moment sets: the leverage curve
    ``g(l) = nu E[f'] rho^(l-1)`` for ``l <= max_lag`` (``ema_weighted``
    normalization, EMA span ``span``) and the unconditional variance ``v0^2``. Each residual is
    divided by its block-jackknife standard error. Standard errors of the
    parameters come from a moving-block bootstrap over the same blocks.

    Raises
    ------
    ConvergenceError
        If the optimizer stops without meeting its tolerances; the message
        carries the optimizer status and last iterate.
    """
    r = _as_returns(series)
    if r.size < min_length:
        raise InsufficientDataError(f"{r.size} returns; calibration needs at least {min_length}")
    num, den, cnt = leverage_blocks(r, max_lag, span, normalization="ema_weighted", n_blocks=n_blocks)
    lo, hi = span, r.size - max_lag
    edges = np.linspace(lo, hi, n_blocks + 1).astype(int)
    sq = np.add.reduceat(r[lo:hi] ** 2, edges[:-1])

    def moments(num, den, sq, cnt):
        return num.sum(0) / den.sum(0), sq.sum() / cnt.sum()

    g, var = moments(num, den, sq, cnt)
    tot = (num.sum(0), den.sum(0))
    g_se = _jackknife(tot, (num, den), lambda a, b: a / b)
    var_se = float(_jackknife((sq.sum(), cnt.sum()), (sq, cnt), lambda a, b: a / b))
    if np.any(g_se <= 0) or var_se <= 0:
        raise DegenerateModelError("zero sampling error; the series is degenerate")
    lags = np.arange(1, max_lag + 1, dtype=float)

    nu0 = max(-g[0] / -GARCH_DERIV_MEAN, 1e-4)
    ratio = g[1] / g[0] if g[0] != 0 else 0.9
    rho0 = float(np.clip(ratio, 0.5, 0.999)) if np.isfinite(ratio) else 0.9
    x0 = np.array([math.sqrt(var), rho0, nu0])
    fit = _fit_garch(g, g_se, var, var_se, lags, x0)
    if fit.status <= 0:
        raise ConvergenceError(
            f"calibration did not converge: status={fit.status}, {fit.message}, x={fit.x.tolist()}, nfev={fit.nfev}"
        )
    v0, rho, nu = fit.x

    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_bootstrap):
        k = rng.integers(0, n_blocks, n_blocks)
        gb, vb = moments(num[k], den[k], sq[k], cnt[k])
        fb = _fit_garch(gb, g_se, vb, var_se, lags, fit.x)
        boot.append(fb.x)
    boot = np.array(boot)
    se = boot.std(axis=0, ddof=1) if n_bootstrap > 1 else np.full(3, math.nan)
    if rho < nu / 2:
        raise DegenerateModelError(f"fitted rho={rho:.4g} < nu/2={nu / 2:.4g}: variance can go negative")
    return GarchCalibration(
        GarchParams(float(v0), float(rho), float(nu)),
        float(2.0 * fit.cost),
        {"v0": float(se[0]), "rho": float(se[1]), "nu": float(se[2])},
        int(r.size), max_lag, n_bootstrap, str(fit.message),
    )


class ConstantMaturitySeries(NamedTuple):
    dates: np.ndarray
    atm_vol: np.ndarray
    skew: np.ndarray


def constant_maturity_series(surfaces, T: int, window: float = 0.5,
                             weighting: str = "vega") -> ConstantMaturitySeries:
    """ATM vol and skew at a fixed maturity across snapshots.

    Each snapshot is fitted per listed maturity and both quantities are
    interpolated linearly in maturity; dates where ``T`` falls outside the
    listed range, or the fits fail, get NaN. ATM vols are annualized, as in
    the snapshots.
    """
    dates, atm, sk = [], [], []
    for s in surfaces:
        fits = {}
        for m in s.maturities:
            try:
                fits[m] = fit_smile_skew(s, m, window, weighting)
            except (InsufficientDataError, DegenerateModelError):
                continue
        mats = np.array(sorted(fits), dtype=float)
        dates.append(s.date)
        if mats.size == 0 or not mats[0] <= T <= mats[-1]:
            atm.append(math.nan)
            sk.append(math.nan)
            continue
        atm.append(float(np.interp(T, mats, [fits[m].atm_vol for m in sorted(fits)])))
        sk.append(float(np.interp(T, mats, [fits[m].skew for m in sorted(fits)])))
    return ConstantMaturitySeries(np.array(dates, dtype="datetime64[D]"), np.array(atm), np.array(sk))
