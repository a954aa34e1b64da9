"""Monte Carlo checks of the first-order smile, implied leverage and SSR.

Paths start at ``S_1 = 1`` and use the martingale-adjusted log price
``sum(sigma_i eps_i - sigma_i^2/2)``. Call prices are averaged over
``n_batches`` contiguous batches of paths, each with its own RNG substream;
standard errors of prices and of everything derived from them come from the
spread of the batch means.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bs_core, fv_framework as fv, garch
from .errors import DegenerateModelError, DomainError, NoArbitrageError

MIN_PATHS = 10_000
SHOCKS = ("garch", "linear")
LEVERAGE_MODES = ("linear", "sqrt", "nested")


@dataclass(frozen=True)
class McConfig:
    """Description of one seeded Monte Carlo run.

    ``moneyness`` is the shifted moneyness ``(ln K + V_T/2)/sqrt(V_T)`` with
    ``V_T`` the analytic total variance. ``target_se`` is an optional budget
    for the relative standard error of the ATM vol. ``shock="linear"``
    replaces the asymmetric-square shock by ``f(x) = x`` in the variance
    recursion.
    """

    params: garch.GarchParams
    maturities: tuple = (20, 40, 60)
    moneyness: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    n_paths: int = 1_000_000
    seed: int = 0
    antithetic: bool = False
    n_batches: int = 32
    target_se: float | None = None
    shock: str = "garch"
    leverage_mode: str = "linear"
    nested_inner: int = 2000

    def __post_init__(self):
        mats = tuple(int(T) for T in self.maturities)
        if not mats or min(mats) < 2 or any(T != t for T, t in zip(mats, self.maturities)):
            raise DomainError(f"maturities must be integers >= 2, got {self.maturities}")
        object.__setattr__(self, "maturities", tuple(sorted(set(mats))))
        m = tuple(float(x) for x in self.moneyness)
        if not m or not all(math.isfinite(x) for x in m):
            raise DomainError("moneyness grid must be non-empty and finite")
        object.__setattr__(self, "moneyness", m)
        if self.n_paths < MIN_PATHS:
            raise DomainError(f"n_paths must be >= {MIN_PATHS}, got {self.n_paths}")
        if not 2 <= self.n_batches <= self.n_paths:
            raise DomainError(f"n_batches must lie in [2, n_paths], got {self.n_batches}")
        if self.shock not in SHOCKS:
            raise DomainError(f"shock must be one of {SHOCKS}")
        if self.leverage_mode not in LEVERAGE_MODES:
            raise DomainError(f"leverage_mode must be one of {LEVERAGE_MODES}")
        if self.target_se is not None and not self.target_se > 0:
            raise DomainError("target_se must be positive")
        if self.nested_inner < 100:
            raise DomainError("nested_inner must be >= 100")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = asdict(self.params)
        d["maturities"] = list(self.maturities)
        d["moneyness"] = list(self.moneyness)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        d["params"] = garch.GarchParams(**d["params"])
        d["maturities"] = tuple(d.get("maturities", cls.maturities))
        d["moneyness"] = tuple(d.get("moneyness", cls.moneyness))
        return cls(**d)

    def shock_function(self) -> fv.ShockFunction | None:
        return fv.linear_shock() if self.shock == "linear" else None

    def analytic_model(self, horizon: int) -> fv.ForwardVarianceModel:
        shock = fv.linear_shock() if self.shock == "linear" else None
        return garch.garch_model(self.params, horizon, shock)


@dataclass(frozen=True)
class SmilePoint:
    maturity: int
    moneyness: float
    strike: float
    price: float
    price_se: float
    implied_vol: float
    vol_se: float
    analytic_vol: float
    z: float
    flagged: bool


@dataclass(frozen=True)
class MaturitySummary:
    maturity: int
    atm_vol: float
    atm_se: float
    atm_analytic: float
    atm_anchor: float
    atm_z: float
    skew: float
    skew_se: float
    skew_analytic: float
    skew_z: float
    skew_analytic_fit: float
    forward: float
    forward_se: float
    se_budget_met: bool | None


@dataclass(frozen=True)
class LeverageEstimate:
    maturity: int
    gamma: float
    stderr: float
    analytic: float
    z: float
    mode: str


@dataclass(frozen=True)
class SsrEstimate:
    maturity: int
    ratio: float | None
    stderr: float | None
    analytic: float
    analytic_linear: float
    z: float | None
    refused: str | None


@dataclass
class McResult:
    config: McConfig
    points: list = field(default_factory=list)
    maturities: list = field(default_factory=list)
    leverage: list = field(default_factory=list)
    ssr: list = field(default_factory=list)
    floor_hits: int = 0

    def zscores(self) -> np.ndarray:
        """All comparison deltas, in units of standard errors."""
        zs = [p.z for p in self.points if not p.flagged]
        zs += [m.atm_z for m in self.maturities] + [m.skew_z for m in self.maturities]
        zs += [g.z for g in self.leverage] + [s.z for s in self.ssr if s.z is not None]
        return np.array(zs, dtype=float)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "points": [asdict(p) for p in self.points],
            "maturities": [asdict(m) for m in self.maturities],
            "leverage": [asdict(g) for g in self.leverage],
            "ssr": [asdict(s) for s in self.ssr],
            "floor_hits": self.floor_hits,
        }


# ---------------------------------------------------------------------------
# helpers


def _batch_sizes(n: int, b: int) -> np.ndarray:
    sizes = np.full(b, n // b)
    sizes[: n % b] += 1
    return sizes


def _run_batches(fn, sizes, gens):
    with ThreadPoolExecutor(max_workers=min(garch._threads(), len(sizes))) as ex:
        return list(ex.map(lambda a: fn(int(a[0]), a[1]), zip(sizes, gens)))


def _leverage_generators(seed: int, n: int):
    # an independent stream so that smile and leverage errors are uncorrelated
    children = np.random.SeedSequence([seed, 1]).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def _pooled(means: np.ndarray, sizes: np.ndarray):
    """Pooled mean and batch-means covariance of the pooled mean."""
    w = sizes / sizes.sum()
    mean = w @ means
    B = means.shape[0]
    dev = means - means.mean(axis=0)
    cov = dev.T @ dev / (B - 1) / B
    return mean, cov


def _fit_matrix(m: np.ndarray) -> np.ndarray:
    # rows of the least-squares solve for (c0, c1[, c2])
    deg = 2 if m.size >= 4 else 1
    X = np.vander(m, deg + 1, increasing=True)
    return np.linalg.pinv(X)


def _relative_slope(m, vols, cov=None):
    """``c1/c0`` of a polynomial fit of vols on moneyness, with delta-method SE."""
    A = _fit_matrix(m)
    c = A @ vols
    slope = c[1] / c[0]
    if cov is None:
        return float(slope), math.nan
    grad = A[1] / c[0] - c[1] * A[0] / c[0] ** 2
    return float(slope), float(math.sqrt(max(grad @ cov @ grad, 0.0)))


# ---------------------------------------------------------------------------
# smile


def mc_smile(config: McConfig) -> McResult:
    """Price calls on the moneyness grid by simulation and compare with the analytic smile.

    Strikes whose pooled price is not strictly inside the no-arbitrage band
    are flagged and left out of the skew fit.
    """
    p = config.params
    mats = config.maturities
    grid = np.array(config.moneyness)
    V = {T: garch.garch_total_variance(p, T) for T in mats}
    strikes = {T: np.exp(fv.log_moneyness_from_shifted(grid, V[T])) for T in mats}
    shock = config.shock_function()
    sizes = _batch_sizes(config.n_paths, config.n_batches)
    gens = garch.block_generators(config.seed, config.n_batches)

    def batch(n, rng):
        logs, hits = garch.terminal_log_prices(p, mats, n, rng, shock, config.antithetic)
        out = np.empty((len(mats), grid.size + 1))
        for k, T in enumerate(mats):
            s = np.exp(logs[T])
            out[k, :-1] = np.maximum(s[:, None] - strikes[T][None, :], 0.0).mean(axis=0)
            out[k, -1] = s.mean()
        return out, hits

    parts = _run_batches(batch, sizes, gens)
    means = np.stack([a for a, _ in parts])
    hits = int(sum(h for _, h in parts))

    result = McResult(config, floor_hits=hits)
    for k, T in enumerate(mats):
        price, cov = _pooled(means[:, k, :], sizes)
        model = config.analytic_model(T)
        analytic = fv.smile_curve(model, T, grid)
        vols = np.full(grid.size, np.nan)
        dvol = np.full(grid.size, np.nan)
        for q, (m, K) in enumerate(zip(grid, strikes[T])):
            se = math.sqrt(cov[q, q])
            try:
                v = bs_core.implied_total_variance(float(price[q]), 1.0, float(K))
            except NoArbitrageError:
                result.points.append(SmilePoint(T, float(m), float(K), float(price[q]), se,
                                                math.nan, math.nan, float(analytic[q]), math.nan, True))
                continue
            sig = math.sqrt(v / T)
            # dC/dsigma = dC/dv * 2 sigma T
            dvol[q] = 1.0 / (bs_core.greeks(1.0, float(K), v).d_var * 2.0 * sig * T)
            vols[q] = sig
            vse = se * dvol[q]
            result.points.append(SmilePoint(T, float(m), float(K), float(price[q]), se, sig, vse,
                                            float(analytic[q]), (sig - analytic[q]) / vse, False))
        ok = np.isfinite(vols)
        vol_cov = cov[:-1, :-1] * np.outer(dvol, dvol)
        atm_idx = np.flatnonzero(grid == 0.0)
        if atm_idx.size and ok[atm_idx[0]]:
            q = atm_idx[0]
            atm, atm_se = float(vols[q]), float(math.sqrt(vol_cov[q, q]))
        else:
            atm, atm_se = math.nan, math.nan
        atm_an = float(fv.smile_curve(model, T, [0.0])[0])
        if ok.sum() >= 2 and np.ptp(grid[ok]) > 0:
            idx = np.flatnonzero(ok)
            sk, sk_se = _relative_slope(grid[idx], vols[idx], vol_cov[np.ix_(idx, idx)])
            sk_fit, _ = _relative_slope(grid[idx], analytic[idx])
        else:
            sk = sk_se = sk_fit = math.nan
        sk_an = fv.skew(model, T)
        budget = None if config.target_se is None or not math.isfinite(atm) else bool(atm_se / atm <= config.target_se)
        result.maturities.append(MaturitySummary(
            T, atm, atm_se, atm_an, fv.atm_vol(model, T), (atm - atm_an) / atm_se,
            sk, sk_se, sk_an, (sk - sk_an) / sk_se, sk_fit,
            float(price[-1]), float(math.sqrt(cov[-1, -1])), budget,
        ))
    return result


# ---------------------------------------------------------------------------
# implied leverage


def _day_two_total_variance(p: garch.GarchParams, sigma2_sq: np.ndarray, T: int) -> np.ndarray:
    # v_2^j = v0^2 + rho^(j-2) (sigma_2^2 - v0^2), summed over j = 2..T+1
    return T * p.v0**2 + (sigma2_sq - p.v0**2) * garch._geom(p.rho, T)


NESTED_GROUPS = 4


def _nested_atm_vols(config, sigma2_sq, T, V2):
    """ATM vols at day 2 repriced by an inner simulation for each outer path.

    Inner paths reuse one matrix of normals across outer paths, so the
    repricing noise is common and largely cancels in the regression. The
    second return value holds the same vols repriced on each of
    ``NESTED_GROUPS`` disjoint slices of the inner paths; their spread
    measures the repricing error that the common normals leave behind.
    """
    p = config.params
    shock = config.shock_function()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 2, T])))
    n_in = config.nested_inner
    eps = rng.standard_normal((T, n_in))
    strikes = np.exp(-0.5 * V2)
    groups = np.array_split(np.arange(n_in), NESTED_GROUPS)
    out = np.empty(sigma2_sq.size)
    sub = np.empty((sigma2_sq.size, NESTED_GROUPS))
    chunk = max(1, 2_000_000 // n_in)
    for lo in range(0, sigma2_sq.size, chunk):
        hi = min(lo + chunk, sigma2_sq.size)
        var = np.repeat(sigma2_sq[lo:hi, None], n_in, axis=1)
        x = np.zeros_like(var)
        for t in range(T):
            x += np.sqrt(var) * eps[t] - 0.5 * var
            if t < T - 1:
                var, _ = garch.step_variance(p, var, np.broadcast_to(eps[t], var.shape), shock)
        payoff = np.maximum(np.exp(x) - strikes[lo:hi, None], 0.0)
        prices = np.column_stack([payoff.mean(axis=1)] + [payoff[:, g].mean(axis=1) for g in groups])
        for k, K in enumerate(strikes[lo:hi]):
            v = bs_core.implied_total_variance(float(prices[k, 0]), 1.0, float(K))
            # the subgroup prices sit close to the full one: one Newton step suffices
            dv = (prices[k, 1:] - prices[k, 0]) / bs_core.greeks(1.0, float(K), v).d_var
            out[lo + k] = math.sqrt(v / T)
            sub[lo + k] = np.sqrt(np.maximum(v + dv, 0.0) / T)
    return out, sub


def mc_implied_leverage(config: McConfig) -> list[LeverageEstimate]:
    """Regression slope of the day-1 to day-2 ATM vol change on the day-1 return.

    Each path draws ``eps_1``; the day-2 forward curve follows from
    ``sigma_2^2`` exactly (the GARCH curve is linear in it). The ATM vol
    change is, by ``leverage_mode``:

    ``"linear"``
        ``(V_2 - V_1) / (2 sqrt(V_1 T))``, the first-order change of
        ``sqrt(V_T / T)``;
    ``"sqrt"``
        ``sqrt(V_2 / T) - sqrt(V_1 / T)``; differs from ``"linear"`` at
        second order in the vol-of-vol;
    ``"nested"``
        the day-2 shifted-ATM implied vol repriced by an inner simulation of
        ``nested_inner`` paths; meant for small spot checks.

    The slope is OLS with intercept; its standard error is
    heteroskedasticity-robust (HC0) over paths. In nested mode the
    repricing error, estimated from disjoint inner subgroups, is added in
    quadrature.
    """
    p = config.params
    shock = config.shock_function()
    sizes = _batch_sizes(config.n_paths, config.n_batches)
    gens = _leverage_generators(config.seed, config.n_batches)
    s1 = p.v0**2 * (1.0 + p.x1)

    def batch(n, rng):
        if config.antithetic:
            half = rng.standard_normal((n + 1) // 2)
            eps = np.concatenate([half, -half])[:n]
        else:
            eps = rng.standard_normal(n)
        s2, _ = garch.step_variance(p, np.full(n, s1), eps, shock)
        return math.sqrt(s1) * eps, s2

    parts = _run_batches(batch, sizes, gens)
    r = np.concatenate([a for a, _ in parts])
    s2 = np.concatenate([b for _, b in parts])
    out = []
    for T in config.maturities:
        V1 = garch.garch_total_variance(p, T)
        V2 = _day_two_total_variance(p, s2, T)
        if config.leverage_mode == "linear":
            dsig = (V2 - V1) / (2.0 * math.sqrt(V1 * T))
        elif config.leverage_mode == "sqrt":
            dsig = np.sqrt(V2 / T) - math.sqrt(V1 / T)
        else:
            vols, sub = _nested_atm_vols(config, s2, T, V2)
            dsig = vols - math.sqrt(V1 / T)
        slope, se = _ols_hc0(r, dsig)
        if config.leverage_mode == "nested":
            # the group slopes scatter by the repricing error of n_inner/G paths
            g_slopes = [_ols_hc0(r, sub[:, k])[0] for k in range(NESTED_GROUPS)]
            se = math.hypot(se, float(np.std(g_slopes, ddof=1)) / math.sqrt(NESTED_GROUPS))
        analytic = fv.implied_leverage(config.analytic_model(T + 1), T)
        z = (slope - analytic) / se if se > 0 else (0.0 if slope == analytic else math.copysign(math.inf, slope - analytic))
        out.append(LeverageEstimate(T, slope, se, analytic, z, config.leverage_mode))
    return out


def _ols_hc0(x: np.ndarray, y: np.ndarray):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise DegenerateModelError("day-1 returns have zero variance")
    slope = float(xc @ (y - y.mean())) / sxx
    e = (y - y.mean()) - slope * xc
    se = math.sqrt(float(np.sum((xc * e) ** 2))) / sxx
    return slope, se


# ---------------------------------------------------------------------------
# SSR


def mc_ssr(config: McConfig, smile: McResult | None = None,
           leverage: list | None = None) -> list[SsrEstimate]:
    """``gamma_T sqrt(T) / Skew_T`` from simulated leverage and fitted skew.

    The two inputs come from independent RNG streams, so their relative
    errors add in quadrature. A maturity whose skew is within 5 standard
    errors of zero gets ``ratio=None`` and a ``refused`` reason.
    """
    smile = smile if smile is not None else mc_smile(config)
    leverage = leverage if leverage is not None else mc_implied_leverage(config)
    lev = {g.maturity: g for g in leverage}
    out = []
    for m in smile.maturities:
        T = m.maturity
        model = config.analytic_model(T + 1)
        try:
            analytic = fv.ssr(model, T)
            analytic_lin = fv.ssr_linear(model, T)
        except DegenerateModelError:
            analytic = analytic_lin = math.nan
        g = lev.get(T)
        if g is None:
            raise DomainError(f"no leverage estimate for T={T}")
        if not (math.isfinite(m.skew) and abs(m.skew) >= 5.0 * m.skew_se):
            out.append(SsrEstimate(T, None, None, analytic, analytic_lin, None,
                                   f"skew {m.skew:.3g} is not 5 standard errors from zero (se {m.skew_se:.3g})"))
            continue
        ratio = g.gamma * math.sqrt(T) / m.skew
        rel = math.hypot(g.stderr / g.gamma if g.gamma else math.inf, m.skew_se / m.skew)
        se = abs(ratio) * rel
        out.append(SsrEstimate(T, ratio, se, analytic, analytic_lin, (ratio - analytic) / se, None))
    return out


def run(config: McConfig) -> McResult:
    """Smile, implied leverage and SSR for every maturity of ``config``."""
    result = mc_smile(config)
    result.leverage = mc_implied_leverage(config)
    result.ssr = mc_ssr(config, result, result.leverage)
    return result
