"""Fully asymmetric GARCH model.

    r_i = sigma_i eps_i
    sigma_{i+1}^2 = v0^2 + rho (sigma_i^2 - v0^2) + nu sigma_i^2 (eps_i^2 1{eps_i<0} - 1/2)

Writing ``sigma_i^2 = v0^2 (1 + X_i)``, the forward curve seen from day ``i``
is ``v0^2 (1 + rho^(j-i) X_i)`` and the first-order kernel is
``lam(i, j) = v0^2 rho^(j-i-1) (1 + X_i)`` with ``X_i = rho^(i-1) X_1``.

All quantities are daily; ``v0`` is a daily vol. Use
:meth:`GarchParams.from_annualized` for quotes in annual units.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fv_framework as fv
from .errors import DegenerateModelError, DomainError

DAYS_PER_YEAR = 252
VARIANCE_FLOOR = 1e-12  # relative to v0^2


@dataclass(frozen=True)
class GarchParams:
    v0: float
    rho: float
    nu: float
    x1: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.v0) and self.v0 > 0):
            raise DomainError(f"v0 must be positive, got {self.v0}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise DomainError(f"nu must be >= 0, got {self.nu}")
        if self.rho < self.nu / 2:
            raise DomainError(f"rho >= nu/2 is needed for positive variances (rho={self.rho}, nu={self.nu})")
        if not (math.isfinite(self.x1) and self.x1 > -1):
            raise DomainError(f"x1 must be > -1, got {self.x1}")

    @classmethod
    def from_annualized(cls, v0_annual: float, rho: float, nu: float, x1: float = 0.0,
                        days_per_year: int = DAYS_PER_YEAR) -> "GarchParams":
        return cls(v0_annual / math.sqrt(days_per_year), rho, nu, x1)

    def v0_annualized(self, days_per_year: int = DAYS_PER_YEAR) -> float:
        return self.v0 * math.sqrt(days_per_year)

    @property
    def relaxation_time(self) -> float:
        """Mean-reversion time ``1/(1-rho)`` of the variance, in days."""
        return 1.0 / (1.0 - self.rho)

    def replace(self, **kw) -> "GarchParams":
        d = dict(v0=self.v0, rho=self.rho, nu=self.nu, x1=self.x1)
        d.update(kw)
        return GarchParams(**d)


# Reference values quoted for S&P 500 and DAX; v0 is an annualized vol.
SP500 = GarchParams.from_annualized(0.179, 0.988, 0.123)
DAX = GarchParams.from_annualized(0.207, 0.9856, 0.133)


def garch_shock() -> fv.ShockFunction:
    return fv.asymmetric_square_shock()


def _geom(rho: float, T: int) -> float:
    # (1 - rho^T) / (1 - rho)
    return -math.expm1(T * math.log(rho)) / (1.0 - rho)


def forward_curve(params: GarchParams, horizon: int) -> np.ndarray:
    """Initial forward variances ``v0^2 (1 + rho^(j-1) X_1)``, ``j = 1..horizon``."""
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    j = np.arange(horizon)
    return params.v0**2 * (1.0 + params.rho**j * params.x1)


def lambda_kernel(params: GarchParams) -> fv.Kernel:
    v02, rho, x1 = params.v0**2, params.rho, params.x1

    def kernel(i, j, curve=None):
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any(i >= j):
            raise DomainError("the kernel is defined for shock day < target day")
        return v02 * rho ** (j - i - 1.0) * (1.0 + rho ** (i - 1.0) * x1)

    return kernel


def garch_model(params: GarchParams, horizon: int, shock: fv.ShockFunction | None = None) -> fv.ForwardVarianceModel:
    """The GARCH model as a generic forward-variance model.

    ``shock`` replaces the asymmetric-square shock while keeping the GARCH
    curve and kernel (e.g. ``fv.linear_shock()`` for a linear benchmark).
    """
    return fv.ForwardVarianceModel(
        forward_curve(params, horizon), lambda_kernel(params), params.nu, shock or garch_shock()
    )


def garch_total_variance(params: GarchParams, T: int) -> float:
    return params.v0**2 * (T + params.x1 * _geom(params.rho, T))


def _double_sum_terms(params: GarchParams, T: int):
    # pairs i < j <= T: sqrt(1 + rho^(i-1) X1) (rho^(j-i-1) + rho^(j-2) X1) and v_1^i / V_T
    rho, x1 = params.rho, params.x1
    i, j = np.triu_indices(T, 1)
    i, j = i + 1.0, j + 1.0
    base = np.sqrt(1.0 + rho ** (i - 1) * x1) * (rho ** (j - i - 1) + rho ** (j - 2) * x1)
    share = (1.0 + rho ** (i - 1) * x1) / (T + x1 * _geom(rho, T))
    return base, share


def _check_T(T: int) -> int:
    if int(T) != T or T < 1:
        raise DomainError(f"maturity must be a positive integer, got {T}")
    return int(T)


def garch_skew(params: GarchParams, T: int) -> float:
    T = _check_T(T)
    if T < 2:
        return 0.0
    base, share = _double_sum_terms(params, T)
    V = garch_total_variance(params, T)
    pref = -math.sqrt(2 / math.pi) * params.nu * params.v0**3 / (2 * V**1.5)
    return float(pref * np.sum(base * np.sqrt(1.0 - share)))


def garch_skewness(params: GarchParams, T: int) -> float:
    """One sixth of the skewness of the ``T``-day return."""
    T = _check_T(T)
    if T < 2:
        return 0.0
    base, _ = _double_sum_terms(params, T)
    V = garch_total_variance(params, T)
    pref = -math.sqrt(2 / math.pi) * params.nu * params.v0**3 / (2 * V**1.5)
    return float(pref * np.sum(base))


def skewness_skew_ratio(params: GarchParams, T: int) -> float:
    """``(S_T/6) / Skew_T``; reduces to ``sqrt(T/(T-1))`` when ``X_1 = 0``."""
    T = _check_T(T)
    if T < 2:
        raise DegenerateModelError("the skewness/skew ratio needs T >= 2")
    base, share = _double_sum_terms(params, T)
    den = float(np.sum(base * np.sqrt(1.0 - share)))
    if den == 0:
        raise DegenerateModelError(f"zero skew at T={T}")
    return float(np.sum(base)) / den


def garch_gamma(params: GarchParams, T: int) -> float:
    T = _check_T(T)
    g = _geom(params.rho, T)
    return (-params.nu * math.sqrt(1 + params.x1)
            / (math.sqrt(2 * math.pi) * math.sqrt(T * (T + params.x1 * g))) * g)


def garch_ssr(params: GarchParams, T: int) -> float:
    return garch_gamma(params, T) * math.sqrt(T) / garch_skew(params, T)


# ---------------------------------------------------------------------------
# simulation

@dataclass
class GarchPaths:
    """Simulated paths, arrays of shape ``(n_paths, T)``.

    ``returns`` are ``sigma_i eps_i``; ``adjusted_returns`` add the
    ``-sigma_i^2/2`` compensator so that ``exp`` of their sum is a martingale.
    """

    returns: np.ndarray
    adjusted_returns: np.ndarray
    variances: np.ndarray
    floor_hits: int


def _threads() -> int:
    import os

    env = os.environ.get("SMILE_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def block_generators(seed: int, n_blocks: int) -> list[np.random.Generator]:
    """Independent generators, one per block of paths."""
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def _shock_values(shock: fv.ShockFunction | None, eps: np.ndarray) -> np.ndarray:
    if shock is None:
        return np.where(eps < 0, eps * eps, 0.0) - 0.5
    return np.asarray(shock.f(eps), dtype=float)


def step_variance(params: GarchParams, var: np.ndarray, eps: np.ndarray,
                  shock: fv.ShockFunction | None = None):
    """One step of the variance recursion; returns the floored variance and hit count."""
    v02 = params.v0**2
    new = v02 + params.rho * (var - v02) + params.nu * var * _shock_values(shock, eps)
    floor = VARIANCE_FLOOR * v02
    hits = int(np.count_nonzero(new < floor))
    if hits:
        new = np.maximum(new, floor)
    return new, hits


def _simulate_block(params, T, n, rng, shock, antithetic):
    if antithetic:
        half = rng.standard_normal((T, (n + 1) // 2))
        eps = np.concatenate([half, -half], axis=1)[:, :n]
    else:
        eps = rng.standard_normal((T, n))
    var = np.empty((T, n))
    var[0] = params.v0**2 * (1 + params.x1)
    hits = 0
    if n == 1 and shock is None:
        # scalar loop: fast for one long series
        v02, rho, nu = params.v0**2, params.rho, params.nu
        floor = VARIANCE_FLOOR * v02
        e = eps[:, 0].tolist()
        s2 = float(var[0, 0])
        out = [s2] * T
        for t in range(T - 1):
            x = e[t]
            s2 = v02 + rho * (s2 - v02) + nu * s2 * ((x * x if x < 0 else 0.0) - 0.5)
            if s2 < floor:
                hits += 1
                s2 = floor
            out[t + 1] = s2
        var[:, 0] = out
    else:
        for t in range(T - 1):
            var[t + 1], h = step_variance(params, var[t], eps[t], shock)
            hits += h
    sig = np.sqrt(var)
    ret = sig * eps
    return ret.T, (ret - 0.5 * var).T, var.T, hits


def simulate(params: GarchParams, T: int, n_paths: int = 1, seed: int = 0, *,
             n_blocks: int = 1, shock: fv.ShockFunction | None = None,
             antithetic: bool = False) -> GarchPaths:
    """Simulate ``n_paths`` paths of ``T`` days.

    Paths are split into ``n_blocks`` contiguous blocks, each driven by its
    own child of ``SeedSequence(seed)``; the output is identical whatever the
    number of worker threads. ``sigma_1^2 = v0^2 (1 + X_1)``.
    """
    if T < 1 or n_paths < 1:
        raise DomainError("T and n_paths must be >= 1")
    n_blocks = max(1, min(n_blocks, n_paths))
    sizes = np.full(n_blocks, n_paths // n_blocks)
    sizes[: n_paths % n_blocks] += 1
    gens = block_generators(seed, n_blocks)
    jobs = list(zip(sizes, gens))
    with ThreadPoolExecutor(max_workers=min(_threads(), n_blocks)) as ex:
        parts = list(ex.map(lambda a: _simulate_block(params, T, int(a[0]), a[1], shock, antithetic), jobs))
    ret, adj, var, hits = zip(*parts)
    return GarchPaths(np.vstack(ret), np.vstack(adj), np.vstack(var), int(sum(hits)))


def terminal_log_prices(params: GarchParams, maturities, n_paths: int, rng: np.random.Generator,
                        shock: fv.ShockFunction | None = None, antithetic: bool = False):
    """Martingale-adjusted ``ln(S_T/S_1)`` at each maturity, without storing paths.

    Draws the same normals, in the same order, as :func:`simulate` with one
    block, so the values match ``simulate(...).adjusted_returns.cumsum(1)``.
    Returns ``(dict maturity -> array, floor_hits)``.
    """
    mats = sorted({int(T) for T in maturities})
    if not mats or mats[0] < 1:
        raise DomainError("maturities must be >= 1")
    out = {}
    var = np.full(n_paths, params.v0**2 * (1 + params.x1))
    x = np.zeros(n_paths)
    hits = 0
    for t in range(1, mats[-1] + 1):
        if antithetic:
            half = rng.standard_normal((n_paths + 1) // 2)
            eps = np.concatenate([half, -half])[:n_paths]
        else:
            eps = rng.standard_normal(n_paths)
        x += np.sqrt(var) * eps - 0.5 * var
        if t in mats:
            out[t] = x.copy()
        if t < mats[-1]:
            var, h = step_variance(params, var, eps, shock)
            hits += h
    return out, hits
