"""Command-line front end: ``smile-lab <command> [options]``.

Every command accepts ``--config FILE`` (a JSON object whose keys are the
long option names with ``-`` written as ``_``); explicit flags override the
file. Outputs embed the tool version, the resolved config, the seed and the
SHA-256 of every input file. Failures print ``{"code", "message",
"context"}`` as JSON on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimators as est, fv_framework as fv, garch, mc_lab
from .dataio import (
    dump_json,
    file_sha256,
    load_returns,
    load_surface,
    save_returns,
    save_surface,
    write_table,
)
from .errors import DomainError, SmileLabError

DAYS = garch.DAYS_PER_YEAR
PRESETS = {"sp500": garch.SP500, "dax": garch.DAX}
OUTPUT_KEYS = {"out", "out_dir", "config"}

MODEL_DEFAULTS = {"preset": "sp500", "v0": None, "rho": None, "nu": None, "x1": 0.0}

DEFAULTS = {
    "smile": {**MODEL_DEFAULTS, "maturities": "20,40,60", "moneyness": "-1,-0.5,0,0.5,1",
              "convention": "market", "date": "2000-01-03", "out": None},
    "ssr": {**MODEL_DEFAULTS, "model": "garch", "maturities": "2..250", "amplitude": 0.2,
            "tau": 50.0, "vol": 0.179, "shock": "garch", "out": None},
    "simulate": {**MODEL_DEFAULTS, "days": 2520, "seed": 0, "start": "2000-01-03", "out": None},
    "analyze": {"returns": None, "surface": None, "ema_span": 20, "detrend_span": 1000,
                "max_lag": 60, "maturities": "10,20,40", "ssr_window": 50,
                "normalization": "ema_weighted", "skew_window": 0.5, "out": None},
    "mc-verify": {**MODEL_DEFAULTS, "nu": 0.05, "maturities": "20,40,60",
                  "moneyness": "-1,-0.5,0,0.5,1", "paths": 1_000_000, "seed": 0, "batches": 32,
                  "antithetic": False, "shock": "garch", "leverage_mode": "linear",
                  "target_se": None, "out": None},
    "calibrate": {"returns": None, "max_lag": 100, "bootstrap": 200, "seed": 0, "out": None},
    "report": {**MODEL_DEFAULTS, "returns": None, "surface": None, "calibrate": False,
               "maturities": "10,20,40,60,90,120,180,250", "ema_span": 20, "detrend_span": 1000,
               "ssr_window": 50, "skew_window": 0.5, "out_dir": None},
}


class CliError(SmileLabError):
    code = "usage_error"


# ---------------------------------------------------------------------------
# parsing helpers


def parse_int_list(text) -> list[int]:
    """``"2..5,10"`` -> ``[2, 3, 4, 5, 10]``; ``"a..b:s"`` steps by ``s``."""
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, rest = part.split("..", 1)
            hi, _, step = rest.partition(":")
            out.extend(range(int(lo), int(hi) + 1, int(step or 1)))
        else:
            out.append(int(part))
    if not out:
        raise CliError(f"empty list {text!r}")
    return out


def parse_float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise CliError(f"bad number list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _model_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), help="reference parameter set")
    p.add_argument("--v0", type=float, help="long-run vol, annualized (overrides the preset)")
    p.add_argument("--rho", type=float, help="variance persistence per day")
    p.add_argument("--nu", type=float, help="vol-of-vol per day")
    p.add_argument("--x1", type=float, help="initial variance excess: sigma_1^2 = v0^2 (1 + x1)")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="smile-lab", description="Smile dynamics of forward-variance and GARCH models.")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values")
        return p

    p = cmd("smile", "first-order GARCH smile on a moneyness grid, as a surface CSV")
    _model_args(p)
    p.add_argument("--maturities", help="days, e.g. 20,40,60 or 2..250")
    p.add_argument("--moneyness", help="comma-separated moneyness grid")
    p.add_argument("--convention", choices=["market", "shifted"],
                   help="market: ln(K/S)/sqrt(V_T); shifted: (ln(K/S) + V_T/2)/sqrt(V_T)")
    p.add_argument("--date", help="date stamped on the snapshot")
    p.add_argument("--out", help="output CSV (default stdout)")

    p = cmd("ssr", "skew, skewness, implied leverage and SSR term structure")
    _model_args(p)
    p.add_argument("--model", choices=["garch", "exponential"])
    p.add_argument("--maturities")
    p.add_argument("--amplitude", type=float, help="exponential model: leverage amplitude A")
    p.add_argument("--tau", type=float, help="exponential model: leverage decay time in days")
    p.add_argument("--vol", type=float, help="exponential model: flat vol, annualized")
    p.add_argument("--shock", choices=["garch", "linear"], help="shock function")
    p.add_argument("--out")

    p = cmd("simulate", "simulate one GARCH return series")
    _model_args(p)
    p.add_argument("--days", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--start", help="first business date")
    p.add_argument("--out")

    p = cmd("analyze", "leverage curve, low-moment skewness and smile regressions on data")
    p.add_argument("--returns", help="CSV with date,close or date,return")
    p.add_argument("--surface", help="CSV with date,maturity_days,moneyness,implied_vol")
    p.add_argument("--ema-span", dest="ema_span", type=int)
    p.add_argument("--detrend-span", dest="detrend_span", type=int)
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("--maturities")
    p.add_argument("--ssr-window", dest="ssr_window", type=int)
    p.add_argument("--normalization", choices=list(est.NORMALIZATIONS))
    p.add_argument("--skew-window", dest="skew_window", type=float)
    p.add_argument("--out")

    p = cmd("mc-verify", "Monte Carlo check of smile, implied leverage and SSR")
    _model_args(p)
    p.add_argument("--maturities")
    p.add_argument("--moneyness")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batches", type=int)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--shock", choices=list(mc_lab.SHOCKS))
    p.add_argument("--leverage-mode", dest="leverage_mode", choices=list(mc_lab.LEVERAGE_MODES))
    p.add_argument("--target-se", dest="target_se", type=float)
    p.add_argument("--out")

    p = cmd("calibrate", "fit GARCH parameters to a return series")
    p.add_argument("--returns")
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = cmd("report", "theory-vs-data tables as CSV files")
    _model_args(p)
    p.add_argument("--returns")
    p.add_argument("--surface")
    p.add_argument("--calibrate", action="store_true", help="take model parameters from the returns")
    p.add_argument("--maturities")
    p.add_argument("--ema-span", dest="ema_span", type=int)
    p.add_argument("--detrend-span", dest="detrend_span", type=int)
    p.add_argument("--ssr-window", dest="ssr_window", type=int)
    p.add_argument("--skew-window", dest="skew_window", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    return top


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    given = vars(ns)
    path = given.get("config")
    if path:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CliError(f"config file {path}: {e}") from None
        if not isinstance(loaded, dict):
            raise CliError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise CliError(f"unknown config keys for {command}: {unknown}")
        cfg.update(loaded)
    for k, v in given.items():
        if k in cfg:
            cfg[k] = v
    return cfg


def model_params(cfg: dict) -> garch.GarchParams:
    base = PRESETS[cfg.get("preset") or "sp500"]
    kw = {}
    if cfg.get("v0") is not None:
        kw["v0"] = float(cfg["v0"]) / math.sqrt(DAYS)
    for k in ("rho", "nu", "x1"):
        if cfg.get(k) is not None:
            kw[k] = float(cfg[k])
    return base.replace(**kw)


def _meta(command, cfg, inputs=(), seed=None):
    return {
        "tool": "smile-lab",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in cfg.items() if k not in OUTPUT_KEYS},
        "seed": seed,
        "inputs": {k: {"path": str(p), "sha256": file_sha256(p)} for k, p in inputs if p},
    }


def _params_record(p: garch.GarchParams) -> dict:
    return {"v0_daily": p.v0, "v0_annualized": p.v0_annualized(), "rho": p.rho, "nu": p.nu, "x1": p.x1}


def _emit_table(out, columns, rows, meta):
    if out:
        write_table(out, columns, rows, meta)
    else:
        write_table(sys.stdout, columns, rows, meta)


def _emit_json(out, obj):
    dump_json(obj, out if out else sys.stdout)


# ---------------------------------------------------------------------------
# commands


def cmd_smile(cfg):
    p = model_params(cfg)
    mats = parse_int_list(cfg["maturities"])
    grid = np.array(parse_float_list(cfg["moneyness"]))
    if cfg["convention"] not in ("market", "shifted"):
        raise CliError(f"unknown convention {cfg['convention']!r}")
    quotes = {}
    for T in mats:
        model = garch.garch_model(p, T)
        V = fv.total_variance(model, T)
        shifted = grid if cfg["convention"] == "shifted" else fv.shifted_from_market_moneyness(grid, V)
        quotes[T] = (grid, fv.smile_curve(model, T, shifted) * math.sqrt(DAYS))
    surface = est.SmileSurface(np.datetime64(cfg["date"], "D"), quotes, cfg["convention"])
    meta = _meta("smile", cfg)
    meta["params"] = _params_record(p)
    save_surface(cfg["out"] or sys.stdout, [surface], meta)
    return 0


def cmd_ssr(cfg):
    mats = parse_int_list(cfg["maturities"])
    if min(mats) < 2:
        raise DomainError("maturities must be >= 2")
    shock = fv.linear_shock() if cfg["shock"] == "linear" else fv.asymmetric_square_shock()
    horizon = max(mats) + 1
    if cfg["model"] == "garch":
        p = model_params(cfg)
        model = garch.garch_model(p, horizon, shock)
        extra = {"params": _params_record(p)}
    else:
        variance = (float(cfg["vol"]) / math.sqrt(DAYS)) ** 2
        nu = 1.0 if cfg.get("nu") is None else float(cfg["nu"])
        model = fv.exponential_leverage_model(float(cfg["amplitude"]), float(cfg["tau"]), variance,
                                              horizon, nu=nu, shock=shock)
        extra = {}
    cols = ["maturity_days", "atm_vol", "skew", "skewness_over_6", "implied_leverage", "ssr",
            "ssr_linear", "correction_factor", "sqrt_t_over_t_minus_1"]
    if cfg["model"] == "exponential":
        cols += ["ssr_flat_exponential", "ssr_flat_exponential_approx"]
    rows = []
    for T in mats:
        r = fv.smile_report(model, T)
        row = [T, r.atm_vol * math.sqrt(DAYS), r.skew, r.skewness_over_6, r.implied_leverage, r.ssr,
               fv.ssr_linear(model, T), r.correction_factor, math.sqrt(T / (T - 1))]
        if cfg["model"] == "exponential":
            row += list(fv.ssr_flat_exponential(float(cfg["amplitude"]), float(cfg["tau"]), T))
        rows.append(row)
    meta = _meta("ssr", cfg)
    meta.update(extra)
    _emit_table(cfg["out"], cols, rows, meta)
    return 0


def cmd_simulate(cfg):
    p = model_params(cfg)
    days, seed = int(cfg["days"]), int(cfg["seed"])
    paths = garch.simulate(p, days, 1, seed=seed)
    start = np.datetime64(cfg["start"], "D")
    dates = np.busday_offset(start, np.arange(days), roll="forward")
    series = est.ReturnSeries(paths.returns[0], dates)
    meta = _meta("simulate", cfg, seed=seed)
    meta["params"] = _params_record(p)
    meta["floor_hits"] = paths.floor_hits
    if not cfg["out"]:
        raise CliError("simulate needs --out")
    save_returns(cfg["out"], series, meta)
    return 0


def _surface_analysis(surfaces, series, mats, cfg):
    """Per-maturity fitted skew, implied leverage and local SSR from snapshots."""
    out = []
    if series.dates is None:
        raise DomainError("the return series needs dates to align with the surface")
    for T in mats:
        cm = est.constant_maturity_series(surfaces, T, float(cfg["skew_window"]))
        pos = np.searchsorted(series.dates, cm.dates)
        inside = (pos < series.dates.size) & (series.dates[np.minimum(pos, series.dates.size - 1)] == cm.dates)
        # ATM vols to daily units; returns on the snapshot dates
        atm = np.where(inside, cm.atm_vol / math.sqrt(DAYS), np.nan)
        r = np.where(inside, series.returns[np.minimum(pos, series.dates.size - 1)], np.nan)
        rec = {"maturity_days": T, "mean_skew": float(np.nanmean(cm.skew)) if np.isfinite(cm.skew).any() else None}
        try:
            reg = est.fit_implied_leverage(atm, r)
            rec.update(implied_leverage=reg.slope, implied_leverage_se=reg.stderr, n_pairs=reg.n_obs)
        except SmileLabError as e:
            rec.update(implied_leverage=None, implied_leverage_error=e.code)
        try:
            loc = est.local_ssr(atm, cm.skew, r, int(cfg["ssr_window"]), maturity=T)
            rec.update(local_ssr=loc.mean, local_ssr_windows=loc.n_windows, local_ssr_skipped=loc.n_skipped)
        except SmileLabError as e:
            rec.update(local_ssr=None, local_ssr_error=e.code)
        out.append(rec)
    return out


def cmd_analyze(cfg):
    if not cfg["returns"]:
        raise CliError("analyze needs --returns")
    series = load_returns(cfg["returns"])
    mats = parse_int_list(cfg["maturities"])
    max_lag = max(int(cfg["max_lag"]), max(mats))
    lev = est.leverage_corr(series, max_lag, int(cfg["ema_span"]), cfg["normalization"])
    zeta1 = series.daily_skewness
    per_t = []
    for T in mats:
        b = est.low_moment_skewness(series, T, int(cfg["detrend_span"]))
        per_t.append({
            "maturity_days": T, "beta": b.beta, "beta_se": b.stderr, "prob_positive": b.prob_positive,
            "n_windows": b.n_windows, "overlapping_windows": b.overlapping,
            "skewness_from_leverage": est.skewness_from_leverage(lev.values, zeta1, T),
            "gamma_theoretical": est.gamma_theoretical(lev.values, T),
        })
    report = {
        "meta": _meta("analyze", cfg, [("returns", cfg["returns"]), ("surface", cfg["surface"])]),
        "n_returns": len(series),
        "daily_skewness": zeta1,
        "leverage": {"lags": lev.lags, "values": lev.values, "stderr": lev.stderr,
                     "normalization": lev.normalization, "n_obs": lev.n_obs},
        "maturities": per_t,
    }
    if cfg["surface"]:
        surfaces = load_surface(cfg["surface"])
        report["surface"] = _surface_analysis(surfaces, series, mats, cfg)
    _emit_json(cfg["out"], report)
    return 0


def mc_config(cfg) -> mc_lab.McConfig:
    return mc_lab.McConfig(
        params=model_params(cfg),
        maturities=tuple(parse_int_list(cfg["maturities"])),
        moneyness=tuple(parse_float_list(cfg["moneyness"])),
        n_paths=int(cfg["paths"]),
        seed=int(cfg["seed"]),
        antithetic=bool(cfg["antithetic"]),
        n_batches=int(cfg["batches"]),
        target_se=None if cfg["target_se"] is None else float(cfg["target_se"]),
        shock=cfg["shock"],
        leverage_mode=cfg["leverage_mode"],
    )


def cmd_mc_verify(cfg):
    config = mc_config(cfg)
    result = mc_lab.run(config)
    z = result.zscores()
    report = {
        "meta": _meta("mc-verify", cfg, seed=config.seed),
        **result.to_dict(),
        "summary": {"n_checks": int(z.size), "within_3_se": int(np.sum(np.abs(z) <= 3)),
                    "fraction_within_3_se": float(np.mean(np.abs(z) <= 3)) if z.size else None},
    }
    _emit_json(cfg["out"], report)
    return 0


def cmd_calibrate(cfg):
    if not cfg["returns"]:
        raise CliError("calibrate needs --returns")
    series = load_returns(cfg["returns"])
    cal = est.calibrate_garch(series, int(cfg["max_lag"]), int(cfg["bootstrap"]), int(cfg["seed"]))
    report = {
        "meta": _meta("calibrate", cfg, [("returns", cfg["returns"])], seed=int(cfg["seed"])),
        "params": _params_record(cal.params),
        "stderr": {"v0_daily": cal.stderr["v0"], "v0_annualized": cal.stderr["v0"] * math.sqrt(DAYS),
                   "rho": cal.stderr["rho"], "nu": cal.stderr["nu"]},
        "objective": cal.objective,
        "n_obs": cal.n_obs,
        "max_lag": cal.max_lag,
        "n_bootstrap": cal.n_bootstrap,
        "optimizer_message": cal.message,
    }
    _emit_json(cfg["out"], report)
    return 0


def cmd_report(cfg):
    if not cfg["out_dir"]:
        raise CliError("report needs --out-dir")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    mats = parse_int_list(cfg["maturities"])
    if min(mats) < 2:
        raise DomainError("maturities must be >= 2")
    series = load_returns(cfg["returns"]) if cfg["returns"] else None
    surfaces = load_surface(cfg["surface"]) if cfg["surface"] else None
    if cfg["calibrate"]:
        if series is None:
            raise CliError("--calibrate needs --returns")
        p = est.calibrate_garch(series, n_bootstrap=0).params
    else:
        p = model_params(cfg)
    model = garch.garch_model(p, max(mats) + 1)
    meta = _meta("report", cfg, [("returns", cfg["returns"]), ("surface", cfg["surface"])])
    meta["params"] = _params_record(p)

    beta, lev_th, zeta1 = {}, {}, 0.0
    if series is not None:
        lev = est.leverage_corr(series, max(mats), int(cfg["ema_span"]))
        zeta1 = series.daily_skewness
        for T in mats:
            try:
                beta[T] = est.low_moment_skewness(series, T, int(cfg["detrend_span"]))
            except SmileLabError:
                beta[T] = None
            lev_th[T] = (est.gamma_theoretical(lev.values, T),
                         est.skewness_from_leverage(lev.values, zeta1, T))
    surf = {}
    if surfaces is not None and series is not None:
        surf = {r["maturity_days"]: r for r in _surface_analysis(surfaces, series, mats, cfg)}

    def get(d, T, k):
        r = d.get(T)
        return None if r is None else r.get(k)

    rows = []
    for T in mats:
        b = beta.get(T)
        rows.append([T, fv.skew(model, T), None if b is None else b.beta, None if b is None else b.stderr,
                     get(surf, T, "mean_skew"),
                     lev_th[T][1] / 6.0 if T in lev_th else None])
    write_table(out / "skew.csv", ["maturity_days", "skew_model", "beta", "beta_se", "skew_data",
                                   "skewness_over_6_data"], rows, meta)
    rows = [[T, fv.implied_leverage(model, T), lev_th[T][0] if T in lev_th else None,
             get(surf, T, "implied_leverage"), get(surf, T, "implied_leverage_se")] for T in mats]
    write_table(out / "leverage.csv", ["maturity_days", "gamma_model", "gamma_theoretical",
                                       "gamma_data", "gamma_data_se"], rows, meta)
    rows = [[T, fv.ssr(model, T), fv.ssr_linear(model, T), get(surf, T, "local_ssr")] for T in mats]
    write_table(out / "ssr.csv", ["maturity_days", "ssr_model", "ssr_linear_model", "ssr_data"], rows, meta)
    rows = [[T, fv.correction_factor(model, T), math.sqrt(T / (T - 1))] for T in mats]
    write_table(out / "correction.csv", ["maturity_days", "skewness_over_skew_model",
                                         "sqrt_t_over_t_minus_1"], rows, meta)
    return 0


COMMANDS = {
    "smile": cmd_smile, "ssr": cmd_ssr, "simulate": cmd_simulate, "analyze": cmd_analyze,
    "mc-verify": cmd_mc_verify, "calibrate": cmd_calibrate, "report": cmd_report,
}


def _fail(code: str, message: str, context: dict) -> int:
    sys.stderr.write(json.dumps({"code": code, "message": message, "context": context}, default=str) + "\n")
    return 2 if code == "usage_error" else 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = None
    try:
        ns = build_parser().parse_args(argv)
        command = ns.command
        cfg = resolve_config(command, ns)
        return COMMANDS[command](cfg)
    except SmileLabError as e:
        return _fail(e.code, str(e), {"command": command, "argv": argv})
    except OSError as e:
        return _fail("io_error", str(e), {"command": command, "path": getattr(e, "filename", None)})
    except (ValueError, TypeError, KeyError) as e:
        return _fail("invalid_input", str(e), {"command": command, "argv": argv})


if __name__ == "__main__":
    sys.exit(main())
