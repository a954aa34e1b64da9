"""CSV ingestion and emission.

Files may start with ``#`` comment lines; writers put one ``# {json}``
metadata line there (tool version, resolved config, seed, input hashes).
Headers are matched exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .estimators import ReturnSeries, SmileSurface

RETURN_HEADERS = ("date,close", "date,return")
SURFACE_HEADER = "date,maturity_days,moneyness,implied_vol"
TABLE_DIGITS = 12


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(x, digits: int = TABLE_DIGITS) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{digits}g}"
    return str(x)


def _data_lines(path):
    """Yield ``(line_number, text)`` for non-comment, non-blank lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for k, line in enumerate(fh, start=1):
            s = line.strip()
            if s and not s.startswith("#"):
                yield k, s


def read_metadata(path) -> dict | None:
    """The JSON metadata line of a file written by this package, if any."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                return None
            try:
                return json.loads(line[1:])
            except json.JSONDecodeError:
                continue
    return None


def _parse_dates(raw, lines, path):
    try:
        return np.array(raw, dtype="datetime64[D]")
    except ValueError:
        for s, k in zip(raw, lines):
            try:
                np.datetime64(s, "D")
            except ValueError:
                raise DataFormatError(f"{path}:{k}: bad ISO-8601 date {s!r}") from None
        raise


def _parse_floats(raw, lines, path, what):
    try:
        return np.array(raw, dtype=float)
    except ValueError:
        for s, k in zip(raw, lines):
            try:
                float(s)
            except ValueError:
                raise DataFormatError(f"{path}:{k}: bad {what} {s!r}") from None
        raise


def _check_dates(dates, lines, path):
    step = np.diff(dates)
    dup = np.flatnonzero(step == np.timedelta64(0, "D"))
    if dup.size:
        k = dup[0] + 1
        raise DataFormatError(f"{path}:{lines[k]}: duplicate date {dates[k]}")
    back = np.flatnonzero(step < np.timedelta64(0, "D"))
    if back.size:
        where = ", ".join(f"line {lines[k + 1]} ({dates[k + 1]})" for k in back[:20])
        raise DataFormatError(f"{path}: dates not increasing at {where}")


def load_returns(path) -> ReturnSeries:
    """Read ``date,close`` (log returns are computed) or ``date,return``."""
    rows = _data_lines(path)
    try:
        k0, header = next(rows)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    header = header.replace(" ", "")
    if header not in RETURN_HEADERS:
        raise DataFormatError(f"{path}:{k0}: header must be one of {RETURN_HEADERS}, got {header!r}")
    lines, dates, vals = [], [], []
    for k, s in rows:
        parts = s.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{k}: expected 2 fields, got {len(parts)}")
        lines.append(k)
        dates.append(parts[0].strip())
        vals.append(parts[1].strip())
    d = _parse_dates(dates, lines, path)
    x = _parse_floats(vals, lines, path, header.split(",")[1])
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise DataFormatError(f"{path}:{lines[bad[0]]}: non-finite value")
    _check_dates(d, lines, path)
    if header == "date,close":
        if np.any(x <= 0):
            raise DataFormatError(f"{path}:{lines[int(np.argmax(x <= 0))]}: prices must be positive")
        if x.size < 3:
            raise DataFormatError(f"{path}: need at least 3 prices")
        return ReturnSeries.from_prices(x, d)
    if x.size < 2:
        raise DataFormatError(f"{path}: need at least 2 returns")
    return ReturnSeries(x, d)


def _meta_line(meta: dict | None) -> str:
    return "" if meta is None else "# " + json.dumps(meta, sort_keys=True, default=_json_default) + "\n"


def save_returns(path, series: ReturnSeries, meta: dict | None = None) -> None:
    """Write ``date,return`` with lossless float formatting."""
    if series.dates is None:
        raise DataFormatError("series has no dates")
    body = "\n".join(
        f"{d},{r!r}" for d, r in zip(series.dates.astype(str).tolist(), series.returns.tolist())
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_meta_line(meta))
        fh.write("date,return\n")
        fh.write(body + "\n")


def load_surface(path, convention: str = "market", days_per_year: int = 252) -> list[SmileSurface]:
    """Read ``date,maturity_days,moneyness,implied_vol`` into one snapshot per date.

    Each (date, maturity) group needs at least 3 strikes; vols must be
    positive. Snapshots come back sorted by date.
    """
    rows = _data_lines(path)
    try:
        k0, header = next(rows)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    cols = header.replace(" ", "").split(",")
    want = SURFACE_HEADER.split(",")
    missing = [c for c in want if c not in cols]
    if missing or len(cols) != len(want):
        raise DataFormatError(f"{path}:{k0}: header must be {SURFACE_HEADER!r}; missing {missing}")
    idx = [cols.index(c) for c in want]
    groups = defaultdict(lambda: ([], []))
    for k, s in rows:
        parts = s.split(",")
        if len(parts) != len(want):
            raise DataFormatError(f"{path}:{k}: expected {len(want)} fields, got {len(parts)}")
        date, mat, m, v = (parts[i].strip() for i in idx)
        try:
            d = np.datetime64(date, "D")
        except ValueError:
            raise DataFormatError(f"{path}:{k}: bad ISO-8601 date {date!r}") from None
        try:
            T = float(mat)
            mf, vf = float(m), float(v)
        except ValueError:
            raise DataFormatError(f"{path}:{k}: non-numeric field") from None
        if not (math.isfinite(T) and T == int(T) and T >= 1):
            raise DataFormatError(f"{path}:{k}: maturity_days must be a positive integer, got {mat!r}")
        if not (math.isfinite(mf) and math.isfinite(vf)):
            raise DataFormatError(f"{path}:{k}: non-finite value")
        if vf <= 0:
            raise DataFormatError(f"{path}:{k}: implied_vol must be positive, got {vf}")
        g = groups[(d, int(T))]
        g[0].append(mf)
        g[1].append(vf)
    if not groups:
        raise DataFormatError(f"{path}: no quotes")
    by_date = defaultdict(dict)
    for (d, T), (m, v) in groups.items():
        if len(m) < 3:
            raise DataFormatError(f"{path}: {len(m)} strikes at {d}, T={T}; need at least 3")
        if len(set(m)) != len(m):
            raise DataFormatError(f"{path}: repeated moneyness at {d}, T={T}")
        by_date[d][T] = (m, v)
    return [SmileSurface(d, by_date[d], convention, days_per_year) for d in sorted(by_date)]


def save_surface(path_or_fh, surfaces, meta: dict | None = None, digits: int = TABLE_DIGITS) -> None:
    lines = [_meta_line(meta), SURFACE_HEADER + "\n"]
    for s in surfaces:
        d = "" if s.date is None else str(s.date)
        for T in s.maturities:
            for m, v in zip(*s.quotes[T]):
                lines.append(f"{d},{T},{fmt(m, digits)},{fmt(v, digits)}\n")
    text = "".join(lines)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        Path(path_or_fh).write_text(text, encoding="utf-8")


def write_table(path_or_fh, columns: list[str], rows, meta: dict | None = None) -> None:
    """CSV with a metadata line; floats get 12 significant digits."""
    lines = [_meta_line(meta), ",".join(columns) + "\n"]
    lines += [",".join(fmt(x) for x in row) + "\n" for row in rows]
    text = "".join(lines)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        Path(path_or_fh).write_text(text, encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.datetime64,)):
        return str(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def rounded(obj, digits: int = TABLE_DIGITS):
    """Recursively round floats to ``digits`` significant digits; NaN and inf become None."""
    if isinstance(obj, dict):
        return {str(k): rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{digits}g}") if math.isfinite(x) else None
    if isinstance(obj, np.datetime64):
        return str(obj)
    return obj


def dump_json(obj, path_or_fh) -> None:
    text = json.dumps(rounded(obj), indent=2, sort_keys=True, default=_json_default) + "\n"
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        Path(path_or_fh).write_text(text, encoding="utf-8")
