"""CSV ingestion of price/return series and CSV/JSON writers for results."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import ParseError

MIN_PRICE_ROWS = 101


@dataclass
class ReturnSeries:
    dates: list[str]
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def _is_header(row) -> bool:
    try:
        float(row[1])
        return False
    except (ValueError, IndexError):
        return True


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Rows of ``date,value``; an optional header line is skipped.

    Dates must be ISO-8601 and strictly increasing; values finite.
    """
    dates, vals, stamps = [], [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and _is_header(row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}: row {lineno}: expected 2 fields (date,value), got {len(row)}")
            d, v = row[0].strip(), row[1].strip()
            try:
                stamp = datetime.fromisoformat(d)
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: bad ISO-8601 date {d!r}") from None
            try:
                x = float(v)
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: bad number {v!r}") from None
            if not np.isfinite(x):
                raise ParseError(f"{path}: row {lineno}: non-finite value {v!r}")
            if stamps and not stamp > stamps[-1]:
                raise ParseError(f"{path}: row {lineno}: date {d} is not after {dates[-1]}")
            dates.append(d)
            vals.append(x)
            stamps.append(stamp)
    return dates, np.array(vals, dtype=float)


def load_returns(path, mode: str = "returns") -> ReturnSeries:
    """Load a return series; in ``prices`` mode returns are ``100 ln(P_t / P_{t-1})``
    dated at the later observation."""
    if mode not in ("prices", "returns"):
        raise ParseError(f"mode must be 'prices' or 'returns', got {mode!r}")
    dates, vals = read_table(path)
    if mode == "returns":
        if vals.size == 0:
            raise ParseError(f"{path}: no data rows")
        return ReturnSeries(dates, vals)
    if vals.size < MIN_PRICE_ROWS:
        raise ParseError(f"{path}: price mode needs at least {MIN_PRICE_ROWS} rows, got {vals.size}")
    bad = np.flatnonzero(~(vals > 0))
    if bad.size:
        raise ParseError(f"{path}: data row {bad[0] + 1}: price must be positive, got {vals[bad[0]]}")
    return ReturnSeries(dates[1:], 100.0 * np.diff(np.log(vals)))


def fmt(v) -> str:
    """At least 10 significant digits for floats; lowercase booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_qcm(path, series, dates=None) -> None:
    dates = dates if dates is not None else [""] * len(series)
    rows = zip(series.t, dates, series.h, series.s, series.k, series.constraint_ok,
               [series.n0] * len(series))
    write_csv(path, ["t", "date", "h", "s", "k", "constraint_ok", "n0"], rows)


def read_qcm(path) -> dict:
    """Inverse of ``write_qcm``: arrays keyed by column name."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        rows = list(rd)
    if not rows or not {"h", "s", "k"} <= set(rows[0]):
        raise ParseError(f"{path}: expected a QCM table with h, s, k columns")
    try:
        return {
            "t": np.array([int(r["t"]) for r in rows]),
            "date": [r.get("date", "") for r in rows],
            "h": np.array([float(r["h"]) for r in rows]),
            "s": np.array([float(r["s"]) for r in rows]),
            "k": np.array([float(r["k"]) for r in rows]),
        }
    except (ValueError, KeyError) as exc:
        raise ParseError(f"{path}: malformed QCM table: {exc}") from None


def write_dq_report(path, records) -> None:
    rows = ((r.family, r.alpha, r.statistic, r.pvalue, r.degenerate, r.failed, r.kept) for r in records)
    write_csv(path, ["family", "alpha", "statistic", "pvalue", "degenerate", "failed", "kept"], rows)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
