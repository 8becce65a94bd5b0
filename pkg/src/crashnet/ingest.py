"""Loading, validating, aligning and slicing daily close prices."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

LONG_HEADER = ("date", "symbol", "close")


@dataclass(frozen=True)
class DateWindow:
    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise DataError(f"window start {self.start} is after end {self.end}")

    def __contains__(self, d: date) -> bool:
        return self.start <= d <= self.end

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1

    @classmethod
    def parse(cls, text: str) -> "DateWindow":
        """Parse ``YYYY-MM-DD:YYYY-MM-DD`` (also accepts ``..`` as separator)."""
        sep = ".." if ".." in text else ":"
        try:
            a, b = text.split(sep)
            return cls(date.fromisoformat(a.strip()), date.fromisoformat(b.strip()))
        except ValueError as exc:
            raise DataError(f"bad date window {text!r}: {exc}") from None

    def __str__(self) -> str:
        return f"{self.start.isoformat()}:{self.end.isoformat()}"


@dataclass(frozen=True, eq=False)
class PriceSeries:
    symbol: str
    dates: tuple
    closes: np.ndarray

    def __post_init__(self):
        closes = np.asarray(self.closes, dtype=np.float64)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "closes", closes)
        if len(self.dates) != closes.shape[0]:
            raise DataError(f"{self.symbol}: {len(self.dates)} dates but {closes.shape[0]} closes")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"{self.symbol}: dates not strictly increasing at {b}")
        bad = ~np.isfinite(closes) | (closes <= 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"{self.symbol}: invalid close {closes[i]!r} on {self.dates[i]}")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class PricePanel:
    dates: tuple
    symbols: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "values", values)
        T, N = len(self.dates), len(self.symbols)
        if values.shape != (T, N):
            raise DataError(f"panel values have shape {values.shape}, expected {(T, N)}")
        if N < 2:
            raise DataError(f"panel needs at least 2 assets, got {N}")
        if T < 3:
            raise DataError(f"panel needs at least 3 dates, got {T}")
        if len(set(self.symbols)) != N:
            raise DataError("duplicate symbols in panel")
        if not (np.isfinite(values).all() and (values > 0).all()):
            raise DataError("panel contains missing or non-positive closes")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"panel dates not strictly increasing at {b}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def full_range(self) -> DateWindow:
        return DateWindow(self.dates[0], self.dates[-1])

    def series(self, symbol: str) -> PriceSeries:
        try:
            j = self.symbols.index(symbol)
        except ValueError:
            raise DataError(f"symbol {symbol!r} not in panel") from None
        return PriceSeries(symbol, self.dates, self.values[:, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.symbols == other.symbols
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class MissingPolicy:
    """``drop_asset`` drops any asset lacking a date; ``forward_fill`` carries
    the last close over gaps of at most ``max_gap`` consecutive dates."""

    kind: str = "drop_asset"
    max_gap: int = 0

    def __post_init__(self):
        if self.kind not in ("drop_asset", "forward_fill"):
            raise DataError(f"unknown missing-data policy {self.kind!r}")
        if self.kind == "forward_fill" and self.max_gap < 1:
            raise DataError("forward_fill needs max_gap >= 1")

    @classmethod
    def parse(cls, text: str) -> "MissingPolicy":
        text = text.strip()
        if text == "drop_asset":
            return cls()
        if text.startswith("forward_fill"):
            arg = text[len("forward_fill"):].strip("():= ")
            return cls("forward_fill", int(arg) if arg else 1)
        raise DataError(f"unknown missing-data policy {text!r}")

    def __str__(self) -> str:
        return self.kind if self.kind == "drop_asset" else f"forward_fill({self.max_gap})"


@dataclass
class AlignmentReport:
    kept: list = field(default_factory=list)
    dropped: dict = field(default_factory=dict)
    filled: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kept": list(self.kept), "dropped": dict(self.dropped), "filled": dict(self.filled)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: unparsable date {text!r}") from None


def _parse_close(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: unparsable number {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite close {text!r}")
    return value


def _detect_layout(header: Sequence[str]) -> str:
    return "long" if tuple(h.strip().lower() for h in header) == LONG_HEADER else "wide"


def load_price_csv(path, layout: str | None = None) -> list[PriceSeries]:
    """Read a long (``date,symbol,close``) or wide (``date,SYM1,SYM2,...``)
    CSV file into one :class:`PriceSeries` per symbol, sorted by symbol.

    Empty cells in a wide file mean "no observation". ``layout=None``
    picks the layout from the header.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        layout = layout or _detect_layout(header)
        obs: dict[str, dict[date, float]] = {}
        if layout == "long":
            if tuple(h.strip().lower() for h in header) != LONG_HEADER:
                raise DataError(f"{path}: long layout needs header date,symbol,close")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                where = f"{path}:{lineno}"
                if len(row) != 3:
                    raise DataError(f"{where}: expected 3 fields, got {len(row)}")
                d = _parse_date(row[0], where)
                sym = row[1].strip()
                value = _parse_close(row[2], where)
                per = obs.setdefault(sym, {})
                if d in per:
                    raise DataError(f"{where}: duplicate row for ({d}, {sym})")
                per[d] = value
        elif layout == "wide":
            if len(header) < 2 or header[0].strip().lower() != "date":
                raise DataError(f"{path}: wide layout needs header date,<sym1>,...")
            symbols = [h.strip() for h in header[1:]]
            if len(set(symbols)) != len(symbols):
                raise DataError(f"{path}: duplicate symbol columns")
            for sym in symbols:
                obs[sym] = {}
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                where = f"{path}:{lineno}"
                if len(row) != len(header):
                    raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
                d = _parse_date(row[0], where)
                for sym, cell in zip(symbols, row[1:]):
                    if not cell.strip():
                        continue
                    if d in obs[sym]:
                        raise DataError(f"{where}: duplicate row for ({d}, {sym})")
                    obs[sym][d] = _parse_close(cell, where)
        else:
            raise DataError(f"unknown layout {layout!r}")

    out = []
    for sym in sorted(obs):
        per = obs[sym]
        if not per:
            continue
        dates = sorted(per)
        closes = np.array([per[d] for d in dates])
        bad = np.flatnonzero(closes <= 0)
        if bad.size:
            raise DataError(f"{path}: non-positive close for {sym} on {dates[bad[0]]}")
        out.append(PriceSeries(sym, dates, closes))
    return out


def load_many(paths: Iterable, layout: str | None = None) -> list[PriceSeries]:
    merged: dict[str, PriceSeries] = {}
    for p in paths:
        for s in load_price_csv(p, layout):
            if s.symbol in merged:
                raise DataError(f"symbol {s.symbol!r} appears in more than one input file")
            merged[s.symbol] = s
    return [merged[k] for k in sorted(merged)]


def align_panel(
    series: Sequence[PriceSeries],
    window: DateWindow | None = None,
    policy: MissingPolicy | None = None,
    report: AlignmentReport | None = None,
) -> PricePanel:
    """Put several series on a common date axis inside ``window``.

    The candidate axis is the union of observed dates in the window. Assets
    that cannot cover it under ``policy`` are dropped and listed in
    ``report.dropped``.
    """
    policy = policy or MissingPolicy()
    report = report if report is not None else AlignmentReport()
    if len(series) < 2:
        raise DataError(f"need at least 2 series to align, got {len(series)}")

    def in_window(d):
        return window is None or d in window

    axis = sorted({d for s in series for d in s.dates if in_window(d)})
    if not axis:
        raise DataError("no observations inside the requested window")
    pos = {d: i for i, d in enumerate(axis)}

    columns, symbols = [], []
    for s in sorted(series, key=lambda s: s.symbol):
        col = np.full(len(axis), np.nan)
        for d, v in zip(s.dates, s.closes):
            if d in pos:
                col[pos[d]] = v
        missing = np.isnan(col)
        if not missing.any():
            columns.append(col)
            symbols.append(s.symbol)
            continue
        if policy.kind == "drop_asset":
            report.dropped[s.symbol] = f"missing {int(missing.sum())} of {len(axis)} dates"
            continue
        reason = _forward_fill(col, policy.max_gap)
        if reason:
            report.dropped[s.symbol] = reason
            continue
        report.filled[s.symbol] = int(missing.sum())
        columns.append(col)
        symbols.append(s.symbol)

    report.kept = list(symbols)
    if len(symbols) < 2:
        raise DataError(f"only {len(symbols)} asset(s) survive alignment: {report.dropped}")
    if len(axis) < 3:
        raise DataError(f"aligned date axis has only {len(axis)} dates")
    return PricePanel(axis, symbols, np.column_stack(columns))


def _forward_fill(col: np.ndarray, max_gap: int) -> str | None:
    """Fill NaN runs in place; return a drop reason or None."""
    if np.isnan(col[0]):
        return "no observation at start of window to carry forward"
    run = 0
    for i in range(1, col.shape[0]):
        if np.isnan(col[i]):
            run += 1
            if run > max_gap:
                return f"gap longer than {max_gap} dates ending after {i}"
            col[i] = col[i - 1]
        else:
            run = 0
    return None


def slice_period(panel: PricePanel, window: DateWindow) -> PricePanel:
    idx = [i for i, d in enumerate(panel.dates) if d in window]
    if not idx:
        raise DataError(
            f"window {window} does not overlap panel range {panel.full_range()}"
        )
    lo, hi = idx[0], idx[-1] + 1
    return PricePanel(panel.dates[lo:hi], panel.symbols, panel.values[lo:hi])


def write_wide_csv(panel: PricePanel, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.symbols])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([d.isoformat(), *(repr(float(v)) for v in row)])
    return path


def date_range(start: date, days: int) -> list[date]:
    return [start + timedelta(days=i) for i in range(days)]
