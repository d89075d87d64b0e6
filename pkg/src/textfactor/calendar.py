"""Trading calendar arithmetic and adjusted-close return computation.

Prices live in a dense ``PriceTable`` (dates x stocks, NaN where a stock has
no quote). The scalar functions ``horizon_return``/``market_return`` work on
``PriceSeries`` views and are the reference path; ``active_return_matrix``
is the vectorized path used for bulk labeling.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_HORIZONS = (5, 10, 20, 40, 60)


class CalendarError(ValueError):
    """Raised for out-of-range calendar lookups."""


class MissingPriceError(KeyError):
    """Raised when a price is missing at a return endpoint."""


class EmptyUniverseError(ValueError):
    """Raised when no stock has valid prices at both endpoints."""


def _as_date(value: date | datetime | str) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value)[:10])


class TradingCalendar:
    """Ordered, duplicate-free sequence of trading dates."""

    def __init__(self, dates: Iterable[date | str]):
        ds = [_as_date(d) for d in dates]
        for a, b in zip(ds, ds[1:]):
            if not a < b:
                raise ValueError(f"calendar not strictly increasing at {a} -> {b}")
        self.dates: tuple[date, ...] = tuple(ds)
        self._pos = {d: i for i, d in enumerate(self.dates)}

    def __len__(self) -> int:
        return len(self.dates)

    def __iter__(self):
        return iter(self.dates)

    def __getitem__(self, i: int) -> date:
        return self.dates[i]

    def __contains__(self, d: object) -> bool:
        return d in self._pos

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TradingCalendar) and self.dates == other.dates

    def index(self, d: date) -> int:
        """Position of trading day ``d``; raises CalendarError if not a trading day."""
        try:
            return self._pos[d]
        except KeyError:
            raise CalendarError(f"{d} is not a trading day") from None

    def position(self, d: date | datetime) -> int:
        """Position of the first trading day on or after ``d``.

        Equals ``len(self)`` when ``d`` is past the last trading day.
        """
        return bisect.bisect_left(self.dates, _as_date(d))

    def offset(self, d: date, n: int) -> date:
        """Trading day ``n`` sessions after trading day ``d``."""
        j = self.index(d) + n
        if not 0 <= j < len(self.dates):
            raise CalendarError(f"{d} + {n} trading days is outside the calendar")
        return self.dates[j]

    def month_starts(self, start: date | None = None, end: date | None = None) -> list[date]:
        """First trading day of each calendar month within ``[start, end]``."""
        out: list[date] = []
        prev = None
        for d in self.dates:
            key = (d.year, d.month)
            if key != prev:
                prev = key
                if (start is None or d >= start) and (end is None or d <= end):
                    out.append(d)
        return out


def next_trading_day(cal: TradingCalendar, ts: date | datetime | str) -> date:
    """Earliest trading day strictly after the calendar day of ``ts``.

    A report released at any time on day ``d`` (trading day or not) becomes
    actionable on the first session after ``d``.
    """
    if not cal.dates:
        raise CalendarError("empty calendar")
    d = _as_date(ts)
    j = bisect.bisect_right(cal.dates, d)
    if j >= len(cal.dates):
        raise CalendarError(f"no trading day after {d} (calendar ends {cal.dates[-1]})")
    return cal.dates[j]


@dataclass(frozen=True)
class PriceSeries:
    stock_id: str
    quotes: Mapping[date, float]

    def __post_init__(self):
        for d, p in self.quotes.items():
            if not (p > 0 and math.isfinite(p)):
                raise ValueError(f"{self.stock_id}: non-positive price {p} on {d}")

    def price(self, d: date) -> float:
        try:
            return self.quotes[d]
        except KeyError:
            raise MissingPriceError(f"{self.stock_id} has no price on {d}") from None


def horizon_return(ps: PriceSeries, start: date, h: int, cal: TradingCalendar) -> float:
    """Simple return from ``start`` to ``start + h`` trading days."""
    end = cal.offset(start, h)
    return ps.price(end) / ps.price(start) - 1.0


def market_return(
    universe: Sequence[PriceSeries], start: date, h: int, cal: TradingCalendar
) -> float:
    """Equal-weight mean horizon return over stocks quoted at both endpoints.

    Summation runs in stock-id order so the result does not depend on the
    order of ``universe``.
    """
    end = cal.offset(start, h)
    total = 0.0
    n = 0
    for ps in sorted(universe, key=lambda s: s.stock_id):
        p0 = ps.quotes.get(start)
        p1 = ps.quotes.get(end)
        if p0 is None or p1 is None:
            continue
        total += p1 / p0 - 1.0
        n += 1
    if n == 0:
        raise EmptyUniverseError(f"no stock priced on both {start} and {end}")
    return total / n


def active_return(stock_ret: float, mkt_ret: float) -> float:
    return stock_ret - mkt_ret


@dataclass
class PriceTable:
    """Dense adjusted-close matrix aligned to a calendar.

    ``values[i, j]`` is the price of ``stock_ids[j]`` on ``calendar[i]``;
    NaN marks a suspension or a date outside the stock's listing.
    """

    calendar: TradingCalendar
    stock_ids: tuple[str, ...]
    values: np.ndarray
    _col: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.calendar), len(self.stock_ids)):
            raise ValueError("price matrix shape does not match calendar x stocks")
        if list(self.stock_ids) != sorted(self.stock_ids):
            raise ValueError("stock_ids must be sorted")
        finite = self.values[np.isfinite(self.values)]
        if (finite <= 0).any():
            raise ValueError("all prices must be strictly positive")
        self._col = {s: j for j, s in enumerate(self.stock_ids)}

    def __contains__(self, stock_id: object) -> bool:
        return stock_id in self._col

    def column(self, stock_id: str) -> int:
        return self._col[stock_id]

    def series(self, stock_id: str) -> PriceSeries:
        col = self.values[:, self._col[stock_id]]
        quotes = {self.calendar[i]: float(p) for i, p in enumerate(col) if np.isfinite(p)}
        return PriceSeries(stock_id, quotes)

    def universe(self) -> list[PriceSeries]:
        return [self.series(s) for s in self.stock_ids]

    @classmethod
    def from_series(
        cls, series: Iterable[PriceSeries], cal: TradingCalendar | None = None
    ) -> "PriceTable":
        series = sorted(series, key=lambda s: s.stock_id)
        if cal is None:
            cal = TradingCalendar(sorted({d for s in series for d in s.quotes}))
        values = np.full((len(cal), len(series)), np.nan)
        for j, s in enumerate(series):
            for d, p in s.quotes.items():
                if d not in cal:
                    raise CalendarError(f"{s.stock_id} quoted on non-trading day {d}")
                values[cal.index(d), j] = p
        return cls(cal, tuple(s.stock_id for s in series), values)

    def horizon_returns(self, h: int) -> np.ndarray:
        """Matrix of ``h``-day forward returns; row ``i`` starts at ``calendar[i]``.

        Rows whose end date falls off the calendar are NaN.
        """
        out = np.full_like(self.values, np.nan)
        if h < len(self.calendar):
            out[:-h] = self.values[h:] / self.values[:-h] - 1.0
        return out

    def to_csv(self, fp) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["date", "stock_id", "adj_close"])
        for i, d in enumerate(self.calendar):
            row = self.values[i]
            for j, s in enumerate(self.stock_ids):
                if np.isfinite(row[j]):
                    w.writerow([d.isoformat(), s, f"{row[j]:.8f}"])


def active_return_matrix(table: PriceTable, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward ``h``-day active returns for every (date, stock).

    Returns ``(active, market)`` where ``market[i]`` is the equal-weight mean
    over stocks priced at both endpoints (NaN if there are none).
    """
    rets = table.horizon_returns(h)
    valid = np.isfinite(rets)
    count = valid.sum(axis=1)
    total = np.where(valid, rets, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        market = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return rets - market[:, None], market


def read_prices_csv(source, calendar: TradingCalendar | None = None) -> PriceTable:
    """Parse a ``date,stock_id,adj_close`` CSV into a PriceTable.

    ``source`` is a path or a text/binary stream. Without an explicit
    calendar, it is the sorted set of distinct dates in the file.
    """
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
        "date",
        "stock_id",
        "adj_close",
    ]:
        raise ValueError("price CSV header must be 'date,stock_id,adj_close'")
    quotes: dict[str, dict[date, float]] = {}
    for row in reader:
        d = date.fromisoformat(row["date"].strip())
        quotes.setdefault(row["stock_id"].strip(), {})[d] = float(row["adj_close"])
    series = [PriceSeries(s, q) for s, q in quotes.items()]
    return PriceTable.from_series(series, calendar)


def read_calendar_csv(source) -> TradingCalendar:
    """Read a one-column ``date`` CSV."""
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or rows[0] != ["date"]:
        raise ValueError("calendar CSV header must be 'date'")
    return TradingCalendar(date.fromisoformat(r[0].strip()) for r in rows[1:] if r)


def _read_text(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data
