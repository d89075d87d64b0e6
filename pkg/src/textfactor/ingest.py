"""Analyst-report parsing, per-stock grouping and active-return labeling."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Sequence

from .calendar import (
    CalendarError,
    PriceTable,
    TradingCalendar,
    _read_text,
    active_return_matrix,
    next_trading_day,
)

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("stock_id", "release_time", "title", "abstract", "report_id")
DEFAULT_WINDOW = 3
PRIMARY_HORIZON = 20


class MalformedDatasetError(ValueError):
    """More than half of the input lines could not be parsed."""


@dataclass(frozen=True)
class Report:
    stock_id: str
    release_time: datetime
    title: str
    abstract: str
    report_id: str

    def to_json(self) -> dict:
        t = self.release_time
        stamp = t.strftime("%Y-%m-%d") if t.time() == datetime.min.time() else t.strftime(
            "%Y-%m-%d %H:%M:%S"
        )
        return {
            "stock_id": self.stock_id,
            "release_time": stamp,
            "title": self.title,
            "abstract": self.abstract,
            "report_id": self.report_id,
        }


@dataclass(frozen=True)
class ReportGroup:
    stock_id: str
    members: tuple[Report, ...]
    anchor_date: date

    @property
    def title(self) -> str:
        return "\n".join(r.title for r in self.members)

    @property
    def abstract(self) -> str:
        return "\n".join(r.abstract for r in self.members)

    @property
    def text(self) -> str:
        return "\n".join(part for r in self.members for part in (r.title, r.abstract))

    @property
    def report_ids(self) -> list[str]:
        return [r.report_id for r in self.members]


@dataclass
class LabeledSample:
    group: ReportGroup
    labels: dict[int, float]
    # last trading day of each label's measurement window
    label_end: dict[int, date] = field(default_factory=dict)

    @property
    def stock_id(self) -> str:
        return self.group.stock_id

    @property
    def anchor_date(self) -> date:
        return self.group.anchor_date

    @property
    def text(self) -> str:
        return self.group.text

    def to_json(self) -> dict:
        return {
            "stock_id": self.stock_id,
            "anchor_date": self.anchor_date.isoformat(),
            "horizons": {str(h): v for h, v in sorted(self.labels.items())},
            "text": self.text,
            "report_ids": self.group.report_ids,
        }


def parse_release_time(value: str) -> datetime:
    value = value.strip()
    if len(value) == 10:
        return datetime.strptime(value, "%Y-%m-%d")
    return datetime.strptime(value, "%Y-%m-%d %H:%M:%S")


def parse_reports(source) -> tuple[list[Report], list[tuple[int, str]]]:
    """Parse JSON-lines reports.

    Returns ``(reports, rejects)``; each reject is ``(line_number, reason)``
    with 1-based line numbers. Blank lines are ignored.
    """
    text = _read_text(source)
    reports: list[Report] = []
    rejects: list[tuple[int, str]] = []
    seen: set[str] = set()
    n_lines = 0
    for lineno, line in enumerate(io.StringIO(text), start=1):
        if not line.strip():
            continue
        n_lines += 1
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not a JSON object")
            missing = [k for k in REQUIRED_KEYS if k not in obj]
            if missing:
                raise ValueError(f"missing keys {missing}")
            title = str(obj["title"])
            if not title.strip():
                raise ValueError("empty title")
            rid = str(obj["report_id"])
            if rid in seen:
                raise ValueError(f"duplicate report_id {rid}")
            rep = Report(
                stock_id=str(obj["stock_id"]),
                release_time=parse_release_time(str(obj["release_time"])),
                title=title,
                abstract=str(obj["abstract"] or ""),
                report_id=rid,
            )
        except ValueError as exc:
            rejects.append((lineno, str(exc)))
            continue
        seen.add(rid)
        reports.append(rep)
    if n_lines and len(rejects) * 2 > n_lines:
        raise MalformedDatasetError(f"{len(rejects)} of {n_lines} lines rejected")
    return reports, rejects


def write_reports(reports: Iterable[Report], fp) -> None:
    for r in reports:
        fp.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=False) + "\n")


def group_reports(
    reports: Sequence[Report], window: int = DEFAULT_WINDOW, cal: TradingCalendar | None = None
) -> list[ReportGroup]:
    """Chain each stock's reports into groups of adjacent releases.

    A report joins the current group when its release date is at most
    ``window`` trading days after the previous member's release date.
    Non-trading release dates count from the following session. Groups whose
    anchor falls past the calendar end are dropped with a warning.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if cal is None:
        raise ValueError("a trading calendar is required")
    by_stock: dict[str, list[Report]] = {}
    for r in reports:
        by_stock.setdefault(r.stock_id, []).append(r)

    groups: list[ReportGroup] = []
    for stock_id in sorted(by_stock):
        members = sorted(by_stock[stock_id], key=lambda r: (r.release_time, r.report_id))
        chains: list[list[Report]] = []
        prev_pos = None
        for r in members:
            pos = cal.position(r.release_time)
            if prev_pos is not None and pos - prev_pos <= window:
                chains[-1].append(r)
            else:
                chains.append([r])
            prev_pos = pos
        for chain in chains:
            try:
                anchor = next_trading_day(cal, chain[-1].release_time)
            except CalendarError:
                logger.warning(
                    "dropping group of %d report(s) for %s: released after calendar end",
                    len(chain),
                    stock_id,
                )
                continue
            groups.append(ReportGroup(stock_id, tuple(chain), anchor))
    groups.sort(key=lambda g: (g.stock_id, g.anchor_date))
    return groups


def label_groups(
    groups: Sequence[ReportGroup],
    prices: PriceTable,
    cal: TradingCalendar | None = None,
    horizons: Sequence[int] = (5, 10, 20, 40, 60),
) -> list[LabeledSample]:
    """Attach forward active-return labels to each group.

    The market is every stock in ``prices``. Horizons whose endpoints are
    unpriced are left out of a sample's label map; samples with no labels at
    all are dropped.
    """
    if not horizons:
        raise ValueError("at least one horizon required")
    cal = cal or prices.calendar
    if cal != prices.calendar:
        raise ValueError("price table is aligned to a different calendar")
    active = {h: active_return_matrix(prices, h)[0] for h in horizons}
    out: list[LabeledSample] = []
    missing_stocks: set[str] = set()
    for g in groups:
        if g.stock_id not in prices:
            missing_stocks.add(g.stock_id)
            continue
        j = prices.column(g.stock_id)
        i = cal.index(g.anchor_date)
        labels: dict[int, float] = {}
        ends: dict[int, date] = {}
        for h in horizons:
            if i + h >= len(cal):
                continue
            v = active[h][i, j]
            if math.isfinite(v):
                labels[h] = float(v)
                ends[h] = cal[i + h]
        if labels:
            out.append(LabeledSample(g, labels, ends))
    for s in sorted(missing_stocks):
        logger.warning("stock %s has no prices; its groups were skipped", s)
    out.sort(key=lambda s: (s.stock_id, s.anchor_date))
    return out


def write_samples(samples: Iterable[LabeledSample], fp) -> None:
    for s in samples:
        fp.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")

