"""Monthly top-k equal-weight portfolios and return/risk/Sharpe metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .calendar import PriceTable, TradingCalendar
from .evaluation import FactorPanel

VALIDITY_WINDOW = 20
MONTHS_PER_YEAR = 12
STRATEGY_COLUMNS = ("first_model", "mean_combine", "power_combine", "concat_combine")
METRIC_FILES = {
    "accumulated_final": "returns_by_k.csv",
    "risk": "risk_by_k.csv",
    "sharpe": "sharpe_by_k.csv",
}


class InsufficientHistoryError(ValueError):
    pass


def latest_scores(
    panel: FactorPanel, d: date, cal: TradingCalendar, validity_window: int = VALIDITY_WINDOW
) -> dict[str, float]:
    """Each stock's most recent score dated within ``validity_window`` sessions up to ``d``.

    A score dated on ``d`` itself is usable: it was produced from reports
    released on an earlier day.
    """
    now = cal.position(d)
    best: dict[str, tuple[int, float]] = {}
    for (sd, stock), v in panel.entries.items():
        age = now - cal.position(sd)
        if 0 <= age < validity_window:
            prev = best.get(stock)
            if prev is None or age < prev[0]:
                best[stock] = (age, v)
    return {s: v for s, (_, v) in best.items()}


def top_k(scores: Mapping[str, float], k: int) -> list[str]:
    """Highest ``k`` scores; equal scores are ordered by stock id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sorted(scores, key=lambda s: (-scores[s], s))[:k]


def select_top_k(
    panel: FactorPanel,
    d: date,
    k: int,
    validity_window: int = VALIDITY_WINDOW,
    cal: TradingCalendar | None = None,
) -> list[str]:
    if cal is None:
        raise ValueError("a trading calendar is required")
    return top_k(latest_scores(panel, d, cal, validity_window), k)


@dataclass
class PortfolioLedger:
    rebalance_dates: list[date] = field(default_factory=list)
    exit_dates: list[date] = field(default_factory=list)
    holdings: list[list[tuple[str, float]]] = field(default_factory=list)
    monthly_returns: list[float] = field(default_factory=list)
    accumulated: list[float] = field(default_factory=list)

    @classmethod
    def from_returns(cls, monthly_returns: Sequence[float]) -> "PortfolioLedger":
        r = [float(x) for x in monthly_returns]
        return cls(monthly_returns=r, accumulated=np.cumprod(1.0 + np.asarray(r)).tolist())

    @classmethod
    def from_accumulated(cls, accumulated: Sequence[float], start: float = 1.0) -> "PortfolioLedger":
        """Rebuild monthly returns from an accumulated-value series."""
        acc = np.asarray(accumulated, dtype=float)
        prev = np.concatenate([[start], acc[:-1]])
        return cls(monthly_returns=(acc / prev - 1.0).tolist(), accumulated=acc.tolist())


@dataclass
class MetricsReport:
    accumulated_final: float
    annualized_return: float
    risk: float
    # None when risk is zero
    sharpe: float | None
    n_months: int


def holding_periods(
    cal: TradingCalendar, start: date, end: date
) -> list[tuple[date, date]]:
    """(rebalance, exit) pairs: month starts in ``[start, end]``, each held to the next month start."""
    all_starts = cal.month_starts()
    periods = []
    for m, r in enumerate(all_starts):
        if r < start or r > end:
            continue
        exit_ = all_starts[m + 1] if m + 1 < len(all_starts) else cal[-1]
        if exit_ > r:
            periods.append((r, exit_))
    return periods


def _exit_price(col: np.ndarray, i0: int, i1: int) -> float:
    window = col[i0 : i1 + 1]
    ok = np.flatnonzero(np.isfinite(window))
    return float(window[ok[-1]])


def simulate(
    panel: FactorPanel,
    prices: PriceTable,
    cal: TradingCalendar | None,
    k: int,
    test_window: tuple[date, date],
    validity_window: int = VALIDITY_WINDOW,
    _score_cache: dict | None = None,
) -> PortfolioLedger:
    """Rebalance into the top ``k`` scored stocks on each month's first session.

    Only stocks priced on the rebalance day can be bought. A holding suspended
    before the exit day is valued at its last price inside the month. Months
    with nothing to buy stay in cash.
    """
    cal = cal or prices.calendar
    if prices.values.size == 0 or not np.isfinite(prices.values).any():
        raise ValueError("price table is empty")
    periods = holding_periods(cal, *test_window)
    ledger = PortfolioLedger()
    acc = 1.0
    for r, e in periods:
        i0, i1 = cal.index(r), cal.index(e)
        if _score_cache is not None and r in _score_cache:
            scores = _score_cache[r]
        else:
            scores = latest_scores(panel, r, cal, validity_window)
            scores = {
                s: v
                for s, v in scores.items()
                if s in prices and np.isfinite(prices.values[i0, prices.column(s)])
            }
            if _score_cache is not None:
                _score_cache[r] = scores
        picks = top_k(scores, k) if scores else []
        rets = []
        for s in picks:
            col = prices.values[:, prices.column(s)]
            rets.append(_exit_price(col, i0, i1) / col[i0] - 1.0)
        month = math.fsum(rets) / len(rets) if rets else 0.0
        acc *= 1.0 + month
        ledger.rebalance_dates.append(r)
        ledger.exit_dates.append(e)
        ledger.holdings.append([(s, 1.0 / len(picks)) for s in picks])
        ledger.monthly_returns.append(month)
        ledger.accumulated.append(acc)
    return ledger


def metrics(ledger: PortfolioLedger | Sequence[float]) -> MetricsReport:
    """Annualized return (mean x 12), risk (sample std x sqrt 12) and their ratio."""
    if not isinstance(ledger, PortfolioLedger):
        ledger = PortfolioLedger.from_returns(ledger)
    r = np.asarray(ledger.monthly_returns, dtype=float)
    if len(r) < 2:
        raise InsufficientHistoryError("need at least two monthly returns")
    ann = float(r.mean()) * MONTHS_PER_YEAR
    sd = float(r.std(ddof=1))
    if sd <= 1e-15 * max(1.0, abs(float(r.mean()))):
        sd = 0.0
    risk = sd * math.sqrt(MONTHS_PER_YEAR)
    sharpe = ann / risk if risk > 0 else None
    acc = ledger.accumulated[-1] if ledger.accumulated else float(np.prod(1.0 + r))
    return MetricsReport(float(acc), ann, risk, sharpe, len(r))


@dataclass
class SweepResult:
    reports: dict[tuple[int, str], MetricsReport]
    ledgers: dict[tuple[int, str], PortfolioLedger]
    errors: dict[tuple[int, str], str]
    k_values: list[int]
    strategies: list[str]

    def table(self, metric: str) -> pd.DataFrame:
        df = pd.DataFrame(index=pd.Index(self.k_values, name="k"), columns=self.strategies, dtype=float)
        for (k, s), rep in self.reports.items():
            v = getattr(rep, metric)
            df.loc[k, s] = np.nan if v is None else v
        return df

    def write_tables(self, out_dir) -> list[str]:
        from pathlib import Path

        written = []
        for metric, name in METRIC_FILES.items():
            path = Path(out_dir) / name
            self.table(metric).to_csv(path, float_format="%.12g", na_rep="", lineterminator="\n")
            written.append(str(path))
        return written

    def monthly_accumulated(self, k: int) -> pd.DataFrame:
        cols = {}
        index = None
        for s in self.strategies:
            led = self.ledgers.get((k, s))
            if led is None:
                continue
            cols[s] = led.accumulated
            index = index or [d.strftime("%Y-%m") for d in led.rebalance_dates]
        df = pd.DataFrame(cols, index=pd.Index(index or [], name="month"))
        return df


def sweep_k(
    panels: Mapping[str, FactorPanel],
    prices: PriceTable,
    cal: TradingCalendar | None,
    test_window: tuple[date, date],
    k_range: Sequence[int] = range(1, 30),
    validity_window: int = VALIDITY_WINDOW,
) -> SweepResult:
    """Simulate and score every (k, strategy) cell; failures become empty cells."""
    k_values = list(k_range)
    if not k_values:
        raise ValueError("k_range is empty")
    strategies = [s for s in STRATEGY_COLUMNS if s in panels] + sorted(
        s for s in panels if s not in STRATEGY_COLUMNS
    )
    reports, ledgers, errors = {}, {}, {}
    for s in strategies:
        cache: dict = {}
        for k in k_values:
            try:
                led = simulate(panels[s], prices, cal, k, test_window, validity_window, cache)
                ledgers[(k, s)] = led
                reports[(k, s)] = metrics(led)
            except ValueError as exc:
                errors[(k, s)] = str(exc)
    return SweepResult(reports, ledgers, errors, k_values, strategies)
