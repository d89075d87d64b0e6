"""Seeded synthetic market and analyst reports with a known embedded signal.

Prices follow independent geometric random walks. Each report's character
mix encodes a sentiment ``s = tanh(rho * z + (1 - rho) * noise)`` where ``z``
is the standardized realized future active return of the reported stock, so
a text model can only score well by reading the characters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np

from .calendar import PriceTable, TradingCalendar, active_return_matrix, next_trading_day
from .evaluation import FactorPanel
from .ingest import Report

POSITIVE_BASE = 0x4E00
NEGATIVE_BASE = 0x5000
NEUTRAL_BASE = 0x5800


@dataclass
class SynthConfig:
    n_stocks: int = 100
    n_days: int = 1020
    seed: int = 7
    daily_vol: float = 0.02
    signal_strength: float = 0.6
    reports_per_stock_per_month: int = 1
    start_date: date = date(2017, 7, 3)
    signal_horizon: int = 20
    horizons: tuple[int, ...] = (5, 10, 20, 40, 60)
    n_positive: int = 40
    n_negative: int = 40
    n_neutral: int = 400
    sentiment_fraction: float = 0.4
    title_len: tuple[int, int] = (8, 16)
    abstract_len: tuple[int, int] = (60, 120)

    def __post_init__(self):
        if self.n_stocks < 2:
            raise ValueError("n_stocks must be >= 2")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in [0, 1]")
        if not self.daily_vol > 0:
            raise ValueError("daily_vol must be positive")
        if isinstance(self.start_date, str):
            self.start_date = date.fromisoformat(self.start_date)

    def to_json(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["horizons"] = list(self.horizons)
        d["title_len"] = list(self.title_len)
        d["abstract_len"] = list(self.abstract_len)
        return d


@dataclass
class SynthTruth:
    config: SynthConfig
    sentiment: dict[str, float] = field(default_factory=dict)
    anchor: dict[str, tuple[date, str]] = field(default_factory=dict)
    future_active: dict[str, dict[int, float]] = field(default_factory=dict)

    def oracle_panel(self, horizon: int = 20) -> FactorPanel:
        """Perfect-foresight scores: each report's realized future active return."""
        entries = {}
        for rid, key in self.anchor.items():
            v = self.future_active[rid].get(horizon)
            if v is not None:
                entries[key] = v
        return FactorPanel(entries)

    def write_jsonl(self, fp) -> None:
        fp.write(json.dumps({"header": self.config.to_json()}, sort_keys=True) + "\n")
        for rid in sorted(self.anchor):
            d, stock = self.anchor[rid]
            row = {
                "report_id": rid,
                "stock_id": stock,
                "anchor_date": d.isoformat(),
                "sentiment": self.sentiment[rid],
                "future_active": {str(h): v for h, v in sorted(self.future_active[rid].items())},
            }
            fp.write(json.dumps(row, sort_keys=True) + "\n")


def business_days(start: date, n: int) -> list[date]:
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def gen_market(cfg: SynthConfig) -> tuple[TradingCalendar, PriceTable]:
    """Weekday calendar and one geometric random walk per stock."""
    rng = np.random.default_rng([cfg.seed, 0])
    cal = TradingCalendar(business_days(cfg.start_date, cfg.n_days))
    p0 = rng.uniform(5.0, 100.0, size=cfg.n_stocks)
    shocks = rng.normal(-0.5 * cfg.daily_vol**2, cfg.daily_vol, size=(cfg.n_days - 1, cfg.n_stocks))
    log_path = np.vstack([np.zeros(cfg.n_stocks), np.cumsum(shocks, axis=0)])
    values = p0 * np.exp(log_path)
    # round-trip through the CSV format so file and memory agree exactly
    values = np.array([float(f"{v:.8f}") for v in values.ravel()]).reshape(values.shape)
    width = len(str(cfg.n_stocks))
    ids = tuple(f"S{j:0{max(width, 4)}d}" for j in range(cfg.n_stocks))
    return cal, PriceTable(cal, ids, values)


def _draw_text(rng: np.random.Generator, n: int, s: float, cfg: SynthConfig) -> str:
    u = rng.random(n)
    pick_pos = rng.random(n) < (1.0 + s) / 2.0
    pos = rng.integers(0, cfg.n_positive, n)
    neg = rng.integers(0, cfg.n_negative, n)
    neu = rng.integers(0, cfg.n_neutral, n)
    codes = np.where(
        u < cfg.sentiment_fraction,
        np.where(pick_pos, POSITIVE_BASE + pos, NEGATIVE_BASE + neg),
        NEUTRAL_BASE + neu,
    )
    return "".join(map(chr, codes.tolist()))


def gen_reports(
    cfg: SynthConfig, prices: PriceTable, cal: TradingCalendar | None = None
) -> tuple[list[Report], SynthTruth]:
    """Monthly reports per stock whose text encodes future active returns.

    Reports whose signal horizon runs past the calendar end carry no signal
    (``z = 0``) and have no truth entry for that horizon.
    """
    cal = cal or prices.calendar
    rng = np.random.default_rng([cfg.seed, 1])
    active = {h: active_return_matrix(prices, h)[0] for h in cfg.horizons}
    sig = active_return_matrix(prices, cfg.signal_horizon)[0]
    scale = float(np.nanstd(sig)) or 1.0

    months: dict[tuple[int, int], list[int]] = {}
    for i, d in enumerate(cal):
        months.setdefault((d.year, d.month), []).append(i)

    reports: list[Report] = []
    truth = SynthTruth(cfg)
    rho = cfg.signal_strength
    for j, stock in enumerate(prices.stock_ids):
        for key in sorted(months):
            days = months[key]
            m = min(cfg.reports_per_stock_per_month, len(days))
            picks = np.sort(rng.choice(days, size=m, replace=False))
            for k, i in enumerate(picks.tolist()):
                release_day = cal[i] + timedelta(days=int(rng.integers(0, 2)))
                stamp = datetime.combine(
                    release_day, time(int(rng.integers(7, 21)), int(rng.integers(0, 60)))
                )
                noise = float(rng.normal())
                try:
                    anchor = next_trading_day(cal, stamp)
                except ValueError:
                    continue
                a = cal.index(anchor)
                z = sig[a, j] / scale if np.isfinite(sig[a, j]) else 0.0
                s = float(np.tanh(rho * z + (1.0 - rho) * noise))
                lo, hi = cfg.title_len
                title = _draw_text(rng, int(rng.integers(lo, hi + 1)), s, cfg)
                lo, hi = cfg.abstract_len
                abstract = _draw_text(rng, int(rng.integers(lo, hi + 1)), s, cfg)
                rid = f"{stock}-{key[0]:04d}{key[1]:02d}-{k}"
                reports.append(Report(stock, stamp, title, abstract, rid))
                truth.sentiment[rid] = s
                truth.anchor[rid] = (anchor, stock)
                truth.future_active[rid] = {
                    h: float(active[h][a, j]) for h in cfg.horizons if np.isfinite(active[h][a, j])
                }
    reports.sort(key=lambda r: (r.release_time, r.stock_id, r.report_id))
    return reports, truth
