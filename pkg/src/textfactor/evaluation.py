"""Spearman rank correlation and cross-sectional RankIC."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

MIN_CROSS_SECTION = 3


class UndefinedCorrelationError(ValueError):
    """Raised when a rank correlation has no defined value."""


class EmptyReportError(ValueError):
    """Raised when no date has a large enough cross-section."""


@dataclass
class FactorPanel:
    """Scores keyed by ``(trading date, stock_id)``."""

    entries: dict[tuple[date, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for key, v in self.entries.items():
            if not math.isfinite(v):
                raise ValueError(f"non-finite score at {key}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def get(self, d: date, stock_id: str) -> float | None:
        return self.entries.get((d, stock_id))

    def dates(self) -> list[date]:
        return sorted({d for d, _ in self.entries})

    def by_date(self) -> dict[date, dict[str, float]]:
        out: dict[date, dict[str, float]] = defaultdict(dict)
        for (d, s), v in self.entries.items():
            out[d][s] = v
        return dict(out)

    def cross_section(self, d: date) -> dict[str, float]:
        return {s: v for (dd, s), v in self.entries.items() if dd == d}

    def to_csv(self, fp) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["date", "stock_id", "score"])
        for (d, s), v in sorted(self.entries.items()):
            w.writerow([d.isoformat(), s, f"{v:.12g}"])


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    return rankdata(np.asarray(values, dtype=float), method="average")


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of the average-rank transforms of ``xs`` and ``ys``."""
    if len(xs) != len(ys):
        raise UndefinedCorrelationError("inputs differ in length")
    if len(xs) < 2:
        raise UndefinedCorrelationError("need at least two observations")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


@dataclass
class RankICReport:
    per_date: dict[date, float]
    mean_ic: float
    n_dates: int
    n_stocks: dict[date, int] = field(default_factory=dict)
    skipped: list[date] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def to_csv(self, fp) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["date", "ic", "n_stocks"])
        for d in sorted(self.per_date):
            w.writerow([d.isoformat(), f"{self.per_date[d]:.12g}", self.n_stocks[d]])

    def summary(self) -> dict:
        return {
            "mean_ic": float(f"{self.mean_ic:.12g}"),
            "n_dates": self.n_dates,
            "n_skipped": self.n_skipped,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


def rank_ic(
    factor: FactorPanel,
    realized: FactorPanel,
    dates: Iterable[date] | None = None,
    min_stocks: int = MIN_CROSS_SECTION,
) -> RankICReport:
    """Per-date Spearman IC between factor scores and realized returns.

    Each date uses the stocks present in both panels; dates with fewer than
    ``min_stocks`` such stocks (or a constant cross-section) are skipped.
    The mean weights every computed date equally.
    """
    fac = factor.by_date()
    real = realized.by_date()
    if dates is None:
        dates = sorted(fac)
    dates = sorted(set(dates))
    if not dates:
        raise ValueError("no dates given")
    per_date: dict[date, float] = {}
    n_stocks: dict[date, int] = {}
    skipped: list[date] = []
    for d in dates:
        f = fac.get(d, {})
        r = real.get(d, {})
        common = sorted(f.keys() & r.keys())
        if len(common) < min_stocks:
            skipped.append(d)
            continue
        try:
            ic = spearman([f[s] for s in common], [r[s] for s in common])
        except UndefinedCorrelationError:
            skipped.append(d)
            continue
        per_date[d] = ic
        n_stocks[d] = len(common)
    if not per_date:
        raise EmptyReportError("no date had a computable cross-section")
    mean_ic = math.fsum(per_date[d] for d in sorted(per_date)) / len(per_date)
    return RankICReport(per_date, mean_ic, len(per_date), n_stocks, skipped)


def realized_panel(samples: Iterable, horizon: int) -> FactorPanel:
    """Realized active returns of labeled samples as a panel keyed by anchor date."""
    entries = {}
    for s in samples:
        if horizon in s.labels:
            entries[(s.anchor_date, s.stock_id)] = s.labels[horizon]
    return FactorPanel(entries)


def panel_from_matrix(values: np.ndarray, dates: Sequence[date], stock_ids: Sequence[str]) -> FactorPanel:
    """Panel from a dates x stocks matrix, skipping non-finite cells."""
    entries = {}
    for i, d in enumerate(dates):
        row = values[i]
        for j, s in enumerate(stock_ids):
            if math.isfinite(row[j]):
                entries[(d, s)] = float(row[j])
    return FactorPanel(entries)
