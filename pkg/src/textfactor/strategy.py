"""Combining the rolling models' scores into one decision score."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

from .evaluation import FactorPanel
from .rolling import ModelCard


class StrategyKind(str, enum.Enum):
    SINGLE = "first_model"
    MEAN_COMBINE = "mean_combine"
    POWER_COMBINE = "power_combine"
    CONCAT_COMBINE = "concat_combine"


ALL_STRATEGIES = tuple(StrategyKind)


class MissingScoreError(LookupError):
    """No eligible model scored the requested (date, stock)."""


@dataclass
class CombinedPanel(FactorPanel):
    strategy: StrategyKind = StrategyKind.MEAN_COMBINE
    # (date, stock) -> split indices that contributed
    eligible_models: dict[tuple[date, str], tuple[int, ...]] = field(default_factory=dict)


def eligible_models(cards: Sequence[ModelCard], d: date) -> list[ModelCard]:
    """Cards whose training window ended strictly before ``d``."""
    return [c for c in cards if c.train_end < d]


def _scored(
    predictions: Mapping[int, FactorPanel], cards: Sequence[ModelCard], d: date, stock: str
) -> list[tuple[ModelCard, float]]:
    out = []
    for c in eligible_models(cards, d):
        panel = predictions.get(c.split_index)
        v = panel.get(d, stock) if panel is not None else None
        if v is not None:
            out.append((c, v))
    return out


def combine(
    predictions: Mapping[int, FactorPanel],
    cards: Sequence[ModelCard],
    d: date,
    stock: str,
    kind: StrategyKind,
) -> tuple[float, tuple[int, ...]]:
    """Score one (date, stock) under ``kind``.

    Returns ``(score, used_split_indices)``. Mean and power combination use
    whichever eligible models scored the stock; concatenation takes the
    scoring model trained most recently.
    """
    kind = StrategyKind(kind)
    scored = _scored(predictions, cards, d, stock)
    if kind is StrategyKind.SINGLE:
        scored = [(c, v) for c, v in scored if c.split_index == 1]
    if not scored:
        raise MissingScoreError(f"no eligible score for {stock} on {d} ({kind.value})")
    if kind is StrategyKind.SINGLE:
        c, v = scored[0]
        return v, (c.split_index,)
    if kind is StrategyKind.CONCAT_COMBINE:
        c, v = max(scored, key=lambda cv: (cv[0].train_end, cv[0].split_index))
        return v, (c.split_index,)
    used = tuple(c.split_index for c, _ in scored)
    values = [v for _, v in scored]
    if kind is StrategyKind.MEAN_COMBINE:
        return math.fsum(values) / len(values), used
    return math.fsum(math.exp(v) for v in values), used


def combine_panel(
    predictions: Mapping[int, FactorPanel],
    cards: Sequence[ModelCard],
    kind: StrategyKind,
    keys: Iterable[tuple[date, str]] | None = None,
) -> CombinedPanel:
    """Apply ``combine`` to every key (default: every key any model scored).

    Keys without an eligible score are left out of the panel.
    """
    kind = StrategyKind(kind)
    if keys is None:
        keys = {k for p in predictions.values() for k in p.entries}
    entries: dict[tuple[date, str], float] = {}
    used: dict[tuple[date, str], tuple[int, ...]] = {}
    for d, s in sorted(keys):
        try:
            v, idx = combine(predictions, cards, d, s, kind)
        except MissingScoreError:
            continue
        entries[(d, s)] = v
        used[(d, s)] = idx
    return CombinedPanel(entries, strategy=kind, eligible_models=used)
