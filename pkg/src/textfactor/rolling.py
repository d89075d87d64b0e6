"""Walk-forward splits and one model per split."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

from .evaluation import EmptyReportError, RankICReport, rank_ic, realized_panel
from .ingest import LabeledSample
from .predictor import (
    DEFAULT_DIM,
    MAX_SEQ_LEN,
    RegressorModel,
    TrainingSchedule,
    predict_panel,
    train,
)

logger = logging.getLogger(__name__)

DEFAULT_SPLIT_DATES = (
    date(2018, 12, 31),
    date(2019, 6, 30),
    date(2019, 12, 31),
    date(2020, 6, 30),
)
MIN_PRE_SPLIT = 5


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    split_date: date
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def default_specs(train_fraction: float = 0.8) -> list[SplitSpec]:
    return [SplitSpec(d, train_fraction) for d in DEFAULT_SPLIT_DATES]


@dataclass
class RollingSplit:
    spec: SplitSpec
    train: list[LabeledSample]
    validation: list[LabeledSample]
    test: list[LabeledSample]
    # pre-split samples whose label window crosses the split date
    dropped: list[LabeledSample] = field(default_factory=list)

    def manifest(self) -> dict:
        def span(rows):
            if not rows:
                return None
            return [rows[0].anchor_date.isoformat(), rows[-1].anchor_date.isoformat()]

        h = hashlib.sha256()
        for part in (self.train, self.validation, self.test):
            for s in part:
                h.update(f"{s.stock_id}|{s.anchor_date}|{','.join(s.group.report_ids)};".encode())
            h.update(b"#")
        return {
            "split_date": self.spec.split_date.isoformat(),
            "train_fraction": self.spec.train_fraction,
            "counts": {
                "train": len(self.train),
                "validation": len(self.validation),
                "test": len(self.test),
                "dropped": len(self.dropped),
            },
            "ranges": {
                "train": span(self.train),
                "validation": span(self.validation),
                "test": span(self.test),
            },
            "content_hash": h.hexdigest(),
        }


def _order(s: LabeledSample):
    return (s.anchor_date, s.stock_id)


def make_split(samples: Sequence[LabeledSample], spec: SplitSpec, horizon: int = 20) -> RollingSplit:
    """Chronological train/validation/test split around ``spec.split_date``.

    Only samples carrying the ``horizon`` label take part. A pre-split sample
    whose label window ends after the split date is dropped, so no training
    label sees prices past the split.
    """
    rows = sorted((s for s in samples if horizon in s.labels), key=_order)
    cut = spec.split_date
    pre = [s for s in rows if s.anchor_date <= cut and s.label_end[horizon] <= cut]
    dropped = [s for s in rows if s.anchor_date <= cut and s.label_end[horizon] > cut]
    test = [s for s in rows if s.anchor_date > cut]
    if len(pre) < MIN_PRE_SPLIT:
        raise InsufficientDataError(
            f"{len(pre)} usable samples before {cut}; need at least {MIN_PRE_SPLIT}"
        )
    n_train = math.floor(spec.train_fraction * len(pre))
    return RollingSplit(spec, pre[:n_train], pre[n_train:], test, dropped)


@dataclass
class ModelCard:
    model: RegressorModel | None
    train_start: date
    train_end: date
    split_index: int
    test_rankic: float | None = None
    rankic_report: RankICReport | None = field(default=None, repr=False)
    split: RollingSplit | None = field(default=None, repr=False)


def train_rolling(
    samples: Sequence[LabeledSample],
    specs: Sequence[SplitSpec],
    schedule: TrainingSchedule | None = None,
    horizon: int = 20,
    dim: int = DEFAULT_DIM,
    max_seq_len: int = MAX_SEQ_LEN,
    train_start: date | None = None,
    threads: int = 1,
) -> list[ModelCard]:
    """Train one model per split and record its test-set RankIC.

    Splits are built first so any insufficient-data error aborts the run
    before training starts. Cards come back in split order.
    """
    dates = [s.split_date for s in specs]
    if dates != sorted(dates) or len(set(dates)) != len(dates):
        raise ValueError("split specs must be strictly increasing by date")
    splits = [make_split(samples, spec, horizon) for spec in specs]

    def fit(k: int) -> ModelCard:
        sp = splits[k]
        model = train(sp.train, horizon, schedule, sp.validation, dim=dim, max_seq_len=max_seq_len)
        card = ModelCard(
            model=model,
            train_start=train_start or sp.train[0].anchor_date,
            train_end=sp.spec.split_date,
            split_index=k + 1,
            split=sp,
        )
        score_test(card, sp.test, horizon)
        return card

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cards = list(pool.map(fit, range(len(splits))))
    else:
        cards = [fit(k) for k in range(len(splits))]
    return cards


def score_test(card: ModelCard, test: Sequence[LabeledSample], horizon: int, factor=None) -> None:
    """Fill ``card.test_rankic`` from its model (or a supplied panel) on ``test``."""
    rows = [s for s in test if horizon in s.labels]
    if factor is None:
        factor = predict_panel(card.model, rows)
    try:
        report = rank_ic(factor, realized_panel(rows, horizon), sorted({s.anchor_date for s in rows}))
    except (EmptyReportError, ValueError) as exc:
        logger.warning("split %d: test RankIC unavailable (%s)", card.split_index, exc)
        return
    card.rankic_report = report
    card.test_rankic = report.mean_ic


def split_manifest(cards: Sequence[ModelCard]) -> str:
    out = []
    for c in cards:
        entry = {"split_index": c.split_index, "train_start": c.train_start.isoformat()}
        if c.split is not None:
            entry.update(c.split.manifest())
        out.append(entry)
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
