import json
from datetime import date

import pytest

from textfactor.calendar import TradingCalendar
from textfactor.ingest import group_reports, label_groups
from textfactor.predictor import TrainingSchedule
from textfactor.rolling import (
    DEFAULT_SPLIT_DATES,
    InsufficientDataError,
    SplitSpec,
    default_specs,
    make_split,
    split_manifest,
    train_rolling,
)
from textfactor.synth import SynthConfig, business_days, gen_market, gen_reports

from conftest import make_sample

CAL = TradingCalendar(business_days(date(2018, 1, 1), 900))
FAST = TrainingSchedule(epochs=2, peak_lr=1e-3, seed=1)


def _samples_on(days, stock="A", h=20):
    return [make_sample(f"{stock}{i}", CAL[i], {h: 0.01 * (i % 7 - 3)}, cal=CAL) for i in days]


def test_default_dates():
    assert [s.split_date for s in default_specs()] == [
        date(2018, 12, 31),
        date(2019, 6, 30),
        date(2019, 12, 31),
        date(2020, 6, 30),
    ]
    assert DEFAULT_SPLIT_DATES[0] == date(2018, 12, 31)


class TestMakeSplit:
    def test_ten_pre_split(self):
        samples = _samples_on(range(10, 20)) + _samples_on(range(300, 305), "B")
        sp = make_split(samples, SplitSpec(CAL[60]))
        assert (len(sp.train), len(sp.validation), len(sp.test)) == (8, 2, 5)
        assert min(s.anchor_date for s in sp.validation) >= max(s.anchor_date for s in sp.train)

    def test_all_after(self):
        with pytest.raises(InsufficientDataError):
            make_split(_samples_on(range(100, 120)), SplitSpec(CAL[10]))

    def test_exactly_five(self):
        sp = make_split(_samples_on(range(10, 15)), SplitSpec(CAL[60]))
        assert (len(sp.train), len(sp.validation)) == (4, 1)

    def test_label_window_crossing_split_dropped(self):
        samples = _samples_on(range(10, 40))
        cut = CAL[45]
        sp = make_split(samples, SplitSpec(cut))
        assert all(s.label_end[20] <= cut for s in sp.train + sp.validation)
        # anchors CAL[26..39] have windows ending after CAL[45]
        assert len(sp.dropped) == 14 and all(s.anchor_date <= cut < s.label_end[20] for s in sp.dropped)
        assert len(sp.train) + len(sp.validation) + len(sp.dropped) + len(sp.test) == len(samples)

    def test_tie_break_by_stock(self):
        samples = [make_sample(s, CAL[5], {20: 0.0}, cal=CAL) for s in "EDCBA"] * 1
        samples += _samples_on(range(6, 11), "Z")
        sp = make_split(samples, SplitSpec(CAL[60]))
        assert [s.stock_id for s in sp.train[:5]] == list("ABCDE")
        assert make_split(samples[::-1], SplitSpec(CAL[60])).train == sp.train

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitSpec(date(2019, 1, 1), 1.0)

    def test_nesting(self):
        samples = _samples_on(range(0, 700, 3))
        splits = [make_split(samples, SplitSpec(CAL[c])) for c in (200, 350, 500)]
        for i, a in enumerate(splits):
            for b in splits[i + 1 :]:
                pre_b = b.train + b.validation
                assert pre_b[: len(a.train)] == a.train


@pytest.fixture(scope="module")
def synthetic_samples():
    cfg = SynthConfig(n_stocks=40, n_days=900, start_date=date(2017, 7, 3), seed=5)
    cal, table = gen_market(cfg)
    reports, _ = gen_reports(cfg, table, cal)
    return label_groups(group_reports(reports, 3, cal), table, cal, (20,))


def test_one_spec(synthetic_samples):
    (card,) = train_rolling(synthetic_samples, [SplitSpec(date(2018, 12, 31))], FAST, 20)
    assert card.split_index == 1 and card.test_rankic is not None


def test_four_default_specs(synthetic_samples):
    cards = train_rolling(synthetic_samples, default_specs(), FAST, 20)
    assert [c.train_end for c in cards] == list(DEFAULT_SPLIT_DATES)
    assert [c.split_index for c in cards] == [1, 2, 3, 4]
    for c in cards:
        sp = c.split
        cut = c.train_end
        assert max(s.anchor_date for s in sp.train + sp.validation) <= cut < min(s.anchor_date for s in sp.test)
    manifest = json.loads(split_manifest(cards))
    assert [m["split_date"] for m in manifest] == [d.isoformat() for d in DEFAULT_SPLIT_DATES]
    assert all(len(m["content_hash"]) == 64 for m in manifest)


def test_rolling_determinism(synthetic_samples):
    a = train_rolling(synthetic_samples, default_specs()[:2], FAST, 20)
    b = train_rolling(synthetic_samples, default_specs()[:2], FAST, 20, threads=2)
    assert [c.test_rankic for c in a] == [c.test_rankic for c in b]


def test_unsorted_specs_rejected(synthetic_samples):
    with pytest.raises(ValueError):
        train_rolling(synthetic_samples, default_specs()[::-1], FAST, 20)


def test_failed_spec_aborts(synthetic_samples):
    with pytest.raises(InsufficientDataError):
        train_rolling(synthetic_samples, [SplitSpec(date(2017, 7, 10))] + default_specs(), FAST, 20)
