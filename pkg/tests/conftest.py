from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from textfactor.calendar import PriceTable, TradingCalendar
from textfactor.ingest import LabeledSample, Report, ReportGroup
from textfactor.synth import SynthConfig, business_days, gen_market, gen_reports

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {name}")


def make_table(prices: dict[str, list[float]], start=date(2019, 1, 1)) -> PriceTable:
    """Price table on a weekday calendar; ``None`` entries become gaps."""
    n = len(next(iter(prices.values())))
    cal = TradingCalendar(business_days(start, n))
    ids = tuple(sorted(prices))
    values = np.array([[np.nan if prices[s][i] is None else prices[s][i] for s in ids] for i in range(n)])
    return PriceTable(cal, ids, values)


def make_report(stock, when, rid, title="标题", abstract="摘要"):
    if isinstance(when, date) and not isinstance(when, datetime):
        when = datetime.combine(when, datetime.min.time()) + timedelta(hours=10)
    return Report(stock, when, title, abstract, rid)


def make_sample(stock, anchor, labels, cal=None, title="t", abstract="a"):
    rep = make_report(stock, anchor - timedelta(days=1), f"{stock}-{anchor}", title, abstract)
    ends = {}
    if cal is not None:
        for h in labels:
            j = cal.index(anchor) + h
            ends[h] = cal[j] if j < len(cal) else anchor + timedelta(days=400)
    else:
        ends = {h: anchor + timedelta(days=int(h * 7 / 5) + 2) for h in labels}
    return LabeledSample(ReportGroup(stock, (rep,), anchor), dict(labels), ends)


@pytest.fixture(scope="session")
def small_world():
    cfg = SynthConfig(n_stocks=30, n_days=260, start_date=date(2018, 7, 2), seed=3)
    cal, table = gen_market(cfg)
    reports, truth = gen_reports(cfg, table, cal)
    return cfg, cal, table, reports, truth
