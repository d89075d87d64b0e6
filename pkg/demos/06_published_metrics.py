"""Recompute risk and Sharpe from a published monthly accumulated-value series."""

from pathlib import Path

import pandas as pd

from textfactor import PortfolioLedger, metrics

fixture = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "published_monthly_accumulated.csv"
series = pd.read_csv(fixture)

for column in series.columns[1:]:
    ledger = PortfolioLedger.from_accumulated(series[column].tolist(), start=1.0)
    rep = metrics(ledger)
    print(
        f"{column:>15}: final {rep.accumulated_final:.4f}  annualized {rep.annualized_return:.4f}  "
        f"risk {rep.risk:.4f}  sharpe {rep.sharpe:.4f}"
    )
