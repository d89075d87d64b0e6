"""Monthly top-k portfolios for k = 1..29 and their return, risk and Sharpe."""

from datetime import date

import numpy as np
import pandas as pd

from textfactor import FactorPanel, SynthConfig, gen_market, gen_reports, sweep_k

cfg = SynthConfig(n_stocks=100, n_days=500, start_date=date(2018, 7, 2), seed=5, signal_strength=0.6)
cal, prices = gen_market(cfg)
_, truth = gen_reports(cfg, prices, cal)

rng = np.random.default_rng(0)
oracle = truth.oracle_panel(20)
panels = {
    "mean_combine": FactorPanel({k: v + rng.normal(0, 0.05) for k, v in oracle.entries.items()}),
    "first_model": FactorPanel({k: float(rng.normal()) for k in oracle.entries}),
}
result = sweep_k(panels, prices, cal, (date(2019, 1, 1), cal[-1]))

pd.set_option("display.width", 120)
print("final accumulated value by k")
print(result.table("accumulated_final").iloc[::4])
print("\nSharpe by k")
print(result.table("sharpe").iloc[::4])
print("\nmonthly accumulated value, k = 8")
print(result.monthly_accumulated(8).head())
