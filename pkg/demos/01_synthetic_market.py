"""Generate a small synthetic market and look at what the reports encode.

Every report's characters are drawn from positive, negative and neutral
pools. The share of positive characters rises with the stock's realized
20-day active return, blended with noise according to ``signal_strength``.
"""

from datetime import date

import numpy as np

from textfactor import SynthConfig, gen_market, gen_reports, spearman
from textfactor.calendar import active_return_matrix

cfg = SynthConfig(n_stocks=50, n_days=260, start_date=date(2019, 1, 1), seed=1, signal_strength=0.6)
cal, prices = gen_market(cfg)
reports, truth = gen_reports(cfg, prices, cal)

print(f"{len(cal)} sessions, {len(prices.stock_ids)} stocks, {len(reports)} reports")
print("first report:", reports[0].stock_id, reports[0].release_time, reports[0].title)

active, market = active_return_matrix(prices, 20)
# the last 20 sessions have no complete window
rows = np.isfinite(market)
print("largest cross-sectional mean of 20-day active returns:", np.abs(np.nanmean(active[rows], axis=1)).max())

pairs = [(truth.sentiment[r], truth.future_active[r][20]) for r in truth.anchor if 20 in truth.future_active[r]]
xs, ys = zip(*pairs)
print(f"rank correlation between hidden sentiment and future active return: {spearman(xs, ys):.3f}")
