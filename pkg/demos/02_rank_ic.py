"""RankIC of a perfect-foresight factor, a noisy factor and pure noise."""

from datetime import date

import numpy as np

from textfactor import FactorPanel, SynthConfig, gen_market, gen_reports, rank_ic
from textfactor.calendar import active_return_matrix

cfg = SynthConfig(n_stocks=80, n_days=300, start_date=date(2019, 1, 1), seed=2)
cal, prices = gen_market(cfg)
_, truth = gen_reports(cfg, prices, cal)

oracle = truth.oracle_panel(20)
active = active_return_matrix(prices, 20)[0]
realized = FactorPanel({(d, s): float(active[cal.index(d), prices.column(s)]) for d, s in oracle.entries})

rng = np.random.default_rng(0)
noisy = FactorPanel({k: v + rng.normal(0, 0.05) for k, v in oracle.entries.items()})
noise = FactorPanel({k: float(rng.normal()) for k in oracle.entries})

for name, factor in [("oracle", oracle), ("oracle + noise", noisy), ("pure noise", noise)]:
    rep = rank_ic(factor, realized)
    print(f"{name:>15}: mean RankIC {rep.mean_ic:+.4f} over {rep.n_dates} dates ({len(rep.skipped)} skipped)")
