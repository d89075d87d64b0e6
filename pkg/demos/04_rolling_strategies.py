"""Four rolling models and the four ways of combining their scores."""

from datetime import date

from textfactor import (
    StrategyKind,
    SynthConfig,
    TrainingSchedule,
    combine_panel,
    gen_market,
    gen_reports,
    group_reports,
    label_groups,
    rank_ic,
)
from textfactor.cli import realized_for
from textfactor.predictor import predict_panel
from textfactor.rolling import default_specs, train_rolling

cfg = SynthConfig(n_stocks=60, n_days=1020, seed=7)
cal, prices = gen_market(cfg)
reports, _ = gen_reports(cfg, prices, cal)
samples = label_groups(group_reports(reports, 3, cal), prices, cal, (20,))

cards = train_rolling(samples, default_specs(), TrainingSchedule(epochs=4), 20)
for c in cards:
    print(f"model {c.split_index}: trained through {c.train_end}, test RankIC {c.test_rankic:.3f}")

predictions = {c.split_index: predict_panel(c.model, samples) for c in cards}
first_cut = cards[0].train_end
for kind in StrategyKind:
    panel = combine_panel(predictions, cards, kind)
    dates = [d for d in panel.dates() if d > first_cut]
    ic = rank_ic(panel, realized_for(panel, prices, 20), dates)
    print(f"{kind.value:>15}: RankIC {ic.mean_ic:.3f}")
