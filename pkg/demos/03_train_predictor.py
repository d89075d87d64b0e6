"""Train the hashed n-gram regressor on one split and score held-out reports."""

from datetime import date

from textfactor import SynthConfig, TrainingSchedule, gen_market, gen_reports, group_reports, label_groups
from textfactor.predictor import featurize, predict
from textfactor.rolling import SplitSpec, train_rolling

cfg = SynthConfig(n_stocks=100, n_days=400, start_date=date(2018, 3, 1), seed=4)
cal, prices = gen_market(cfg)
reports, _ = gen_reports(cfg, prices, cal)
samples = label_groups(group_reports(reports, 3, cal), prices, cal, (20,))
print(f"{len(samples)} labeled samples")

(card,) = train_rolling(samples, [SplitSpec(date(2018, 12, 31))], TrainingSchedule(epochs=10), 20)
hist = card.model.history
print("train loss by epoch:", [round(x, 6) for x in hist["train_loss"]])
print("best validation epoch:", hist["best_epoch"])
print(f"test RankIC after the split: {card.test_rankic:.3f}")

positive = chr(0x4E00) * 30
negative = chr(0x5000) * 30
print("score of an all-positive text:", predict(card.model, featurize(positive)))
print("score of an all-negative text:", predict(card.model, featurize(negative)))
