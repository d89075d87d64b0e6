"""Walk-forward backtesting of text-derived stock factors."""

from .calendar import (
    PriceSeries,
    PriceTable,
    TradingCalendar,
    active_return,
    horizon_return,
    market_return,
    next_trading_day,
)
from .evaluation import FactorPanel, RankICReport, rank_ic, spearman
from .ingest import LabeledSample, Report, ReportGroup, group_reports, label_groups, parse_reports
from .portfolio import MetricsReport, PortfolioLedger, metrics, select_top_k, simulate, sweep_k
from .predictor import (
    FeatureVector,
    RegressorModel,
    TrainingSchedule,
    featurize,
    load_external_predictions,
    lr_at,
    predict,
    train,
)
from .rolling import ModelCard, RollingSplit, SplitSpec, make_split, train_rolling
from .strategy import CombinedPanel, StrategyKind, combine, combine_panel, eligible_models
from .synth import SynthConfig, SynthTruth, gen_market, gen_reports

__version__ = "0.1.0"

__all__ = [
    "PriceSeries",
    "PriceTable",
    "TradingCalendar",
    "active_return",
    "horizon_return",
    "market_return",
    "next_trading_day",
    "FactorPanel",
    "RankICReport",
    "rank_ic",
    "spearman",
    "LabeledSample",
    "Report",
    "ReportGroup",
    "group_reports",
    "label_groups",
    "parse_reports",
    "MetricsReport",
    "PortfolioLedger",
    "metrics",
    "select_top_k",
    "simulate",
    "sweep_k",
    "FeatureVector",
    "RegressorModel",
    "TrainingSchedule",
    "featurize",
    "load_external_predictions",
    "lr_at",
    "predict",
    "train",
    "ModelCard",
    "RollingSplit",
    "SplitSpec",
    "make_split",
    "train_rolling",
    "CombinedPanel",
    "StrategyKind",
    "combine",
    "combine_panel",
    "eligible_models",
    "SynthConfig",
    "SynthTruth",
    "gen_market",
    "gen_reports",
]
