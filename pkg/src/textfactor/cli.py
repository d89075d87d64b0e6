"""Command-line entry point: ``textfactor synth|backtest|rankic``.

Settings come from a flat ``key = <json value>`` config file, then the
``TEXTFACTOR_OUT`` environment variable (output directory only), then flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .calendar import PriceTable, active_return_matrix, read_calendar_csv, read_prices_csv
from .evaluation import FactorPanel, rank_ic
from .ingest import group_reports, label_groups, parse_reports, write_reports
from .portfolio import STRATEGY_COLUMNS, sweep_k
from .predictor import (
    TrainingSchedule,
    load_external_predictions,
    load_model,
    predict_panel,
    save_model,
)
from .rolling import (
    DEFAULT_SPLIT_DATES,
    ModelCard,
    SplitSpec,
    make_split,
    score_test,
    split_manifest,
    train_rolling,
)
from .strategy import StrategyKind, combine_panel
from .synth import SynthConfig, gen_market, gen_reports

logger = logging.getLogger("textfactor")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
OUT_ENV = "TEXTFACTOR_OUT"


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.__cause__ = exc


@dataclass
class RunConfig:
    out_dir: str = "out"
    # empty paths resolve inside out_dir
    prices: str = ""
    reports: str = ""
    calendar: str = ""
    external_predictions: str = ""
    models_dir: str = ""
    horizons: list = field(default_factory=lambda: [5, 10, 20, 40, 60])
    primary_horizon: int = 20
    split_dates: list = field(default_factory=lambda: [d.isoformat() for d in DEFAULT_SPLIT_DATES])
    train_fraction: float = 0.8
    train_start: str = ""
    window: int = 3
    dim: int = 32768
    max_seq_len: int = 500
    epochs: int = 10
    peak_lr: float = 5e-5
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    batch_size: int = 32
    strategies: list = field(default_factory=lambda: list(STRATEGY_COLUMNS))
    k_min: int = 1
    k_max: int = 29
    monthly_k: int = 8
    validity_window: int = 20
    seed: int = 7
    threads: int = 1
    # synthetic data
    n_stocks: int = 100
    n_days: int = 1020
    start_date: str = "2017-07-03"
    daily_vol: float = 0.02
    signal_strength: float = 0.6
    reports_per_stock_per_month: int = 1

    def schedule(self) -> TrainingSchedule:
        return TrainingSchedule(
            epochs=self.epochs,
            peak_lr=self.peak_lr,
            weight_decay=self.weight_decay,
            epsilon=self.epsilon,
            batch_size=self.batch_size or None,
            seed=self.seed,
        )

    def specs(self) -> list[SplitSpec]:
        return [SplitSpec(date.fromisoformat(d), self.train_fraction) for d in self.split_dates]

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_stocks=self.n_stocks,
            n_days=self.n_days,
            seed=self.seed,
            daily_vol=self.daily_vol,
            signal_strength=self.signal_strength,
            reports_per_stock_per_month=self.reports_per_stock_per_month,
            start_date=date.fromisoformat(self.start_date),
            signal_horizon=self.primary_horizon,
            horizons=tuple(self.horizons),
        )


def parse_config(text: str) -> dict:
    """Parse ``key = <json value>`` lines; ``#`` starts a comment line."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise UsageError(f"config line {n}: unknown or malformed entry {line!r}")
        try:
            out[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config line {n}: {exc}") from None
    return out


def serialize_config(values: dict) -> str:
    return "".join(f"{k} = {json.dumps(values[k], ensure_ascii=False)}\n" for k in sorted(values))


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values = {}
    if path:
        values.update(parse_config(Path(path).read_text(encoding="utf-8")))
    if os.environ.get(OUT_ENV):
        values["out_dir"] = os.environ[OUT_ENV]
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _g(x: float | None) -> float | None:
    return None if x is None else float(f"{x:.12g}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, KeyError, OSError, LookupError) as exc:
        raise StageError(name, exc) from exc


def cmd_synth(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scfg = cfg.synth_config()
    cal, table = gen_market(scfg)
    reports, truth = gen_reports(scfg, table, cal)
    paths = [out / "prices.csv", out / "reports.jsonl", out / "truth.jsonl"]
    with open(paths[0], "w", encoding="utf-8", newline="") as fh:
        table.to_csv(fh)
    with open(paths[1], "w", encoding="utf-8") as fh:
        write_reports(reports, fh)
    with open(paths[2], "w", encoding="utf-8") as fh:
        truth.write_jsonl(fh)
    logger.info("wrote %d prices rows, %d reports", int(np.isfinite(table.values).sum()), len(reports))
    return paths


def _input(cfg: RunConfig, name: str) -> Path:
    value = getattr(cfg, name)
    return Path(value) if value else Path(cfg.out_dir) / f"{name}.{'csv' if name == 'prices' else 'jsonl'}"


def _load_prices(cfg: RunConfig) -> PriceTable:
    cal = read_calendar_csv(cfg.calendar) if cfg.calendar else None
    return read_prices_csv(_input(cfg, "prices"), cal)


def _load_samples(cfg: RunConfig, table: PriceTable):
    reports, rejects = parse_reports(_input(cfg, "reports"))
    for lineno, reason in rejects:
        logger.warning("reports line %d rejected: %s", lineno, reason)
    groups = group_reports(reports, cfg.window, table.calendar)
    return label_groups(groups, table, table.calendar, cfg.horizons)


def realized_for(factor: FactorPanel, table: PriceTable, horizon: int) -> FactorPanel:
    """Realized ``horizon``-day active returns at every key of ``factor``."""
    active = active_return_matrix(table, horizon)[0]
    cal = table.calendar
    entries = {}
    for d, s in factor.entries:
        if d in cal and s in table:
            v = active[cal.index(d), table.column(s)]
            if np.isfinite(v):
                entries[(d, s)] = float(v)
    return FactorPanel(entries)


def _external_cards(cfg: RunConfig, start: date) -> list[ModelCard]:
    return [
        ModelCard(None, start, spec.split_date, i + 1) for i, spec in enumerate(cfg.specs())
    ]


def _table1_rows(cards: Sequence[ModelCard]) -> list[list[str]]:
    rows = [["model", "train_start", "train_end", "test_rankic"]]
    for c in cards:
        ic = "" if c.test_rankic is None else f"{c.test_rankic:.12g}"
        rows.append([str(c.split_index), c.train_start.strftime("%Y%m%d"), c.train_end.strftime("%Y%m%d"), ic])
    return rows


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _external_rankic(cards, panel: FactorPanel, table: PriceTable, horizon: int) -> None:
    realized = realized_for(panel, table, horizon)
    for c in cards:
        test_dates = [d for d in panel.dates() if d > c.train_end]
        if not test_dates:
            continue
        try:
            rep = rank_ic(panel, realized, test_dates)
        except ValueError as exc:
            logger.warning("model %d: %s", c.split_index, exc)
            continue
        c.rankic_report = rep
        c.test_rankic = rep.mean_ic


def cmd_backtest(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = _stage("calendar_market", _load_prices, cfg)
    cal = table.calendar
    h = cfg.primary_horizon
    train_start = date.fromisoformat(cfg.train_start) if cfg.train_start else None

    if cfg.external_predictions:
        panel, rejects = _stage("predictor", load_external_predictions, cfg.external_predictions)
        for lineno, reason in rejects:
            logger.warning("predictions line %d rejected: %s", lineno, reason)
        cards = _external_cards(cfg, train_start or cal[0])
        predictions = {c.split_index: panel for c in cards}
        _external_rankic(cards, panel, table, h)
        mode = "external"
    else:
        samples = _stage("ingest", _load_samples, cfg, table)
        cards = _stage(
            "rolling",
            train_rolling,
            samples,
            cfg.specs(),
            cfg.schedule(),
            h,
            dim=cfg.dim,
            max_seq_len=cfg.max_seq_len,
            train_start=train_start,
            threads=cfg.threads,
        )
        predictions = {c.split_index: predict_panel(c.model, samples) for c in cards}
        models_dir = out / "models"
        models_dir.mkdir(exist_ok=True)
        for c in cards:
            with open(models_dir / f"model_{c.split_index}.bin", "wb") as fh:
                save_model(c.model, fh)
        (out / "splits.json").write_text(split_manifest(cards), encoding="utf-8")
        mode = "trained"

    combined = {
        s: _stage("strategy", combine_panel, predictions, cards, StrategyKind(s)) for s in cfg.strategies
    }
    first_cut = min(c.train_end for c in cards)
    window = (first_cut + timedelta(days=1), cal[-1])

    primary = combined["mean_combine"] if "mean_combine" in combined else next(iter(combined.values()))
    realized = realized_for(primary, table, h)
    test_dates = [d for d in primary.dates() if d > first_cut]
    ic = _stage("evaluation", rank_ic, primary, realized, test_dates)
    with open(out / "rankic.csv", "w", encoding="utf-8", newline="") as fh:
        ic.to_csv(fh)
    summary = ic.summary()
    summary["strategy"] = primary.strategy.value
    summary["horizon"] = h
    summary["per_model"] = {str(c.split_index): _g(c.test_rankic) for c in cards}
    _write_json(out / "rankic.json", summary)
    _write_csv(out / "rankic_by_model.csv", _table1_rows(cards))

    ks = range(cfg.k_min, cfg.k_max + 1)
    sweep = _stage("portfolio", sweep_k, combined, table, cal, window, ks, cfg.validity_window)
    for (k, s), reason in sorted(sweep.errors.items()):
        logger.warning("k=%d %s: %s", k, s, reason)
    sweep.write_tables(out)
    sweep.monthly_accumulated(cfg.monthly_k).to_csv(
        out / "monthly_accumulated.csv", float_format="%.12g", lineterminator="\n"
    )

    produced = sorted(
        p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json" and p.suffix != ".log"
        and p.name not in {"prices.csv", "reports.jsonl", "truth.jsonl"}
    )
    manifest = {
        "version": __version__,
        "mode": mode,
        # the output location is left out so reruns elsewhere hash identically
        "config": {k: v for k, v in asdict(cfg).items() if k != "out_dir"},
        "split_dates": [c.train_end.isoformat() for c in cards],
        "test_window": [window[0].isoformat(), window[1].isoformat()],
        "files": {str(p.relative_to(out)): _sha256(p) for p in produced},
    }
    _write_json(out / "manifest.json", manifest)
    return produced + [out / "manifest.json"]


def cmd_rankic(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = _stage("calendar_market", _load_prices, cfg)
    h = cfg.primary_horizon
    train_start = date.fromisoformat(cfg.train_start) if cfg.train_start else None
    if cfg.external_predictions:
        panel, _ = _stage("predictor", load_external_predictions, cfg.external_predictions)
        cards = _external_cards(cfg, train_start or table.calendar[0])
        _external_rankic(cards, panel, table, h)
    else:
        models_dir = Path(cfg.models_dir or Path(cfg.out_dir) / "models")
        files = sorted(models_dir.glob("model_*.bin"), key=lambda p: int(p.stem.split("_")[1]))
        if len(files) != len(cfg.split_dates):
            raise StageError(
                "rolling",
                FileNotFoundError(f"expected {len(cfg.split_dates)} models in {models_dir}, found {len(files)}"),
            )
        samples = _stage("ingest", _load_samples, cfg, table)
        cards = []
        for i, (spec, path) in enumerate(zip(cfg.specs(), files), start=1):
            with open(path, "rb") as fh:
                model = load_model(fh)
            sp = _stage("rolling", make_split, samples, spec, h)
            card = ModelCard(model, train_start or sp.train[0].anchor_date, spec.split_date, i, split=sp)
            score_test(card, sp.test, h)
            cards.append(card)
    path = out / "rankic_by_model.csv"
    _write_csv(path, _table1_rows(cards))
    return [path]


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="textfactor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out", dest="out_dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("synth", help="generate synthetic prices, reports and truth")
    common(s)
    s.add_argument("--rho", dest="signal_strength", type=float)
    s.add_argument("--n-stocks", type=int)
    s.add_argument("--n-days", type=int)
    s.add_argument("--start-date")

    for name, help_ in (("backtest", "run the full pipeline"), ("rankic", "per-model test RankIC table")):
        b = sub.add_parser(name, help=help_)
        common(b)
        b.add_argument("--prices")
        b.add_argument("--reports")
        b.add_argument("--calendar")
        b.add_argument("--external-predictions")
        b.add_argument("--horizon", dest="primary_horizon", type=int)
        b.add_argument("--epochs", type=int)
        if name == "rankic":
            b.add_argument("--models-dir")
        else:
            b.add_argument("--k-max", type=int)
    return p


COMMANDS = {"synth": cmd_synth, "backtest": cmd_backtest, "rankic": cmd_rankic}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    opts = {k: v for k, v in vars(args).items() if k not in {"command", "config", "verbose"}}
    try:
        cfg = load_config(args.config, opts)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"textfactor: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"textfactor: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, OSError) as exc:
        print(f"textfactor: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"textfactor: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
