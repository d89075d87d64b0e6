"""Reference text regressor: hashed character n-grams + linear model.

The model is trained with mean squared error and AdamW under a linear
warmup / linear decay schedule. Any other scorer can be plugged in through
``load_external_predictions``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from datetime import date
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .calendar import _read_text
from .evaluation import FactorPanel

logger = logging.getLogger(__name__)

DEFAULT_DIM = 1 << 15
MAX_SEQ_LEN = 500
MODEL_MAGIC = b"TXFREG"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int = DEFAULT_DIM

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, FeatureVector)
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def scaled(self, a: float) -> "FeatureVector":
        return FeatureVector(self.indices, self.values * a, self.dim)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.indices.tolist(), self.values.tolist()))


def _units(text: str) -> list[str]:
    """Split text into units: ASCII words whole, every other character alone."""
    units: list[str] = []
    word: list[str] = []
    for ch in text:
        if ch.isspace():
            if word:
                units.append("".join(word))
                word = []
        elif ch.isascii():
            word.append(ch)
        else:
            if word:
                units.append("".join(word))
                word = []
            units.append(ch)
    if word:
        units.append("".join(word))
    return units


def tokenize(title: str, abstract: str, max_seq_len: int = MAX_SEQ_LEN) -> list[str]:
    """Unigram and adjacent-bigram tokens for a title/abstract pair.

    The unit stream (title first) is cut to ``max_seq_len`` units; bigrams
    are formed inside the kept window and never span title and abstract.
    """
    budget = max_seq_len
    tokens: list[str] = []
    for segment in (title, abstract):
        units = _units(segment)[: max(budget, 0)]
        budget -= len(units)
        tokens.extend("1\x1f" + u for u in units)
        tokens.extend(f"2\x1f{a}\x1f{b}" for a, b in zip(units, units[1:]))
    return tokens


@lru_cache(maxsize=1 << 18)
def _token_hash(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def featurize(
    title: str, abstract: str = "", max_seq_len: int = MAX_SEQ_LEN, dim: int = DEFAULT_DIM
) -> FeatureVector:
    if dim <= 0 or dim & (dim - 1):
        raise ValueError("hash dimension must be a power of two")
    counts: dict[int, float] = {}
    mask = dim - 1
    for tok in tokenize(title, abstract, max_seq_len):
        i = _token_hash(tok) & mask
        counts[i] = counts.get(i, 0.0) + 1.0
    idx = np.array(sorted(counts), dtype=np.int64)
    vals = np.array([counts[i] for i in idx.tolist()], dtype=float)
    return FeatureVector(idx, vals, dim)


def featurize_sample(sample, max_seq_len: int = MAX_SEQ_LEN, dim: int = DEFAULT_DIM) -> FeatureVector:
    return featurize(sample.group.title, sample.group.abstract, max_seq_len, dim)


def design_matrix(vectors: Sequence[FeatureVector], dim: int) -> sp.csr_matrix:
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for k, fv in enumerate(vectors):
        indptr[k + 1] = indptr[k] + len(fv)
    if vectors:
        indices = np.concatenate([fv.indices for fv in vectors])
        data = np.concatenate([fv.values for fv in vectors])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


# ---------------------------------------------------------------------------
# schedule


@dataclass
class TrainingSchedule:
    epochs: int = 10
    peak_lr: float = 5e-5
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    # None trains on the full batch every step
    batch_size: int | None = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.peak_lr > 0:
            raise ValueError("peak_lr must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None")


def lr_at(step: int, steps_per_epoch: int, schedule: TrainingSchedule) -> float:
    """Learning rate: 0 -> peak over the first epoch, then peak -> 0.

    Steps at or past the final step return 0.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    warm = steps_per_epoch
    total = schedule.epochs * steps_per_epoch
    if step >= total:
        return 0.0
    if step <= warm:
        return schedule.peak_lr * step / warm
    return schedule.peak_lr * (total - step) / (total - warm)


# ---------------------------------------------------------------------------
# model


@dataclass
class RegressorModel:
    weights: np.ndarray
    bias: float = 0.0
    m_w: np.ndarray | None = None
    v_w: np.ndarray | None = None
    m_b: float = 0.0
    v_b: float = 0.0
    step: int = 0
    max_seq_len: int = MAX_SEQ_LEN
    schedule: TrainingSchedule | None = None
    fingerprint: str = ""
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.m_w is None:
            self.m_w = np.zeros_like(self.weights)
        if self.v_w is None:
            self.v_w = np.zeros_like(self.weights)

    @property
    def dim(self) -> int:
        return len(self.weights)

    @classmethod
    def zeros(cls, dim: int = DEFAULT_DIM, **kw) -> "RegressorModel":
        return cls(np.zeros(dim), **kw)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.weights).all() and math.isfinite(self.bias))


def predict(model: RegressorModel, fv: FeatureVector) -> float:
    if fv.dim != model.dim:
        raise ValueError(f"feature dim {fv.dim} != model dim {model.dim}")
    return float(model.weights[fv.indices] @ fv.values) + model.bias


def predict_matrix(model: RegressorModel, X: sp.csr_matrix) -> np.ndarray:
    return X @ model.weights + model.bias


def mse_loss_and_grad(
    weights: np.ndarray, bias: float, X, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean squared error and its gradient with respect to weights and bias."""
    resid = X @ weights + bias - y
    n = len(y)
    loss = float(resid @ resid) / n
    gw = (2.0 / n) * (X.T @ resid)
    gb = 2.0 * float(resid.sum()) / n
    return loss, np.asarray(gw).ravel(), gb


def _adamw_update(model: RegressorModel, gw, gb: float, lr: float, sch: TrainingSchedule):
    model.step += 1
    t = model.step
    b1, b2 = sch.beta1, sch.beta2
    model.m_w *= b1
    model.m_w += (1 - b1) * gw
    model.v_w *= b2
    model.v_w += (1 - b2) * gw * gw
    model.m_b = b1 * model.m_b + (1 - b1) * gb
    model.v_b = b2 * model.v_b + (1 - b2) * gb * gb
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    if lr == 0.0:
        return
    # decoupled decay on weights only; the bias is not decayed
    model.weights *= 1 - lr * sch.weight_decay
    model.weights -= lr * (model.m_w / c1) / (np.sqrt(model.v_w / c2) + sch.epsilon)
    model.bias -= lr * (model.m_b / c1) / (math.sqrt(model.v_b / c2) + sch.epsilon)


def _fingerprint(X: sp.csr_matrix, y: np.ndarray) -> str:
    h = hashlib.sha256()
    for arr in (X.indptr, X.indices, X.data, y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def train(
    samples: Sequence,
    horizon: int = 20,
    schedule: TrainingSchedule | None = None,
    validation: Sequence | None = None,
    dim: int = DEFAULT_DIM,
    max_seq_len: int = MAX_SEQ_LEN,
) -> RegressorModel:
    """Fit the linear regressor on samples carrying a ``horizon`` label.

    Every epoch records the training and validation MSE. With a validation
    set the returned model is the lowest-validation-loss epoch (ties go to
    the later epoch); otherwise it is the last epoch.
    """
    schedule = schedule or TrainingSchedule()
    rows = [s for s in samples if horizon in s.labels]
    if not rows:
        raise ValueError(f"no training samples carry a {horizon}-day label")
    X = design_matrix([featurize_sample(s, max_seq_len, dim) for s in rows], dim)
    y = np.array([s.labels[horizon] for s in rows])
    val_rows = [s for s in (validation or ()) if horizon in s.labels]
    Xv = design_matrix([featurize_sample(s, max_seq_len, dim) for s in val_rows], dim)
    yv = np.array([s.labels[horizon] for s in val_rows])
    return fit_arrays(X, y, schedule, Xv if val_rows else None, yv, max_seq_len=max_seq_len)


def fit_arrays(
    X: sp.csr_matrix,
    y: np.ndarray,
    schedule: TrainingSchedule,
    X_val: sp.csr_matrix | None = None,
    y_val: np.ndarray | None = None,
    max_seq_len: int = MAX_SEQ_LEN,
) -> RegressorModel:
    """Training loop on a prepared design matrix."""
    X = sp.csr_matrix(X)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if X.nnz == 0 and np.all(y == y[0]):
        warnings.warn("degenerate training set: no features and constant labels; bias-only model")
    model = RegressorModel.zeros(X.shape[1], max_seq_len=max_seq_len, schedule=schedule)
    model.fingerprint = _fingerprint(X, y)
    bs = n if schedule.batch_size is None else min(schedule.batch_size, n)
    steps_per_epoch = math.ceil(n / bs)
    rng = np.random.default_rng(schedule.seed)

    train_loss: list[float] = []
    val_loss: list[float] = []
    best = None
    best_loss = math.inf
    best_epoch = schedule.epochs
    step = 0
    for epoch in range(1, schedule.epochs + 1):
        order = np.arange(n) if schedule.batch_size is None else rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, gw, gb = mse_loss_and_grad(model.weights, model.bias, X[idx], y[idx])
            _adamw_update(model, gw, gb, lr_at(step, steps_per_epoch, schedule), schedule)
            step += 1
        train_loss.append(mse_loss_and_grad(model.weights, model.bias, X, y)[0])
        if X_val is not None and len(y_val):
            vl = mse_loss_and_grad(model.weights, model.bias, X_val, y_val)[0]
            val_loss.append(vl)
            if vl <= best_loss:
                best_loss = vl
                best_epoch = epoch
                best = (model.weights.copy(), model.bias)
        logger.debug("epoch %d train_mse=%.6g", epoch, train_loss[-1])

    if best is not None:
        model.weights, model.bias = best
    model.history = {
        "train_loss": train_loss,
        "val_loss": val_loss,
        "best_epoch": best_epoch,
        "steps_per_epoch": steps_per_epoch,
    }
    return model


def predict_samples(model: RegressorModel, samples: Sequence) -> np.ndarray:
    X = design_matrix([featurize_sample(s, model.max_seq_len, model.dim) for s in samples], model.dim)
    return predict_matrix(model, X)


def predict_panel(model: RegressorModel, samples: Sequence) -> FactorPanel:
    """Score samples into a panel keyed by ``(anchor_date, stock_id)``."""
    preds = predict_samples(model, samples) if samples else []
    return FactorPanel({(s.anchor_date, s.stock_id): float(p) for s, p in zip(samples, preds)})


# ---------------------------------------------------------------------------
# persistence


def save_model(model: RegressorModel, fp) -> None:
    """Write ``MAGIC | version | header length | JSON header | float64 weights``."""
    header = {
        "dim": model.dim,
        "bias": model.bias,
        "max_seq_len": model.max_seq_len,
        "schedule": asdict(model.schedule) if model.schedule else None,
        "fingerprint": model.fingerprint,
        "history": model.history,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    fp.write(MODEL_MAGIC)
    fp.write(struct.pack("<HI", MODEL_VERSION, len(raw)))
    fp.write(raw)
    fp.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())


def load_model(fp) -> RegressorModel:
    if fp.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ValueError("not a model file")
    version, n = struct.unpack("<HI", fp.read(6))
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    header = json.loads(fp.read(n).decode("utf-8"))
    weights = np.frombuffer(fp.read(8 * header["dim"]), dtype="<f8").astype(float)
    if len(weights) != header["dim"]:
        raise ValueError("truncated model file")
    sched = TrainingSchedule(**header["schedule"]) if header["schedule"] else None
    return RegressorModel(
        weights,
        bias=header["bias"],
        max_seq_len=header["max_seq_len"],
        schedule=sched,
        fingerprint=header["fingerprint"],
        history=header["history"],
    )


# ---------------------------------------------------------------------------
# external scores


def load_external_predictions(source) -> tuple[FactorPanel, list[tuple[int, str]]]:
    """Read a ``date,stock_id,score`` CSV into a FactorPanel.

    Returns ``(panel, rejects)`` with 1-based line numbers in ``rejects``.
    Repeated keys keep the last row and emit a warning.
    """
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["date", "stock_id", "score"]:
        raise ValueError("predictions CSV header must be 'date,stock_id,score'")
    entries: dict[tuple[date, str], float] = {}
    rejects: list[tuple[int, str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != 3:
                raise ValueError(f"expected 3 fields, got {len(row)}")
            key = (date.fromisoformat(row[0].strip()), row[1].strip())
            score = float(row[2])
            if not math.isfinite(score):
                raise ValueError("non-finite score")
        except ValueError as exc:
            rejects.append((lineno, str(exc)))
            continue
        if key in entries:
            warnings.warn(f"duplicate prediction for {key[0]} {key[1]}; keeping line {lineno}")
        entries[key] = score
    if not entries:
        raise ValueError("prediction file has no usable rows")
    return FactorPanel(entries), rejects
