"""Linear softmax probe trained with SGD + Nesterov momentum.

The classifier is one linear projection with bias followed by softmax,
optimized on the mean negative log-likelihood of the gold labels. Early
stopping watches validation accuracy: training halts once no epoch in
the trailing patience window has improved the best accuracy by more
than ``min_delta``, and the parameters from the best epoch are returned.

Everything is plain numpy in float64 and deterministic under the
configured seed: zero-initialized parameters, per-epoch reshuffling
seeded by (seed, epoch), fixed batch order, final partial batch kept.

:class:`SoftmaxProbe` wraps the same training loop behind the familiar
estimator API (``fit``/``predict``/``predict_proba``/``get_params``) so
probes compose with scikit-learn tooling.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import metrics
from .deplabel import LabelVocab, build_label_vocab, map_labels
from .errors import DataError, FeatureFormatError, TrainingDivergedError
from .pooling import ProbeDataset

MODEL_MAGIC = b"SPM1"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIII")  # magic, version, K, D


@dataclass
class ProbeModel:
    W: np.ndarray  # (K, D) float64
    b: np.ndarray  # (K,) float64
    vocab: LabelVocab | None = None

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    momentum: float = 0.99
    nesterov: bool = True
    batch_size: int = 1024
    patience_epochs: int = 10
    min_delta: float = 1e-4
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise DataError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.patience_epochs < 1 or self.max_epochs < 1:
            raise DataError("batch_size, patience_epochs and max_epochs must be >= 1")
        if self.min_delta < 0:
            raise DataError("min_delta must be non-negative")
        if self.seed < 0:
            raise DataError("seed must be non-negative")

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TrainConfig":
        """Task defaults: lr 0.005 for POS tagging, 0.001 for head-distance labels."""
        defaults = {"pos": 0.005, "dep": 0.001}
        if task not in defaults:
            raise ValueError(f"unknown task {task!r}")
        overrides.setdefault("learning_rate", defaults[task])
        return cls(**overrides)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "learning_rate", "momentum", "nesterov", "batch_size",
            "patience_epochs", "min_delta", "max_epochs", "seed")}


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    dev_accuracy: float


@dataclass
class TrainState:
    velocity_W: np.ndarray
    velocity_b: np.ndarray
    epoch: int = 0
    best_val_accuracy: float = float("-inf")
    best_epoch: int = 0
    best_W: np.ndarray | None = None
    best_b: np.ndarray | None = None
    log: list[EpochRecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# core math


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    logits = logits - logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def forward(model: ProbeModel, X: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities, computed with max-subtraction."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"expected (N, {model.dim}) inputs, got {X.shape}")
    return _softmax_rows(X @ model.W.T + model.b)


def predict(model: ProbeModel, X: np.ndarray) -> np.ndarray:
    """Argmax class ids; ties resolve to the lowest id."""
    return np.argmax(forward(model, X), axis=1)


def nll_loss(probs: np.ndarray, y: Sequence[int]) -> float:
    """Mean over rows of -log p[row, gold]."""
    probs = np.asarray(probs)
    y = np.asarray(y)
    if len(probs) != len(y):
        raise ValueError("probs and y must have equal length")
    if len(y) == 0:
        raise ValueError("cannot compute loss of zero rows")
    if y.min() < 0 or y.max() >= probs.shape[1]:
        raise ValueError(f"class ids must lie in [0, {probs.shape[1]})")
    return float(np.mean(-np.log(probs[np.arange(len(y)), y])))


def _loss_and_gradients(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    probs = _softmax_rows(X @ W.T + b)
    n = len(y)
    loss = float(np.mean(-np.log(probs[np.arange(n), y])))
    probs[np.arange(n), y] -= 1.0
    return loss, probs.T @ X / n, probs.mean(axis=0)


def gradients(model: ProbeModel, X: np.ndarray, y: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Mean-NLL gradients: dW = (P - onehot(y))^T X / N, db = column means."""
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"expected (N, {model.dim}) inputs, got {X.shape}")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError(f"class ids must lie in [0, {model.n_classes})")
    _, dW, db = _loss_and_gradients(model.W, model.b, X, y)
    return dW, db


def sgd_nesterov_step(
    params: list[np.ndarray],
    velocity: list[np.ndarray],
    grad_fn: Callable[[list[np.ndarray]], list[np.ndarray]],
    lr: float,
    momentum: float,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """One Nesterov step in the lookahead form.

    g = grad_fn(theta + mu*v); v <- mu*v - lr*g; theta <- theta + v.
    Parameters and velocities are updated in place and returned.
    """
    lookahead = [p + momentum * v for p, v in zip(params, velocity)]
    grads = grad_fn(lookahead)
    for p, v, g in zip(params, velocity, grads):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                f"non-finite gradient (|g|_max={np.max(np.abs(g))}); "
                "lower the learning rate or inspect the features")
        v *= momentum
        v -= lr * g
        p += v
    return params, velocity


def _sgd_classical_step(params, velocity, grad_fn, lr, momentum):
    # Classical (non-lookahead) momentum, used when TrainConfig.nesterov is off.
    grads = grad_fn(params)
    for p, v, g in zip(params, velocity, grads):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
        v *= momentum
        v -= lr * g
        p += v
    return params, velocity


# ---------------------------------------------------------------------------
# training loop


def dev_accuracy(model: ProbeModel, X: np.ndarray, y: np.ndarray, oov_mask: np.ndarray) -> float:
    """Validation metric for early stopping; OOV gold rows count as wrong."""
    return metrics.accuracy(predict(model, X), y, oov_mask)


def train(
    train_ds: ProbeDataset, dev_ds: ProbeDataset, cfg: TrainConfig
) -> tuple[ProbeModel, TrainState]:
    """Train a probe from zero-initialized parameters; return the best-epoch snapshot."""
    if len(train_ds) == 0 or len(dev_ds) == 0:
        raise DataError("train and dev datasets must be non-empty")
    if train_ds.vocab.labels != dev_ds.vocab.labels:
        raise DataError("train and dev datasets use different vocabularies")
    if train_ds.X.shape[1] != dev_ds.X.shape[1]:
        raise DataError("train and dev feature dimensions differ")
    if train_ds.oov_mask.any():
        raise DataError("training rows contain OOV labels; build the vocab from this split")

    n, dim = train_ds.X.shape
    n_classes = len(train_ds.vocab)
    X = np.ascontiguousarray(train_ds.X, dtype=np.float64)
    y = np.ascontiguousarray(train_ds.y, dtype=np.int64)
    X_dev = np.ascontiguousarray(dev_ds.X, dtype=np.float64)

    model = ProbeModel(
        W=np.zeros((n_classes, dim)), b=np.zeros(n_classes), vocab=train_ds.vocab)
    state = TrainState(
        velocity_W=np.zeros_like(model.W), velocity_b=np.zeros_like(model.b))
    step = sgd_nesterov_step if cfg.nesterov else _sgd_classical_step

    last_improvement = 1
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            Xb, yb = X[batch], y[batch]
            batch_loss = 0.0

            def grad_fn(lookahead):
                nonlocal batch_loss
                batch_loss, dW, db = _loss_and_gradients(lookahead[0], lookahead[1], Xb, yb)
                return [dW, db]

            step([model.W, model.b], [state.velocity_W, state.velocity_b],
                 grad_fn, cfg.learning_rate, cfg.momentum)
            total_loss += batch_loss * len(batch)

        acc = dev_accuracy(model, X_dev, dev_ds.y, dev_ds.oov_mask)
        state.epoch = epoch
        state.log.append(EpochRecord(epoch, total_loss / n, acc))
        if acc > state.best_val_accuracy + cfg.min_delta:
            last_improvement = epoch
        if acc > state.best_val_accuracy:  # ties keep the earlier snapshot
            state.best_val_accuracy = acc
            state.best_epoch = epoch
            state.best_W = model.W.copy()
            state.best_b = model.b.copy()
        if epoch - last_improvement >= cfg.patience_epochs:
            break

    assert state.best_W is not None and state.best_b is not None
    return ProbeModel(W=state.best_W, b=state.best_b, vocab=train_ds.vocab), state


# ---------------------------------------------------------------------------
# persistence


def save_model(
    model: ProbeModel,
    path: str | Path,
    *,
    config: TrainConfig | None = None,
    best_epoch: int | None = None,
    dev_accuracy: float | None = None,
) -> Path:
    """Binary checkpoint (magic SPM1, K, D, W row-major, b) plus a JSON sidecar."""
    path = Path(path)
    K, D = model.W.shape
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, K, D))
        fh.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.b, dtype="<f8").tobytes())
    sidecar = {
        "vocab": model.vocab.to_dict() if model.vocab is not None else None,
        "config": config.to_dict() if config is not None else None,
        "best_epoch": best_epoch,
        "dev_accuracy": dev_accuracy,
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return path


def load_model(path: str | Path) -> ProbeModel:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_MODEL_HEADER.size)
        if len(raw) < _MODEL_HEADER.size:
            raise FeatureFormatError(f"{path}: truncated model header")
        magic, version, K, D = _MODEL_HEADER.unpack(raw)
        if magic != MODEL_MAGIC:
            raise FeatureFormatError(f"{path}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise FeatureFormatError(f"{path}: unsupported version {version}")
        W = np.frombuffer(fh.read(8 * K * D), dtype="<f8").reshape(K, D).copy()
        b = np.frombuffer(fh.read(8 * K), dtype="<f8").copy()
    if len(b) != K:
        raise FeatureFormatError(f"{path}: truncated parameters")
    vocab = None
    sidecar_path = path.with_suffix(".json")
    if sidecar_path.exists():
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
        if sidecar.get("vocab"):
            vocab = LabelVocab.from_dict(sidecar["vocab"])
    return ProbeModel(W=W, b=b, vocab=vocab)


def write_epoch_log(log: list[EpochRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["epoch", "train_nll", "dev_accuracy"])
    for record in log:
        writer.writerow([record.epoch, repr(record.train_nll), repr(record.dev_accuracy)])


# ---------------------------------------------------------------------------
# estimator facade


class SoftmaxProbe(ClassifierMixin, BaseEstimator):
    """Scikit-learn style facade over the probe training loop.

    ``fit`` accepts an optional validation set; without one, early
    stopping watches accuracy on the training data itself. Labels may be
    arbitrary (strings or integers); they are ordered as in
    :func:`syntaxprobe.deplabel.build_label_vocab` and exposed via
    ``classes_``.
    """

    def __init__(self, learning_rate=0.005, momentum=0.99, nesterov=True,
                 batch_size=1024, patience_epochs=10, min_delta=1e-4,
                 max_epochs=1000, seed=0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.nesterov = nesterov
        self.batch_size = batch_size
        self.patience_epochs = patience_epochs
        self.min_delta = min_delta
        self.max_epochs = max_epochs
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, momentum=self.momentum,
            nesterov=self.nesterov, batch_size=self.batch_size,
            patience_epochs=self.patience_epochs, min_delta=self.min_delta,
            max_epochs=self.max_epochs, seed=self.seed)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        vocab = build_label_vocab(list(y))
        ids, _ = map_labels(list(y), vocab)
        train_ds = ProbeDataset(
            X=X, y=ids, oov_mask=np.zeros(len(ids), dtype=bool),
            vocab=vocab, layer=-1, task="estimator")
        if X_val is None:
            dev_ds = train_ds
        else:
            X_val = check_array(X_val, dtype=np.float64)
            val_ids, val_oov = map_labels(list(np.asarray(y_val)), vocab)
            dev_ds = ProbeDataset(
                X=X_val, y=val_ids, oov_mask=val_oov,
                vocab=vocab, layer=-1, task="estimator")
        model, state = train(train_ds, dev_ds, self._config())
        self.model_ = model
        self.train_state_ = state
        self.classes_ = np.asarray(vocab.labels)
        self.coef_ = model.W
        self.intercept_ = model.b
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = state.epoch
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return forward(self.model_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
