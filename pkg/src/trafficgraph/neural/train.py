"""Mini-batch training with Adam, recurrent dropout and best-validation selection."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .model import TemporalModel, backward_batch, batch_loss, dropout_masks, forward_batch
from .optim import adam_init, adam_step

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training diverged (non-finite loss or gradient)."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 300
    batch_size: int = 32
    recurrent_dropout: float = 0.6  # drop probability
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0 <= self.learning_rate < 1:
            raise ValueError("learning_rate must be in [0, 1)")
        if not 0 <= self.recurrent_dropout < 1:
            raise ValueError("recurrent_dropout must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_acc: float


def as_arrays(dataset):
    """Accept a list of FeatureSequence or an ``(X, y)`` pair."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        X, y = dataset
        return np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64)
    seqs = list(dataset)
    if not seqs:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64)
    X = np.stack([s.steps for s in seqs]).astype(float)
    y = np.array([s.label_index for s in seqs], dtype=np.int64)
    return X, y


def accuracy(model: TemporalModel, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(model.predict(X) == y))


def train(model: TemporalModel, dataset, tc: TrainConfig = TrainConfig(), validation=None):
    """Train a copy of ``model``; returns ``(best_model, log)``.

    Each epoch reshuffles with a seeded generator and walks mini-batches
    (the last partial batch is kept). The returned parameters are those with
    the highest validation accuracy seen (earliest on ties); without
    validation data the final parameters are returned.
    """
    X, y = as_arrays(dataset)
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    Xv, yv = as_arrays(validation) if validation is not None else (None, np.zeros(0))
    has_val = len(yv) > 0

    shuffle_ss, dropout_ss = np.random.SeedSequence(tc.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    model = model.copy()
    state = adam_init(model.params)
    step = 0
    best, best_acc = model.copy(), -1.0
    history = []
    n = len(y)
    for epoch in range(1, tc.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            masks = dropout_masks(model, len(idx), tc.recurrent_dropout, dropout_rng)
            probs, cache = forward_batch(model, X[idx], masks)
            losses = batch_loss(probs, y[idx])
            if not np.all(np.isfinite(losses)):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            total += float(losses.sum())
            grads = backward_batch(model, cache, y[idx])
            step += 1
            model.params, state = adam_step(model.params, grads, state, step, tc.learning_rate,
                                            tc.beta1, tc.beta2, tc.eps)
        if not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise NumericalError(f"non-finite parameters after epoch {epoch}")
        val_acc = accuracy(model, Xv, yv) if has_val else float("nan")
        history.append(EpochLog(epoch, total / n, val_acc))
        log.debug("epoch %d loss %.5f val_acc %.4f", epoch, total / n, val_acc)
        if has_val and val_acc > best_acc:
            best, best_acc = model.copy(), val_acc
    if not has_val or tc.epochs == 0:
        best = model
    return best, history


def write_log(fh, history) -> None:
    fh.write("epoch,train_loss,val_acc\n")
    for e in history:
        fh.write(f"{e.epoch},{e.train_loss!r},{e.val_acc!r}\n")
