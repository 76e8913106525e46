"""Seeded mini-batch training with early stopping on a held-out loss."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..env_gen import make_rng
from .adam import AdamState, adam_step
from .model import GraphBatch, Model, loss_and_grad

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Loss or gradients became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_loss(model: Model, batch: GraphBatch, chunk: int = 256) -> float:
    total, n = 0.0, batch.n_graphs
    for a in range(0, n, chunk):
        sub = batch.subset(np.arange(a, min(a + chunk, n)))
        out = model.forward(sub)
        loss, _ = loss_and_grad(out, sub.targets, model.config.task)
        total += loss * sub.n_graphs
    return total / n


def accuracy(model: Model, batch: GraphBatch) -> float:
    pred = np.argmax(model.predict(batch), axis=1)
    return float(np.mean(pred == np.asarray(batch.targets)))


def train(model: Model, train_set: GraphBatch, val_set: GraphBatch | None = None,
          config: TrainConfig = TrainConfig()) -> TrainLog:
    """Fit `model` in place; keeps the parameters of the best held-out epoch.

    Normalization statistics are fitted on `train_set` first.  Without a
    held-out set the training loss drives early stopping.
    """
    if train_set.n_graphs == 0:
        raise ValueError("empty training set")
    if train_set.targets is None:
        raise ValueError("training set has no targets")
    model.fit_normalization(train_set)
    rng = make_rng(config.seed, 0x7A11)
    state = AdamState()
    out_log = TrainLog()
    best_params = copy.deepcopy(model.params)
    stale = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(train_set.n_graphs)
        running, seen = 0.0, 0
        for a in range(0, len(order), config.batch_size):
            batch = train_set.subset(order[a:a + config.batch_size])
            out, cache = model.forward(batch, keep=True)
            try:
                loss, dout = loss_and_grad(out, batch.targets, model.config.task)
            except FloatingPointError as e:
                raise TrainingDivergedError(f"epoch {epoch}: {e}") from e
            grads = model.backward(batch, cache, dout)
            if not (math.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())):
                raise TrainingDivergedError(f"epoch {epoch}: non-finite loss or gradient")
            adam_step(model.params, grads, state, config.lr, config.beta1, config.beta2,
                      config.eps)
            running += loss * batch.n_graphs
            seen += batch.n_graphs
        train_loss = running / seen
        held = evaluate_loss(model, val_set) if val_set is not None and val_set.n_graphs else None
        monitor = held if held is not None else train_loss
        if not math.isfinite(monitor):
            raise TrainingDivergedError(f"epoch {epoch}: monitored loss is {monitor}")
        out_log.epochs.append({"epoch": epoch, "train_loss": train_loss, "val_loss": held})
        log.info("epoch %d train %.5f val %s", epoch, train_loss, held)
        if monitor < out_log.best_loss:
            out_log.best_loss, out_log.best_epoch = monitor, epoch
            best_params = copy.deepcopy(model.params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                out_log.stopped_early = True
                break
    model.params = best_params
    return out_log
