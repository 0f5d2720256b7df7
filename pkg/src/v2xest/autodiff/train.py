from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .optim import Adam, OptimizerSpec, learning_rate_at

log = logging.getLogger(__name__)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_loss(model, data, batch_size: int, loss_fn: Callable = T.mse) -> float:
    x, y = data
    model.eval()
    total = 0.0
    with T.no_grad():
        for idx in _batches(len(x), batch_size, np.arange(len(x))):
            total += loss_fn(model(x[idx]), y[idx]).data.item() * len(idx)
    return total / len(x)


def train_loop(model, train, val, spec: OptimizerSpec, seed: int,
               loss_fn: Callable = T.mse, callback: Optional[Callable] = None):
    """Mini-batch Adam/AdamW with StepLR and early stopping on validation loss.

    ``train`` and ``val`` are ``(inputs, targets)`` array pairs indexed on the
    first axis.  Shuffling and dropout draw from generators seeded by ``seed``,
    so a rerun reproduces the parameters bit for bit.  The model is left
    holding its best-validation parameters.
    """
    if len(train[0]) == 0 or len(val[0]) == 0:
        raise ValueError("train_loop needs non-empty train and validation splits")
    shuffle_rng = np.random.default_rng([seed, 0])
    model.set_rng(np.random.default_rng([seed, 1]))
    opt = Adam(model.parameters(), spec)
    hist = History()
    best, best_state, stale = np.inf, model.state_dict(), 0
    n = len(train[0])
    for epoch in range(spec.max_epochs):
        opt.lr = learning_rate_at(spec, epoch)
        model.train()
        total = 0.0
        for idx in _batches(n, spec.batch_size, shuffle_rng.permutation(n)):
            opt.zero_grad()
            loss = loss_fn(model(train[0][idx]), train[1][idx])
            loss.backward()
            opt.step()
            total += loss.data.item() * len(idx)
        val_loss = evaluate_loss(model, val, max(spec.batch_size, 256), loss_fn)
        hist.train_loss.append(total / n)
        hist.val_loss.append(val_loss)
        hist.lr.append(opt.lr)
        if callback is not None:
            callback(epoch, hist)
        if val_loss < best - spec.min_delta:
            best, best_state, stale = val_loss, model.state_dict(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if spec.early_stop_patience and stale >= spec.early_stop_patience:
                hist.stopped_early = True
                log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, hist
