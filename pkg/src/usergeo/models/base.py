"""Shared training loop and parameter bookkeeping for the autograd models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..autograd import Adam, NonFiniteError, Parameter, Tensor

logger = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class LossCurve:
    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)
    best_epoch: int = -1


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Parameter:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)), name)


def zeros(shape, name: str) -> Parameter:
    return Parameter(np.zeros(shape), name)


def split_validation(idx: np.ndarray, y: np.ndarray, fraction: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random hold-out; classes with fewer than 2 members stay in training."""
    if fraction <= 0:
        return idx, idx[:0]
    val = []
    for c in np.unique(y):
        members = idx[y == c]
        k = int(round(fraction * len(members)))
        if len(members) >= 2 and k >= 1:
            val.append(rng.permutation(members)[:min(k, len(members) - 1)])
    val = np.sort(np.concatenate(val)) if val else idx[:0]
    train = np.setdiff1d(idx, val)
    return train, val


def fit_adam(loss_fn: Callable[[np.ndarray], Tensor], params: dict[str, Parameter],
             train_idx: np.ndarray, val_idx: np.ndarray | None = None, *,
             epochs: int = 100, batch_size: int | None = None, lr: float = 1e-3,
             weight_decay: float = 0.0, patience: int | None = None,
             rng: np.random.Generator | None = None,
             val_loss_fn: Callable[[np.ndarray], Tensor] | None = None) -> LossCurve:
    """Minibatch Adam on ``loss_fn(batch_indices)``.

    With validation indices and ``patience``, training stops once validation
    loss has not improved for ``patience`` epochs and the best parameters are
    restored. ``val_loss_fn`` overrides ``loss_fn`` for validation passes.
    Raises TrainingDivergence on a non-finite loss.
    """
    val_loss_fn = val_loss_fn or loss_fn
    rng = rng or np.random.default_rng(0)
    plist = list(params.values())
    opt = Adam(plist, lr=lr, weight_decay=weight_decay)
    curve = LossCurve()
    best, best_state, since = math.inf, None, 0
    train_idx = np.asarray(train_idx)
    has_val = val_idx is not None and len(val_idx) > 0
    for epoch in range(epochs):
        order = rng.permutation(train_idx) if batch_size else train_idx
        bs = batch_size or max(len(order), 1)
        total, count = 0.0, 0
        for start in range(0, len(order), bs):
            batch = order[start:start + bs]
            opt.zero_grad()
            try:
                loss = loss_fn(batch)
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingDivergence(f"non-finite value at epoch {epoch}: {exc}") from exc
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergence(f"loss {value} at epoch {epoch}")
            if lr:
                opt.step()
            total += value * len(batch)
            count += len(batch)
        curve.train.append(total / max(count, 1))
        if has_val:
            try:
                v = val_loss_fn(np.asarray(val_idx)).item()
            except NonFiniteError as exc:
                raise TrainingDivergence(f"non-finite validation loss at epoch {epoch}") from exc
            curve.val.append(v)
            if v < best - 1e-9:
                best, since, curve.best_epoch = v, 0, epoch
                best_state = {k: p.data.copy() for k, p in params.items()}
            else:
                since += 1
                if patience is not None and since >= patience:
                    break
    if best_state is not None:
        for k, p in params.items():
            p.data[...] = best_state[k]
    return curve


class ParamsMixin:
    """Access to a fitted model's named parameters."""

    def parameters(self) -> dict[str, Parameter]:
        return self.params_

    def get_weights(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params_.items()}

    def set_weights(self, weights: dict[str, np.ndarray]):
        for k, p in self.params_.items():
            if weights[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {weights[k].shape} vs {p.data.shape}")
            p.data[...] = weights[k]
        return self
