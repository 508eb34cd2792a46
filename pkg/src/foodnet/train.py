"""SGD training with the cost-driven learning rate and test-accuracy early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, expand_batch
from .errors import ConfigError, DatasetError, ShapeError
from .network import NetworkModel, backward, evaluate, forward
from .rng import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    eta0: float = 0.001
    eta_max: float = 0.05
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 25
    seed: int = 0
    augment: AugmentConfig | None = None

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ConfigError(f"eta0 must be > 0, got {self.eta0}")
        if not self.eta_max >= self.eta0:
            raise ConfigError(f"eta_max ({self.eta_max}) must be >= eta0 ({self.eta0})")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    eta: float


@dataclass
class TrainCurves:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def best(self) -> EpochRecord:
        """First epoch with the highest test accuracy."""
        return max(self.records, key=lambda r: (r.test_acc, -r.epoch))


def lr_schedule(eta0: float, cost: float, eta_max: float) -> float:
    """eta0 * exp(cost), clamped at eta_max."""
    if cost > 700.0:  # math.exp overflows near 709.8; the clamp wins long before
        return float(eta_max)
    return float(min(eta0 * math.exp(cost), eta_max))


def sgd_step(params, grads, eta: float) -> list[np.ndarray]:
    """Plain SGD: p - eta * g, no momentum and no weight decay."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    out = []
    for p, g in zip(params, grads):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ShapeError(f"parameter shape {p.shape} does not match gradient shape {g.shape}")
        out.append(p - p.dtype.type(eta) * g.astype(p.dtype, copy=False))
    return out


def _check_set(name, images, labels, n_classes):
    if len(images) == 0:
        raise DatasetError(f"{name} set is empty")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(images):
        raise DatasetError(f"{name} set has {len(images)} images but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DatasetError(f"{name} labels exceed the model's {n_classes} classes")
    return labels


def train(model: NetworkModel, train_set, test_set, config: TrainConfig, on_epoch=None):
    """Train ``model`` and return (best model, curves).

    ``train_set``/``test_set`` are (images, labels) pairs with images shaped
    (N, H, W, C) in [0, 1].  Per epoch: eta is fixed from the previous
    epoch's train loss (ln(class count) before the first epoch), the training
    set is reshuffled and optionally re-augmented, then minibatch SGD runs.
    Train/test loss and accuracy are measured in eval mode on the original
    (unaugmented) images after the epoch.  Training stops after ``patience``
    epochs without a strict test-accuracy improvement; the best parameters
    are returned.
    """
    x_train, y_train = train_set
    x_test, y_test = test_set
    y_train = _check_set("training", x_train, y_train, model.n_classes)
    y_test = _check_set("test", x_test, y_test, model.n_classes)

    rng = Rng(config.seed)
    params = [p.copy() for p in model.params]
    cost = math.log(model.n_classes)
    curves = TrainCurves()
    best_acc, best_params, stale = -1.0, None, 0
    n = len(x_train)

    for epoch in range(1, config.max_epochs + 1):
        eta = lr_schedule(config.eta0, cost, config.eta_max)
        order = rng.permutation(n)
        xs, ys = x_train[order], y_train[order]
        if config.augment is not None:
            xs, ys = expand_batch(xs, ys, config.augment, rng)
        current = model.with_params(params)
        for start in range(0, n, config.batch_size):
            xb = xs[start:start + config.batch_size]
            yb = ys[start:start + config.batch_size]
            _, cache = forward(current, xb, "train", rng)
            params = sgd_step(params, backward(current, cache, yb), eta)
            current = model.with_params(params)

        train_loss, train_acc = evaluate(current, x_train, y_train)
        test_loss, test_acc = evaluate(current, x_test, y_test)
        rec = EpochRecord(epoch, train_loss, train_acc, test_loss, test_acc, eta)
        curves.records.append(rec)
        log.info("epoch %d eta=%.6g train_loss=%.4f train_acc=%.4f test_loss=%.4f test_acc=%.4f",
                 epoch, eta, train_loss, train_acc, test_loss, test_acc)
        if on_epoch is not None:
            on_epoch(rec)
        cost = train_loss

        if test_acc > best_acc:
            best_acc, best_params, stale = test_acc, [p.copy() for p in params], 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    return model.with_params(best_params), curves
