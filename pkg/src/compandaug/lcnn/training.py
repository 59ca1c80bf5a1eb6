"""Mini-batch training with dev-EER checkpoint selection."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrics import compute_eer
from .layers import softmax_cross_entropy
from .model import Lcnn

log = logging.getLogger(__name__)

BONAFIDE, SPOOF = 0, 1


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    learning_rate: float = 1e-4
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    weight_decay: float = 0.0
    patience: int = 0          # 0 disables early stopping

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_eer: float | None


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_dev_eer: float | None = None

    def to_text(self) -> str:
        lines = ["epoch\ttrain_loss\tdev_eer"]
        for e in self.epochs:
            eer = "nan" if e.dev_eer is None else repr(e.dev_eer)
            lines.append("%d\t%r\t%s" % (e.epoch, e.train_loss, eer))
        lines.append("# best_epoch=%d best_dev_eer=%s" % (self.best_epoch, self.best_dev_eer))
        return "\n".join(lines) + "\n"

    def as_dicts(self):
        return [asdict(e) for e in self.epochs]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, beta1, beta2, eps, weight_decay
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, model: Lcnn) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for key, layer, name in model.named_params():
            p, g = layer.params[name], layer.grads[name]
            if self.wd:
                g = g + self.wd * p
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m, v = self.m[key], self.v[key]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class SGD:
    def __init__(self, lr, momentum=0.9, weight_decay=0.0):
        self.lr, self.mu, self.wd = lr, momentum, weight_decay
        self.vel = {}

    def step(self, model: Lcnn) -> None:
        for key, layer, name in model.named_params():
            p, g = layer.params[name], layer.grads[name]
            if self.wd:
                g = g + self.wd * p
            vel = self.vel.setdefault(key, np.zeros_like(p))
            vel *= self.mu
            vel += g
            p -= (self.lr * vel).astype(p.dtype)


def _optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, weight_decay=cfg.weight_decay)
    return SGD(cfg.learning_rate, cfg.momentum, cfg.weight_decay)


def _check_labels(y: np.ndarray, what: str) -> None:
    if y.size == 0:
        raise DegenerateDataError("%s set is empty" % what)
    if not np.isin(y, (BONAFIDE, SPOOF)).all():
        raise ValueError("labels must be 0 (bonafide) or 1 (spoof)")
    if np.unique(y).size < 2:
        raise DegenerateDataError("%s set contains a single class" % what)


def dev_eer(model: Lcnn, x: np.ndarray, y: np.ndarray) -> float:
    scores = model.score(x)
    return compute_eer(scores[y == BONAFIDE], scores[y == SPOOF])[0]


def train(model: Lcnn, train_x, train_y, cfg: TrainConfig = TrainConfig(),
          dev_x=None, dev_y=None) -> tuple[Lcnn, TrainLog]:
    """Train ``model`` in place and return it with the per-epoch log.

    Labels are 0 for bonafide and 1 for spoof.  With a development set the
    returned weights are those of the epoch with the lowest dev EER (the
    earliest on ties); otherwise the final weights are kept.
    """
    train_x = np.asarray(train_x)
    train_y = np.asarray(train_y, dtype=np.int64)
    _check_labels(train_y, "training")
    if len(train_x) != len(train_y):
        raise ValueError("features and labels differ in length")
    has_dev = dev_x is not None and dev_y is not None and len(dev_y) > 0
    if has_dev:
        dev_y = np.asarray(dev_y, dtype=np.int64)
        _check_labels(dev_y, "development")

    rng = np.random.default_rng(cfg.seed)
    opt = _optimizer(cfg)
    history = TrainLog()
    best_state = None
    stale = 0
    n = len(train_y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = model.forward(train_x[idx], train=True, rng=rng)
            loss, grad = softmax_cross_entropy(logits.astype(np.float64), train_y[idx])
            model.backward(grad.astype(model.dtype))
            opt.step(model)
            total += loss * len(idx)
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise FloatingPointError("training diverged at epoch %d" % epoch)
        eer = dev_eer(model, dev_x, dev_y) if has_dev else None
        history.epochs.append(EpochLog(epoch, mean_loss, eer))
        log.info("epoch %d loss %.5f dev_eer %s", epoch, mean_loss,
                 "-" if eer is None else "%.4f" % eer)
        if has_dev:
            if history.best_dev_eer is None or eer < history.best_dev_eer:
                history.best_dev_eer = eer
                history.best_epoch = epoch
                best_state = model.state()
                stale = 0
            else:
                stale += 1
                if cfg.patience and stale >= cfg.patience:
                    break
    if best_state is not None:
        model.load_state(best_state)
    else:
        history.best_epoch = history.epochs[-1].epoch
    return model, history
