"""Mini-batch training of :class:`~ffca.model.Mlp` with an epoch snapshot hook."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, DivergenceError
from .model import Mlp, TaskKind, check_task


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    capture_interval: int = 10

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1 and learning_rate > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.capture_interval < 1 or (self.epochs and self.capture_interval > self.epochs):
            raise ValueError("capture_interval must lie in [1, epochs]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_metric: float
    val_metric: float


def r2_score(y, pred) -> float:
    y = np.asarray(y, dtype=np.float64)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - pred) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def accuracy(y, logits) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_metric(model: Mlp, X, y, task) -> tuple[float, float]:
    from .model import forward_batch

    out = forward_batch(model, X)
    if TaskKind(task) is TaskKind.REGRESSION:
        pred = out[:, 0]
        return float(np.mean((pred - y) ** 2)), r2_score(y, pred)
    p = _softmax(out)
    yi = np.asarray(y, dtype=np.intp)
    return float(-np.mean(np.log(p[np.arange(len(yi)), yi] + 1e-300))), accuracy(yi, out)


def validation_metric(model: Mlp, X, y, task) -> float:
    return loss_and_metric(model, X, y, task)[1]


def _step_grads(model: Mlp, Xb, yb, task):
    acts = [Xb]
    pre = []
    a = Xb
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        if l < last:
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        else:
            a = z
    B = len(Xb)
    if task is TaskKind.REGRESSION:
        diff = a[:, 0] - yb
        loss = float(np.mean(diff ** 2))
        dout = (2.0 / B) * diff[:, None]
    else:
        p = _softmax(a)
        yi = yb.astype(np.intp)
        loss = float(-np.mean(np.log(p[np.arange(B), yi] + 1e-300)))
        dout = p
        dout[np.arange(B), yi] -= 1.0
        dout /= B
    gW, gb = [None] * (last + 1), [None] * (last + 1)
    dz = dout
    for l in range(last, -1, -1):
        gW[l] = dz.T @ acts[l]
        gb[l] = dz.sum(axis=0)
        if l:
            dz = (dz @ model.weights[l]) * (pre[l - 1] > 0)
    return loss, gW, gb


def train(model: Mlp, data, config: TrainConfig,
          on_epoch: Callable[[int, Mlp, EpochMetrics], None] | None = None):
    """Train a copy of ``model`` on ``data``'s training split.

    ``data`` needs ``X``, ``y``, ``task``, ``train_idx`` and ``val_idx``.
    Every ``capture_interval`` epochs ``on_epoch(epoch, read_only_model, metrics)``
    is called synchronously. Returns ``(trained_model, log)`` where ``log`` is
    a list of :class:`EpochMetrics`, one per epoch.
    """
    if model.smooth:
        raise ValueError("training runs in relu mode; smoothing is for analysis only")
    task = check_task(data.task, model.n_outputs)
    X = np.asarray(data.X, dtype=np.float64)
    if X.shape[1] != model.n_inputs:
        raise DimensionMismatchError(f"model has {model.n_inputs} inputs, dataset has {X.shape[1]} features")
    y = np.asarray(data.y, dtype=np.float64)
    Xtr, ytr = X[data.train_idx], y[data.train_idx]
    Xva, yva = X[data.val_idx], y[data.val_idx]

    model = model.copy()
    rng = np.random.default_rng(config.seed)
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    log: list[EpochMetrics] = []
    n = len(Xtr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, gW, gb = _step_grads(model, Xtr[batch], ytr[batch], task)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            step += 1
            for i, g in enumerate(gW + gb):
                p = params[i]
                if config.optimizer == "sgd":
                    p -= config.learning_rate * g
                    continue
                m[i] = config.beta1 * m[i] + (1 - config.beta1) * g
                v[i] = config.beta2 * v[i] + (1 - config.beta2) * g * g
                mhat = m[i] / (1 - config.beta1 ** step)
                vhat = v[i] / (1 - config.beta2 ** step)
                p -= config.learning_rate * mhat / (np.sqrt(vhat) + config.epsilon)
        tr_loss, tr_metric = loss_and_metric(model, Xtr, ytr, task)
        if len(Xva):
            va_loss, va_metric = loss_and_metric(model, Xva, yva, task)
        else:
            va_loss, va_metric = float("nan"), float("nan")
        if not (np.isfinite(tr_loss) and all(np.all(np.isfinite(p)) for p in params)):
            raise DivergenceError(epoch)
        metrics = EpochMetrics(epoch, tr_loss, va_loss, tr_metric, va_metric)
        log.append(metrics)
        if on_epoch is not None and epoch % config.capture_interval == 0:
            on_epoch(epoch, model.read_only(), metrics)
    return model, log
