"""Shared pieces for the hand-written networks: activations, optimizers, reports."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def elu(x, alpha=1.0):
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x, alpha=1.0):
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def he_normal(rng, fan_in, shape):
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), shape)


def exponential_lr(lr0: float, decay: float, epoch: int) -> float:
    return lr0 * decay ** epoch


class Nesterov:
    """SGD with Nesterov momentum in the form ``p += mu^2 v - (1 + mu) lr g`` after ``v = mu v - lr g``."""

    def __init__(self, params: dict, momentum: float = 0.9):
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        mu = self.momentum
        for k, g in grads.items():
            v_prev = self.velocity[k]
            v = mu * v_prev - lr * g
            params[k] += -mu * v_prev + (1.0 + mu) * v
            self.velocity[k] = v


class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1 ** self.t)
            vhat = self.v[k] / (1 - self.b2 ** self.t)
            params[k] -= lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_by_global_norm(grads: dict, max_norm: float | None) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] *= scale
    return norm


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    val_auc: float | None = None
    val_score: float | None = None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int | None = None
    no_op: bool = False

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]

    @property
    def learning_rates(self) -> list[float]:
        return [e.lr for e in self.epochs]

    @property
    def val_aucs(self) -> list:
        return [e.val_auc for e in self.epochs]


class EarlyStopping:
    """Track the best validation score; stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_score = -math.inf
        self.best_epoch = None
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch: int, score: float, state) -> bool:
        """Record an epoch; return True when training should stop."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.best_state = copy.deepcopy(state)
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def check_finite(value: float, what: str = "loss"):
    from ..errors import Diverged
    if not math.isfinite(value):
        raise Diverged(f"{what} became non-finite")
