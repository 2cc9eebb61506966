"""Feed-forward classifier: ELU hidden layers, batch normalization, dropout, sigmoid output."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BatchTooSmall, ShapeMismatch, SingleClass
from ..metrics import auc_or_none
from ..serialize import register
from .common import EarlyStopping, EpochRecord, Nesterov, TrainReport, check_finite, elu, elu_grad, he_normal, sigmoid

BN_EPS = 1e-5


@dataclass(frozen=True)
class MLPConfig:
    hidden_sizes: tuple = (64, 32)
    elu_alpha: float = 1.0
    dropout_p: float = 0.5
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 256
    batch_norm: bool = True
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


@register("mlp")
@dataclass
class MLPModel:
    params: dict            # W{l}, b{l}, gamma{l}, beta{l}, Wout, bout
    buffers: dict           # mean{l}, var{l} running batch-norm statistics
    hidden_sizes: tuple
    elu_alpha: float = 1.0
    dropout_p: float = 0.5
    batch_norm: bool = True

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    @property
    def n_features(self) -> int:
        return self.params["W0"].shape[0]

    def predict_proba(self, X) -> np.ndarray:
        return mlp_forward(self, X, "infer")

    def to_params(self):
        return {"params": self.params, "buffers": self.buffers, "hidden_sizes": list(self.hidden_sizes),
                "elu_alpha": self.elu_alpha, "dropout_p": self.dropout_p, "batch_norm": self.batch_norm}

    @classmethod
    def from_params(cls, p):
        return cls(dict(p["params"]), dict(p["buffers"]), tuple(p["hidden_sizes"]), p["elu_alpha"],
                   p["dropout_p"], p["batch_norm"])


def init_mlp(n_features: int, cfg: MLPConfig, rng=None) -> MLPModel:
    """He-normal weights (variance 2 / fan_in), unit batch-norm scale, zero shifts."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    params, buffers = {}, {}
    fan_in = n_features
    for l, width in enumerate(cfg.hidden_sizes):
        params[f"W{l}"] = he_normal(rng, fan_in, (fan_in, width))
        params[f"b{l}"] = np.zeros(width)
        if cfg.batch_norm:
            params[f"gamma{l}"] = np.ones(width)
            params[f"beta{l}"] = np.zeros(width)
            buffers[f"mean{l}"] = np.zeros(width)
            buffers[f"var{l}"] = np.ones(width)
        fan_in = width
    params["Wout"] = he_normal(rng, fan_in, (fan_in, 1))
    params["bout"] = np.zeros(1)
    return MLPModel(params, buffers, tuple(cfg.hidden_sizes), cfg.elu_alpha, cfg.dropout_p, cfg.batch_norm)


def dropout_masks(model: MLPModel, n_rows: int, rng) -> list:
    """Inverted-dropout masks (kept units scaled by 1/(1-p)) for every hidden layer."""
    keep = 1.0 - model.dropout_p
    return [(rng.random((n_rows, w)) < keep) / keep for w in model.hidden_sizes]


def _forward(model: MLPModel, X, mode, masks, bn_momentum=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(f"expected {model.n_features} features, got {X.shape[1]}")
    train = mode == "train"
    if train and model.batch_norm and len(X) < 2:
        raise BatchTooSmall("batch normalization needs at least two rows in train mode")
    p = model.params
    cache = []
    h = X
    for l in range(model.n_layers):
        a = h @ p[f"W{l}"] + p[f"b{l}"]
        entry = {"h_in": h, "a": a}
        if model.batch_norm:
            if train:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                if bn_momentum is not None:
                    model.buffers[f"mean{l}"] = (1 - bn_momentum) * model.buffers[f"mean{l}"] + bn_momentum * mu
                    model.buffers[f"var{l}"] = (1 - bn_momentum) * model.buffers[f"var{l}"] + bn_momentum * var
            else:
                mu, var = model.buffers[f"mean{l}"], model.buffers[f"var{l}"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv
            pre = p[f"gamma{l}"] * xhat + p[f"beta{l}"]
            entry.update(xhat=xhat, inv=inv)
        else:
            pre = a
        act = elu(pre, model.elu_alpha)
        entry["pre"] = pre
        if train and masks is not None and model.dropout_p > 0:
            act = act * masks[l]
            entry["mask"] = masks[l]
        cache.append(entry)
        h = act
    z = (h @ p["Wout"] + p["bout"])[:, 0]
    return z, h, cache


def mlp_forward(model: MLPModel, X, mode: str = "infer", seed=None, masks=None) -> np.ndarray:
    """Output probabilities.  ``train`` uses batch statistics and dropout; ``infer`` neither."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "train" and masks is None and model.dropout_p > 0:
        X2 = np.atleast_2d(X)
        masks = dropout_masks(model, len(X2), np.random.default_rng(seed))
    z, _, _ = _forward(model, X, mode, masks)
    return sigmoid(z)


def bce_from_logits(z, y):
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def mlp_loss_and_grads(model: MLPModel, X, y, mode: str = "train", masks=None, bn_momentum=None):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    y = np.asarray(y, dtype=float)
    z, h_last, cache = _forward(model, X, mode, masks, bn_momentum)
    loss = bce_from_logits(z, y)
    n = len(y)
    p = model.params
    grads = {}
    dz = (sigmoid(z) - y)[:, None] / n
    grads["Wout"] = h_last.T @ dz
    grads["bout"] = dz.sum(axis=0)
    dh = dz @ p["Wout"].T
    train = mode == "train"
    for l in reversed(range(model.n_layers)):
        e = cache[l]
        if "mask" in e:
            dh = dh * e["mask"]
        dpre = dh * elu_grad(e["pre"], model.elu_alpha)
        if model.batch_norm:
            grads[f"gamma{l}"] = (dpre * e["xhat"]).sum(axis=0)
            grads[f"beta{l}"] = dpre.sum(axis=0)
            dxhat = dpre * p[f"gamma{l}"]
            if train:
                m = len(dxhat)
                da = e["inv"] / m * (m * dxhat - dxhat.sum(axis=0) - e["xhat"] * (dxhat * e["xhat"]).sum(axis=0))
            else:
                da = dxhat * e["inv"]
        else:
            da = dpre
        grads[f"W{l}"] = e["h_in"].T @ da
        grads[f"b{l}"] = da.sum(axis=0)
        dh = da @ p[f"W{l}"].T
    return loss, grads


def _batches(n, batch_size, rng, min_size):
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < min_size:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def mlp_train(X, y, cfg: MLPConfig = MLPConfig(), X_val=None, y_val=None, patience: int | None = None):
    """Nesterov SGD on the cross-entropy; deterministic for a given seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise SingleClass("training labels contain a single class")
    rng = np.random.default_rng(cfg.seed)
    model = init_mlp(X.shape[1], cfg, rng)
    opt = Nesterov(model.params, cfg.momentum)
    report = TrainReport(no_op=cfg.learning_rate == 0)
    stopper = EarlyStopping(patience) if (patience and X_val is not None) else None
    min_batch = 2 if cfg.batch_norm else 1
    for epoch in range(cfg.epochs):
        losses, weights = [], []
        for idx in _batches(len(y), cfg.batch_size, rng, min_batch):
            masks = dropout_masks(model, len(idx), rng) if cfg.dropout_p > 0 else None
            loss, grads = mlp_loss_and_grads(model, X[idx], y[idx], "train", masks, cfg.bn_momentum)
            check_finite(loss)
            if cfg.learning_rate != 0:
                opt.step(model.params, grads, cfg.learning_rate)
            losses.append(loss)
            weights.append(len(idx))
        rec = EpochRecord(epoch, float(np.average(losses, weights=weights)), cfg.learning_rate)
        if X_val is not None:
            rec.val_auc = auc_or_none(model.predict_proba(X_val), y_val)
        report.epochs.append(rec)
        if stopper is not None and rec.val_auc is not None:
            if stopper.update(epoch, rec.val_auc, (model.params, model.buffers)):
                report.stop_reason = "early_stopping"
                break
    if stopper is not None and stopper.best_state is not None:
        model.params, model.buffers = stopper.best_state
        report.best_epoch = stopper.best_epoch
    if not report.stop_reason:
        report.stop_reason = "max_epochs"
    return model, report
