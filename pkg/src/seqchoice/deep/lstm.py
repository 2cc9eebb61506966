"""LSTM cells and a stacked bidirectional LSTM sequence classifier.

Gate pre-activations are packed along the last axis in the order
``i, f, o, j``: input gate, forget gate, output gate, input transform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyValidation, ShapeMismatch, WrongWindowLength
from ..metrics import auc_or_none
from ..serialize import register
from .common import (
    EarlyStopping,
    EpochRecord,
    Nesterov,
    TrainReport,
    check_finite,
    clip_by_global_norm,
    exponential_lr,
    he_normal,
    sigmoid,
    softmax,
)

SIGMOID_INPUT = "sigmoid"
TANH_STANDARD = "tanh"
GATES = ("i", "f", "o", "j")


@dataclass
class LSTMCellParams:
    Wx: np.ndarray   # (d, 4h)
    Wh: np.ndarray   # (h, 4h)
    b: np.ndarray    # (4h,)

    @property
    def hidden_size(self) -> int:
        return self.Wh.shape[0]

    @property
    def input_size(self) -> int:
        return self.Wx.shape[0]

    def gate(self, name: str):
        """``(W_x, W_h, b)`` blocks of one gate."""
        k = GATES.index(name)
        h = self.hidden_size
        sl = slice(k * h, (k + 1) * h)
        return self.Wx[:, sl], self.Wh[:, sl], self.b[sl]

    def as_dict(self, prefix=""):
        return {f"{prefix}Wx": self.Wx, f"{prefix}Wh": self.Wh, f"{prefix}b": self.b}

    @classmethod
    def zeros(cls, d, h):
        return cls(np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), np.zeros(4 * h))

    @classmethod
    def init(cls, rng, d, h, forget_bias=1.0):
        b = np.zeros(4 * h)
        b[h:2 * h] = forget_bias
        return cls(he_normal(rng, d, (d, 4 * h)), he_normal(rng, h, (h, 4 * h)) * 0.5, b)


@dataclass
class LSTMState:
    h: np.ndarray
    c: np.ndarray


def _transform(a, variant):
    return sigmoid(a) if variant == SIGMOID_INPUT else np.tanh(a)


def lstm_cell_step(p: LSTMCellParams, x_t, state: LSTMState, variant: str = SIGMOID_INPUT) -> LSTMState:
    """One step: gates, ``c = f*c_prev + i*j``, ``h = tanh(c) * o``."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != p.input_size or state.h.shape[-1] != p.hidden_size:
        raise ShapeMismatch("input or state does not match the cell parameters")
    h = p.hidden_size
    a = x_t @ p.Wx + state.h @ p.Wh + p.b
    i = sigmoid(a[..., :h])
    f = sigmoid(a[..., h:2 * h])
    o = sigmoid(a[..., 2 * h:3 * h])
    j = _transform(a[..., 3 * h:], variant)
    c = f * state.c + i * j
    return LSTMState(np.tanh(c) * o, c)


def lstm_sequence_forward(p: LSTMCellParams, X, variant, h0=None, c0=None):
    """Run over ``X`` of shape ``(B, T, d)``.  Returns hidden states ``(B, T, h)`` and a cache."""
    B, T, _ = X.shape
    hs = p.hidden_size
    h = np.zeros((B, hs)) if h0 is None else h0
    c = np.zeros((B, hs)) if c0 is None else c0
    H = np.empty((B, T, hs))
    cache = {"X": X, "h_prev": [], "c_prev": [], "gates": [], "c": [], "tc": []}
    for t in range(T):
        a = X[:, t] @ p.Wx + h @ p.Wh + p.b
        i = sigmoid(a[:, :hs])
        f = sigmoid(a[:, hs:2 * hs])
        o = sigmoid(a[:, 2 * hs:3 * hs])
        j = _transform(a[:, 3 * hs:], variant)
        cache["h_prev"].append(h)
        cache["c_prev"].append(c)
        c = f * c + i * j
        tc = np.tanh(c)
        h = tc * o
        cache["gates"].append((i, f, o, j))
        cache["c"].append(c)
        cache["tc"].append(tc)
        H[:, t] = h
    return H, cache


def lstm_sequence_backward(p: LSTMCellParams, cache, dH, variant, dh_last=None, dc_last=None):
    """Backpropagation through time.  ``dH`` is the loss gradient w.r.t. every output ``h_t``."""
    X = cache["X"]
    B, T, _ = X.shape
    hs = p.hidden_size
    gWx = np.zeros_like(p.Wx)
    gWh = np.zeros_like(p.Wh)
    gb = np.zeros_like(p.b)
    dX = np.empty_like(X)
    dh_next = np.zeros((B, hs)) if dh_last is None else dh_last
    dc_next = np.zeros((B, hs)) if dc_last is None else dc_last
    dA = np.empty((B, 4 * hs))
    for t in reversed(range(T)):
        i, f, o, j = cache["gates"][t]
        tc = cache["tc"][t]
        dh = dH[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dA[:, :hs] = dc * j * i * (1.0 - i)
        dA[:, hs:2 * hs] = dc * cache["c_prev"][t] * f * (1.0 - f)
        dA[:, 2 * hs:3 * hs] = dh * tc * o * (1.0 - o)
        if variant == SIGMOID_INPUT:
            dA[:, 3 * hs:] = dc * i * j * (1.0 - j)
        else:
            dA[:, 3 * hs:] = dc * i * (1.0 - j * j)
        gWx += X[:, t].T @ dA
        gWh += cache["h_prev"][t].T @ dA
        gb += dA.sum(axis=0)
        dX[:, t] = dA @ p.Wx.T
        dh_next = dA @ p.Wh.T
        dc_next = dc * f
    return dX, LSTMCellParams(gWx, gWh, gb), dh_next, dc_next


# ---------------------------------------------------------------------------
# bidirectional stack
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiRNNConfig:
    n_layers: int = 3
    hidden_size: int = 64
    dropout_p: float = 0.6
    window: int = 120
    batch_size: int = 240
    lr0: float = 0.01
    decay: float = 0.9
    momentum: float = 0.9
    max_epochs: int = 35
    patience: int = 5
    input_transform: str = SIGMOID_INPUT
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.n_layers < 1 or self.hidden_size < 1:
            raise ValueError("need at least one layer and one hidden unit")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.input_transform not in (SIGMOID_INPUT, TANH_STANDARD):
            raise ValueError(f"unknown input transform {self.input_transform!r}")


@register("birnn")
@dataclass
class BiRNNModel:
    params: dict          # L{l}f_Wx ... L{l}b_b, dense_W (2h, 2), dense_b (2,)
    n_layers: int
    hidden_size: int
    window: int
    input_transform: str = SIGMOID_INPUT
    dropout_p: float = 0.0

    def cell(self, layer: int, direction: str) -> LSTMCellParams:
        pre = f"L{layer}{direction}_"
        return LSTMCellParams(self.params[pre + "Wx"], self.params[pre + "Wh"], self.params[pre + "b"])

    def predict_proba(self, windows) -> np.ndarray:
        return birnn_predict(self, windows)

    def to_params(self):
        return {"params": self.params, "n_layers": self.n_layers, "hidden_size": self.hidden_size,
                "window": self.window, "input_transform": self.input_transform, "dropout_p": self.dropout_p}

    @classmethod
    def from_params(cls, p):
        return cls(dict(p["params"]), p["n_layers"], p["hidden_size"], p["window"], p["input_transform"],
                   p["dropout_p"])


def init_birnn(n_features: int, cfg: BiRNNConfig, rng=None) -> BiRNNModel:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    params = {}
    d = n_features
    for l in range(cfg.n_layers):
        for direction in ("f", "b"):
            params.update(LSTMCellParams.init(rng, d, cfg.hidden_size).as_dict(f"L{l}{direction}_"))
        d = 2 * cfg.hidden_size
    params["dense_W"] = he_normal(rng, d, (d, 2))
    params["dense_b"] = np.zeros(2)
    return BiRNNModel(params, cfg.n_layers, cfg.hidden_size, cfg.window, cfg.input_transform, cfg.dropout_p)


def _dropout_mask(rng, shape, p):
    keep = 1.0 - p
    return (rng.random(shape) < keep) / keep


def _birnn_forward(model: BiRNNModel, X, masks=None):
    """Forward pass over ``(B, T, d)``; ``masks`` holds one dropout mask per layer input above the first and one for the head."""
    caches = []
    inp = X
    for l in range(model.n_layers):
        if l > 0 and masks is not None:
            inp = inp * masks[l - 1]
        fwd = model.cell(l, "f")
        bwd = model.cell(l, "b")
        Hf, cf = lstm_sequence_forward(fwd, inp, model.input_transform)
        Hb_rev, cb = lstm_sequence_forward(bwd, inp[:, ::-1], model.input_transform)
        caches.append((cf, cb))
        inp = np.concatenate([Hf, Hb_rev[:, ::-1]], axis=2)
    h = model.hidden_size
    # forward state after the last step, backward state after reaching the first step
    feat = np.concatenate([inp[:, -1, :h], inp[:, 0, h:]], axis=1)
    if masks is not None:
        feat = feat * masks[-1]
    logits = feat @ model.params["dense_W"] + model.params["dense_b"]
    return logits, feat, caches, inp


def birnn_loss_and_grads(model: BiRNNModel, X, y, masks=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    B, T, _ = X.shape
    logits, feat, caches, top = _birnn_forward(model, X, masks)
    probs = softmax(logits)
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(B), y], 1e-300, None))))
    dlog = probs.copy()
    dlog[np.arange(B), y] -= 1.0
    dlog /= B
    grads = {"dense_W": feat.T @ dlog, "dense_b": dlog.sum(axis=0)}
    dfeat = dlog @ model.params["dense_W"].T
    if masks is not None:
        dfeat = dfeat * masks[-1]
    h = model.hidden_size
    dtop = np.zeros_like(top)
    dtop[:, -1, :h] = dfeat[:, :h]
    dtop[:, 0, h:] = dfeat[:, h:]
    for l in reversed(range(model.n_layers)):
        cf, cb = caches[l]
        dHf = dtop[:, :, :h]
        dHb_rev = dtop[:, ::-1, h:]
        dXf, gf, _, _ = lstm_sequence_backward(model.cell(l, "f"), cf, dHf, model.input_transform)
        dXb_rev, gb, _, _ = lstm_sequence_backward(model.cell(l, "b"), cb, dHb_rev, model.input_transform)
        grads.update(gf.as_dict(f"L{l}f_"))
        grads.update(gb.as_dict(f"L{l}b_"))
        dinp = dXf + dXb_rev[:, ::-1]
        if l > 0 and masks is not None:
            dinp = dinp * masks[l - 1]
        dtop = dinp
    return loss, grads


def birnn_predict(model: BiRNNModel, windows, batch_size: int = 1024) -> np.ndarray:
    """Probability of class 1 for one window ``(N, d)`` or a batch ``(B, N, d)``."""
    W = np.asarray(windows, dtype=float)
    single = W.ndim == 2
    if single:
        W = W[None]
    if W.shape[1] != model.window:
        raise WrongWindowLength(f"model expects windows of {model.window}, got {W.shape[1]}")
    out = np.empty(len(W))
    for s in range(0, len(W), batch_size):
        logits = _birnn_forward(model, W[s:s + batch_size])[0]
        out[s:s + batch_size] = softmax(logits)[:, 1]
    return out[0] if single else out


def birnn_class_probabilities(model: BiRNNModel, windows) -> np.ndarray:
    W = np.asarray(windows, dtype=float)
    if W.ndim == 2:
        W = W[None]
    return softmax(_birnn_forward(model, W)[0])


def _window_batches(wt, batch_size, rng):
    """Batches never mix occupants; window order is shuffled inside each occupant and batch order across them."""
    groups = wt.window_groups()
    batches = []
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        idx = idx[rng.permutation(len(idx))]
        batches.extend(idx[s:s + batch_size] for s in range(0, len(idx), batch_size))
    order = rng.permutation(len(batches))
    return [batches[k] for k in order]


def _validation_score(model, val):
    probs = birnn_predict(model, val.batch(np.arange(len(val))))
    auc = auc_or_none(probs, val.labels)
    if auc is not None:
        return auc, auc
    y = val.labels
    nll = -np.mean(y * np.log(np.clip(probs, 1e-12, 1)) + (1 - y) * np.log(np.clip(1 - probs, 1e-12, 1)))
    return None, -float(nll)


def birnn_train(wt, validation, cfg: BiRNNConfig = BiRNNConfig()):
    """Mini-batch Nesterov SGD with an exponentially decaying rate and early stopping on validation AUC.

    When the validation labels hold a single class the stopping score falls
    back to negative validation log-loss.
    """
    if validation is None or len(validation) == 0:
        raise EmptyValidation("validation windows are required")
    if wt.window_len != cfg.window or validation.window_len != cfg.window:
        raise WrongWindowLength(f"config window {cfg.window} does not match the tensors")
    rng = np.random.default_rng(cfg.seed)
    model = init_birnn(wt.n_features, cfg, rng)
    opt = Nesterov(model.params, cfg.momentum)
    stopper = EarlyStopping(cfg.patience)
    report = TrainReport(no_op=cfg.lr0 == 0)
    h2 = 2 * cfg.hidden_size
    for epoch in range(cfg.max_epochs):
        lr = exponential_lr(cfg.lr0, cfg.decay, epoch)
        losses, sizes = [], []
        for idx in _window_batches(wt, cfg.batch_size, rng):
            Xb = wt.batch(idx)
            masks = None
            if cfg.dropout_p > 0:
                masks = [_dropout_mask(rng, (len(idx), cfg.window, h2), cfg.dropout_p)
                         for _ in range(cfg.n_layers - 1)]
                masks.append(_dropout_mask(rng, (len(idx), h2), cfg.dropout_p))
            loss, grads = birnn_loss_and_grads(model, Xb, wt.labels[idx], masks)
            check_finite(loss)
            clip_by_global_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads, lr)
            losses.append(loss)
            sizes.append(len(idx))
        auc, score = _validation_score(model, validation)
        report.epochs.append(EpochRecord(epoch, float(np.average(losses, weights=sizes)), lr, auc, score))
        if stopper.update(epoch, score, model.params):
            report.stop_reason = "early_stopping"
            break
    else:
        report.stop_reason = "max_epochs"
    model.params = stopper.best_state
    report.best_epoch = stopper.best_epoch
    return model, report
