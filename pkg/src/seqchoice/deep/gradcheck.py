"""Finite-difference gradient checks for the hand-written networks."""
from __future__ import annotations

import numpy as np

from .lstm import (
    SIGMOID_INPUT,
    BiRNNModel,
    LSTMCellParams,
    birnn_loss_and_grads,
    lstm_sequence_backward,
    lstm_sequence_forward,
)
from .mlp import MLPModel, mlp_loss_and_grads

STEP = 1e-5


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a) + abs(n), 1e-8)


def _lstm_loss_and_grads(p: LSTMCellParams, X, variant):
    """Scalar loss ``0.5 * sum(H**2)`` over a sequence run; exercises every gate path."""
    H, cache = lstm_sequence_forward(p, X, variant)
    _, g, _, _ = lstm_sequence_backward(p, cache, H, variant)
    return 0.5 * float((H * H).sum()), {"Wx": g.Wx, "Wh": g.Wh, "b": g.b}


def numeric_gradient_check(model, batch, n_params: int = 200, seed: int = 0, variant: str = SIGMOID_INPUT,
                           step: float = STEP) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``batch`` is ``(X, y)`` for an MLP or BiRNN, and an input array ``(B, T, d)``
    for bare LSTM cell parameters.  MLPs are checked in infer mode so that no
    dropout or batch statistics enter the comparison.
    """
    rng = np.random.default_rng(seed)
    if isinstance(model, MLPModel):
        X, y = batch
        params = model.params
        loss_fn = lambda: mlp_loss_and_grads(model, X, y, mode="infer")
    elif isinstance(model, BiRNNModel):
        X, y = batch
        params = model.params
        loss_fn = lambda: birnn_loss_and_grads(model, X, y)
    elif isinstance(model, LSTMCellParams):
        X = np.asarray(batch, dtype=float)
        params = {"Wx": model.Wx, "Wh": model.Wh, "b": model.b}
        loss_fn = lambda: _lstm_loss_and_grads(model, X, variant)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    _, grads = loss_fn()
    slots = [(k, i) for k in grads for i in range(params[k].size)]
    pick = rng.choice(len(slots), size=min(n_params, len(slots)), replace=False)
    worst = 0.0
    for s in pick:
        k, i = slots[s]
        flat = params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        lp = loss_fn()[0]
        flat[i] = orig - step
        lm = loss_fn()[0]
        flat[i] = orig
        num = (lp - lm) / (2 * step)
        worst = max(worst, relative_error(float(grads[k].reshape(-1)[i]), num))
    return worst
