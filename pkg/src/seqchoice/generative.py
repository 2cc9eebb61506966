"""Generative trace models and similarity testing.

A tied-weight VAE models single minutes; a recurrent sequence VAE models
windows and can be chained to produce long traces.  Generated and observed
traces are compared with dynamic time warping and a segment-swap
permutation test.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numba
import numpy as np

from .data import MINUTES_PER_DAY, RESOURCES, WEATHER_COLUMNS, Dataset, validate
from .deep.common import Adam, EpochRecord, TrainReport, check_finite, clip_by_global_norm, sigmoid
from .deep.lstm import TANH_STANDARD, LSTMCellParams, lstm_sequence_backward, lstm_sequence_forward
from .errors import EmptySeries, LengthMismatch, TooFewRows, UntrainedModel
from .serialize import register

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_Z_DIM = 8
MIN_PERMUTATIONS = 99


def gaussian_kl(mu, logvar) -> np.ndarray:
    """Per-row KL(N(mu, exp(logvar)) || N(0, I))."""
    return 0.5 * np.sum(np.exp(logvar) + mu * mu - 1.0 - logvar, axis=-1)


def _recon_nll(x, o, out_logvar, binary):
    """Per-row negative log-likelihood and its gradients w.r.t. ``o`` and ``out_logvar``."""
    gauss = ~binary
    nll = np.zeros(x.shape[:-1])
    do = np.zeros_like(o)
    dlv = np.zeros_like(out_logvar)
    if gauss.any():
        xg, og, lv = x[..., gauss], o[..., gauss], out_logvar[gauss]
        inv = np.exp(-lv)
        r = xg - og
        nll = nll + 0.5 * np.sum(LOG_2PI + lv + r * r * inv, axis=-1)
        do[..., gauss] = -r * inv
        dlv[gauss] = 0.5 * (1.0 - r * r * inv).reshape(-1, gauss.sum()).sum(axis=0)
    if binary.any():
        xb, ob = x[..., binary], o[..., binary]
        nll = nll + np.sum(np.logaddexp(0.0, ob) - xb * ob, axis=-1)
        do[..., binary] = sigmoid(ob) - xb
    return nll, do, dlv


def _binary_mask(binary, d):
    if binary is None:
        return np.zeros(d, dtype=bool)
    b = np.asarray(binary, dtype=bool)
    if b.shape != (d,):
        raise LengthMismatch(f"binary mask has {b.size} entries for {d} channels")
    return b


# ---------------------------------------------------------------------------
# tied-weight VAE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VAEConfig:
    hidden_sizes: tuple = (32, 16)
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 3e-3
    clip_norm: float | None = 10.0
    seed: int = 0


@register("vae")
@dataclass
class VAEModel:
    """Encoder ``x -> tanh -> tanh -> (mu, logvar)``; the decoder reuses the transposed encoder matrices."""

    params: dict      # W1 (d,h1), b1, W2 (h1,h2), b2, Wmu (h2,z), bmu, Wlv (h2,z), blv, c2, c1, c0, out_logvar
    binary: np.ndarray

    @property
    def z_dim(self) -> int:
        return self.params["Wmu"].shape[1]

    @property
    def n_channels(self) -> int:
        return self.params["W1"].shape[0]

    def decoder_weights(self) -> list[np.ndarray]:
        p = self.params
        return [p["Wmu"].T, p["W2"].T, p["W1"].T]

    def to_params(self):
        return {"params": self.params, "binary": self.binary}

    @classmethod
    def from_params(cls, p):
        return cls(dict(p["params"]), np.asarray(p["binary"], dtype=bool))


def init_vae(d, z_dim, cfg: VAEConfig, binary=None, rng=None) -> VAEModel:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    h1, h2 = cfg.hidden_sizes

    def glorot(a, b):
        return rng.normal(0.0, math.sqrt(2.0 / (a + b)), (a, b))

    p = {
        "W1": glorot(d, h1), "b1": np.zeros(h1),
        "W2": glorot(h1, h2), "b2": np.zeros(h2),
        "Wmu": glorot(h2, z_dim), "bmu": np.zeros(z_dim),
        "Wlv": glorot(h2, z_dim) * 0.1, "blv": np.zeros(z_dim),
        "c2": np.zeros(h2), "c1": np.zeros(h1), "c0": np.zeros(d),
        "out_logvar": np.zeros(d),
    }
    return VAEModel(p, _binary_mask(binary, d))


def _vae_decode(p, z):
    g2 = np.tanh(z @ p["Wmu"].T + p["c2"])
    g1 = np.tanh(g2 @ p["W2"].T + p["c1"])
    return g1 @ p["W1"].T + p["c0"], g1, g2


def vae_encode(model: VAEModel, X):
    p = model.params
    h1 = np.tanh(X @ p["W1"] + p["b1"])
    h2 = np.tanh(h1 @ p["W2"] + p["b2"])
    return h2 @ p["Wmu"] + p["bmu"], h2 @ p["Wlv"] + p["blv"], h1, h2


def vae_loss_and_grads(model: VAEModel, X, eps):
    """Negative mean ELBO with the reparameterization noise ``eps`` held fixed."""
    p = model.params
    X = np.asarray(X, dtype=float)
    n = len(X)
    mu, lv, h1, h2 = vae_encode(model, X)
    s = np.exp(0.5 * lv)
    z = mu + s * eps
    o, g1, g2 = _vae_decode(p, z)
    nll, do, dolv = _recon_nll(X, o, p["out_logvar"], model.binary)
    kl = gaussian_kl(mu, lv)
    loss = float(np.mean(nll + kl))
    do = do / n
    g = {k: np.zeros_like(v) for k, v in p.items()}
    g["out_logvar"] = dolv / n
    g["W1"] += do.T @ g1
    g["c0"] = do.sum(axis=0)
    dd1 = (do @ p["W1"]) * (1.0 - g1 * g1)
    g["W2"] += dd1.T @ g2
    g["c1"] = dd1.sum(axis=0)
    dd2 = (dd1 @ p["W2"]) * (1.0 - g2 * g2)
    g["Wmu"] += dd2.T @ z
    g["c2"] = dd2.sum(axis=0)
    dz = dd2 @ p["Wmu"]
    dmu = dz + mu / n
    dlv = dz * eps * 0.5 * s + 0.5 * (np.exp(lv) - 1.0) / n
    g["Wmu"] += h2.T @ dmu
    g["bmu"] = dmu.sum(axis=0)
    g["Wlv"] = h2.T @ dlv
    g["blv"] = dlv.sum(axis=0)
    da2 = (dmu @ p["Wmu"].T + dlv @ p["Wlv"].T) * (1.0 - h2 * h2)
    g["W2"] += h1.T @ da2
    g["b2"] = da2.sum(axis=0)
    da1 = (da2 @ p["W2"].T) * (1.0 - h1 * h1)
    g["W1"] += X.T @ da1
    g["b1"] = da1.sum(axis=0)
    return loss, g, {"reconstruction": float(np.mean(nll)), "kl": float(np.mean(kl))}


def vae_train(X, z_dim: int = DEFAULT_Z_DIM, cfg: VAEConfig = VAEConfig(), binary=None):
    """Adam on the negative ELBO with reparameterized gradients."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 10 * z_dim:
        raise TooFewRows(f"need at least {10 * z_dim} rows for a {z_dim}-dimensional latent space")
    rng = np.random.default_rng(cfg.seed)
    model = init_vae(X.shape[1], z_dim, cfg, binary, rng)
    opt = Adam(model.params)
    report = TrainReport(no_op=cfg.learning_rate == 0)
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            eps = rng.standard_normal((len(idx), z_dim))
            loss, grads, _ = vae_loss_and_grads(model, X[idx], eps)
            check_finite(loss)
            clip_by_global_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads, cfg.learning_rate)
            total += loss * len(idx)
        report.epochs.append(EpochRecord(epoch, total / n, cfg.learning_rate))
    report.stop_reason = "max_epochs"
    return model, report


def vae_generate(model: VAEModel, n: int, seed=0) -> np.ndarray:
    """Decode prior draws.  Gaussian channels include observation noise; binary channels are probabilities."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.z_dim))
    noise = rng.standard_normal((n, model.n_channels))
    o, _, _ = _vae_decode(model.params, z)
    out = o + np.exp(0.5 * model.params["out_logvar"]) * noise
    out[:, model.binary] = sigmoid(o[:, model.binary])
    return out


# ---------------------------------------------------------------------------
# recurrent sequence VAE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RVAEConfig:
    hidden_size: int = 32
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 5e-3
    kl_weight: float = 1.0
    clip_norm: float | None = 5.0
    seed: int = 0


@register("rvae")
@dataclass
class RecurrentVAEModel:
    """LSTM encoder to a window latent; LSTM decoder fed ``[z, previous output]`` one step at a time."""

    params: dict | None   # enc_*, dec_* LSTM blocks, Wmu, bmu, Wlv, blv, Wo, bo, out_logvar
    binary: np.ndarray
    window: int
    z_dim: int

    def cell(self, prefix) -> LSTMCellParams:
        p = self.params
        return LSTMCellParams(p[prefix + "Wx"], p[prefix + "Wh"], p[prefix + "b"])

    def to_params(self):
        return {"params": self.params, "binary": self.binary, "window": self.window, "z_dim": self.z_dim}

    @classmethod
    def from_params(cls, p):
        return cls(dict(p["params"]), np.asarray(p["binary"], dtype=bool), p["window"], p["z_dim"])


def init_rvae(d, window, z_dim, cfg: RVAEConfig, binary=None, rng=None) -> RecurrentVAEModel:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    h = cfg.hidden_size
    p = {}
    p.update(LSTMCellParams.init(rng, d, h).as_dict("enc_"))
    p.update(LSTMCellParams.init(rng, z_dim + d, h).as_dict("dec_"))
    for k in ("enc_Wx", "enc_Wh", "dec_Wx", "dec_Wh"):
        p[k] *= 0.5
    p["Wmu"] = rng.normal(0, 1 / math.sqrt(h), (h, z_dim))
    p["bmu"] = np.zeros(z_dim)
    p["Wlv"] = rng.normal(0, 0.1 / math.sqrt(h), (h, z_dim))
    p["blv"] = np.zeros(z_dim)
    p["Wo"] = rng.normal(0, 1 / math.sqrt(h), (h, d))
    p["bo"] = np.zeros(d)
    p["out_logvar"] = np.zeros(d)
    return RecurrentVAEModel(p, _binary_mask(binary, d), window, z_dim)


def _decoder_inputs(z, prev):
    B, T, _ = prev.shape
    return np.concatenate([np.repeat(z[:, None, :], T, axis=1), prev], axis=2)


def rvae_loss_and_grads(model: RecurrentVAEModel, W, eps, kl_weight: float = 1.0):
    """Negative ELBO per window (teacher forcing: the decoder sees the true previous step)."""
    p = model.params
    W = np.asarray(W, dtype=float)
    B, T, d = W.shape
    enc, dec = model.cell("enc_"), model.cell("dec_")
    He, ce = lstm_sequence_forward(enc, W, TANH_STANDARD)
    hT = He[:, -1]
    mu = hT @ p["Wmu"] + p["bmu"]
    lv = hT @ p["Wlv"] + p["blv"]
    s = np.exp(0.5 * lv)
    z = mu + s * eps
    prev = np.concatenate([np.zeros((B, 1, d)), W[:, :-1]], axis=1)
    Hd, cd = lstm_sequence_forward(dec, _decoder_inputs(z, prev), TANH_STANDARD)
    o = Hd @ p["Wo"] + p["bo"]
    nll, do, dolv = _recon_nll(W, o, p["out_logvar"], model.binary)
    nll = nll.sum(axis=1)
    kl = gaussian_kl(mu, lv)
    loss = float(np.mean(nll + kl_weight * kl))
    do = do / B
    g = {"out_logvar": dolv / B, "Wo": np.einsum("bth,btd->hd", Hd, do), "bo": do.sum(axis=(0, 1))}
    dHd = do @ p["Wo"].T
    dXd, gd, _, _ = lstm_sequence_backward(dec, cd, dHd, TANH_STANDARD)
    g.update(gd.as_dict("dec_"))
    dz = dXd[:, :, :model.z_dim].sum(axis=1)
    dmu = dz + kl_weight * mu / B
    dlv = dz * eps * 0.5 * s + kl_weight * 0.5 * (np.exp(lv) - 1.0) / B
    g["Wmu"] = hT.T @ dmu
    g["bmu"] = dmu.sum(axis=0)
    g["Wlv"] = hT.T @ dlv
    g["blv"] = dlv.sum(axis=0)
    dHe = np.zeros_like(He)
    dHe[:, -1] = dmu @ p["Wmu"].T + dlv @ p["Wlv"].T
    _, ge, _, _ = lstm_sequence_backward(enc, ce, dHe, TANH_STANDARD)
    g.update(ge.as_dict("enc_"))
    return loss, g, {"reconstruction": float(np.mean(nll)), "kl": float(np.mean(kl))}


def _windows_array(wt):
    if hasattr(wt, "batch"):
        return wt.batch(np.arange(len(wt)))
    W = np.asarray(wt, dtype=float)
    if W.ndim == 2:
        W = W[:, :, None]
    return W


def rvae_train(wt, z_dim: int = DEFAULT_Z_DIM, cfg: RVAEConfig = RVAEConfig(), binary=None):
    """Fit on a WindowedTensor or an array of windows ``(B, N, d)``."""
    W = _windows_array(wt)
    B, T, d = W.shape
    if B < 10 * z_dim:
        raise TooFewRows(f"need at least {10 * z_dim} windows for a {z_dim}-dimensional latent space")
    rng = np.random.default_rng(cfg.seed)
    model = init_rvae(d, T, z_dim, cfg, binary, rng)
    opt = Adam(model.params)
    report = TrainReport(no_op=cfg.learning_rate == 0)
    for epoch in range(cfg.epochs):
        order = rng.permutation(B)
        total = 0.0
        for s in range(0, B, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            eps = rng.standard_normal((len(idx), z_dim))
            loss, grads, _ = rvae_loss_and_grads(model, W[idx], eps, cfg.kl_weight)
            check_finite(loss)
            clip_by_global_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads, cfg.learning_rate)
            total += loss * len(idx)
        report.epochs.append(EpochRecord(epoch, total / B, cfg.learning_rate))
    report.stop_reason = "max_epochs"
    return model, report


def rvae_generate(model: RecurrentVAEModel, length: int, seed=0, n_series: int = 1, noise: bool = False):
    """Autoregressive decode of ``length`` steps.

    The decoder state runs on across window boundaries; a fresh latent is
    drawn at the start of each window.  Binary channels emit probabilities
    and feed the rounded value back.  Returns ``(length, d)`` for one series,
    ``(n_series, length, d)`` otherwise.
    """
    if model is None or model.params is None:
        raise UntrainedModel("recurrent VAE has not been trained")
    rng = np.random.default_rng(seed)
    p = model.params
    dec = model.cell("dec_")
    d = len(model.binary)
    h = dec.hidden_size
    hs = np.zeros((n_series, h))
    cs = np.zeros((n_series, h))
    prev = np.zeros((n_series, d))
    out = np.empty((n_series, length, d))
    sd = np.exp(0.5 * p["out_logvar"])
    z = None
    for t in range(length):
        if t % model.window == 0:
            z = rng.standard_normal((n_series, model.z_dim))
        x = np.concatenate([z, prev], axis=1)[:, None, :]
        H, cache = lstm_sequence_forward(dec, x, TANH_STANDARD, hs, cs)
        hs, cs = H[:, 0], cache["c"][0]
        o = hs @ p["Wo"] + p["bo"]
        y = o + sd * rng.standard_normal(o.shape) if noise else o.copy()
        y[:, model.binary] = sigmoid(o[:, model.binary])
        out[:, t] = y
        prev = y.copy()
        prev[:, model.binary] = np.round(y[:, model.binary])
    return out[0] if n_series == 1 else out


# ---------------------------------------------------------------------------
# dynamic time warping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DtwResult:
    score: float
    path_length: int
    cost: str = "abs"


@numba.njit(cache=True)
def _dtw_table(a, b):
    n, m = a.shape[0], b.shape[0]
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c = 0.0
            for k in range(a.shape[1]):
                c += abs(a[i - 1, k] - b[j - 1, k])
            best = D[i - 1, j - 1]
            if D[i - 1, j] < best:
                best = D[i - 1, j]
            if D[i, j - 1] < best:
                best = D[i, j - 1]
            D[i, j] = c + best
    return D


@numba.njit(cache=True)
def _dtw_score(a, b):
    m = b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.empty(m + 1)
    prev[0] = 0.0
    for i in range(1, a.shape[0] + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            c = 0.0
            for k in range(a.shape[1]):
                c += abs(a[i - 1, k] - b[j - 1, k])
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        prev, cur = cur, prev
    return prev[m]


def _as_series(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise EmptySeries("DTW needs non-empty series")
    return np.ascontiguousarray(x)


def _path_length(D):
    i, j = D.shape[0] - 1, D.shape[1] - 1
    steps = 1
    while (i, j) != (1, 1):
        moves = ((D[i - 1, j - 1], i - 1, j - 1), (D[i - 1, j], i - 1, j), (D[i, j - 1], i, j - 1))
        _, i, j = min(moves, key=lambda m: m[0])
        steps += 1
    return steps


def dtw_distance(a, b, with_path: bool = True) -> DtwResult:
    """Minimal accumulated ``|a_i - b_j|`` cost over match, insert and delete steps.

    Multichannel series sum the absolute differences across channels.
    """
    A, Bs = _as_series(a), _as_series(b)
    if A.shape[1] != Bs.shape[1]:
        raise LengthMismatch("series have different channel counts")
    if with_path:
        D = _dtw_table(A, Bs)
        return DtwResult(float(D[-1, -1]), _path_length(D))
    return DtwResult(float(_dtw_score(A, Bs)), 0)


@dataclass
class PermTestResult:
    observed: float
    permuted: np.ndarray
    p_value: float

    @property
    def n_perm(self) -> int:
        return len(self.permuted)


def permutation_test_dtw(original, generated, n_perm: int = 999, seed=0,
                         segment_len: int = MINUTES_PER_DAY) -> PermTestResult:
    """Swap aligned segments between the two series at random and recompute DTW.

    Smaller scores are more extreme: ``p = (1 + #{perm <= observed}) / (1 + n_perm)``.
    """
    A, B = _as_series(original), _as_series(generated)
    if A.shape != B.shape:
        raise LengthMismatch(f"series shapes differ: {A.shape} vs {B.shape}")
    if n_perm < MIN_PERMUTATIONS:
        raise ValueError(f"n_perm must be at least {MIN_PERMUTATIONS}")
    rng = np.random.default_rng(seed)
    observed = float(_dtw_score(A, B))
    n = len(A)
    seg_id = np.arange(n) // segment_len
    n_seg = int(seg_id[-1]) + 1
    perms = np.empty(n_perm)
    for k in range(n_perm):
        swap = (rng.random(n_seg) < 0.5)[seg_id]
        pa = np.where(swap[:, None], B, A)
        pb = np.where(swap[:, None], A, B)
        perms[k] = _dtw_score(np.ascontiguousarray(pa), np.ascontiguousarray(pb))
    p = (1 + int(np.sum(perms <= observed))) / (1 + n_perm)
    return PermTestResult(observed, perms, p)


# ---------------------------------------------------------------------------
# traces in the dataset schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceChannels:
    """Which dataset columns a trace model sees, and how continuous ones were scaled."""

    resources: tuple        # ResourceKind per binary channel
    weather: tuple          # weather column names, continuous channels
    mean: np.ndarray
    sd: np.ndarray

    @property
    def names(self) -> list[str]:
        return [f"{r.value}_status" for r in self.resources] + list(self.weather)

    @property
    def binary(self) -> np.ndarray:
        return np.array([True] * len(self.resources) + [False] * len(self.weather))


def trace_channels(ds: Dataset, occupant: str | None = None) -> tuple[np.ndarray, TraceChannels]:
    """Status of installed resources plus standardized weather as a ``(rows, channels)`` matrix."""
    if occupant is not None:
        ds = ds.for_occupant(occupant)
    resources = tuple(r for r in RESOURCES if ds.installed(r))
    weather_names = tuple(c for c in WEATHER_COLUMNS if not np.all(np.isnan(ds.weather_column(c))))
    cols = [np.nan_to_num(ds.status[:, r.index]) for r in resources]
    W = np.column_stack([ds.weather_column(c) for c in weather_names]) if weather_names else np.zeros((len(ds), 0))
    W = _ffill(W)
    mean = np.nanmean(W, axis=0) if W.size else np.zeros(0)
    sd = np.nanstd(W, axis=0) if W.size else np.zeros(0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = np.nan_to_num((W - mean) / sd)
    X = np.column_stack(cols + [Z]) if cols else Z
    return X, TraceChannels(resources, weather_names, mean, sd)


def _ffill(W):
    W = W.copy()
    for j in range(W.shape[1]):
        col = W[:, j]
        ok = ~np.isnan(col)
        idx = np.where(ok, np.arange(len(col)), 0)
        np.maximum.accumulate(idx, out=idx)
        W[:, j] = col[idx]
    return W


def traces_to_dataset(series, channels: TraceChannels, start: dt.datetime, occupant: str = "gen01") -> Dataset:
    """Turn a generated ``(T, channels)`` trace into dataset rows starting at ``start``."""
    S = np.asarray(series, dtype=float)
    n = len(S)
    k = len(channels.resources)
    stamps = np.datetime64(start, "m") + np.arange(n).astype("timedelta64[m]")
    status = np.full((n, 4), np.nan)
    usage = np.full((n, 4), np.nan)
    day = stamps.astype("datetime64[D]").astype(np.int64)
    first = np.r_[True, day[1:] != day[:-1]]
    for c, r in enumerate(channels.resources):
        on = (S[:, c] >= 0.5).astype(float)
        status[:, r.index] = on
        cum = np.cumsum(on)
        base = np.maximum.accumulate(np.where(first, cum - on, 0.0))
        usage[:, r.index] = cum - base
    weather = np.full((n, len(WEATHER_COLUMNS)), np.nan)
    for c, name in enumerate(channels.weather):
        vals = S[:, k + c] * channels.sd[c] + channels.mean[c]
        if name.endswith("humidity_pct"):
            vals = np.clip(vals, 0.0, 100.0)
        weather[:, WEATHER_COLUMNS.index(name)] = vals
    ds = Dataset(
        timestamps=stamps,
        occupants=np.full(n, occupant, dtype=object),
        status=status,
        usage=usage,
        baseline=np.full((n, 4), np.nan),
        points_game=np.zeros(n),
        points_survey=np.zeros(n),
        rank=np.full(n, np.nan),
        portal_visits=np.zeros(n, dtype=np.int64),
        weather=weather,
    )
    validate(ds)
    return ds
