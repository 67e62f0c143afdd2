"""Probabilistic recovery of physical parameters from condition vectors.

A shared trunk feeds two heads: a linear head for the parameter means and a
softplus head for per-parameter standard deviations. Training minimizes the
Gaussian negative log-likelihood on min-max scaled targets; predictions are
mapped back to physical units, optionally clamped to admissible bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .monitoring import MinMaxScaler
from .neural import Adam, DenseNetwork, Layer

SIGMA_FLOOR = 1e-6


@dataclass
class InferenceSchedule:
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")


class InferenceModel:
    """Trunk with mean and standard-deviation heads over scaled targets."""

    def __init__(self, trunk: DenseNetwork, mean_head: DenseNetwork,
                 std_head: DenseNetwork, cond_dim: int, n_params: int,
                 x_scaler: MinMaxScaler | None = None,
                 y_scaler: MinMaxScaler | None = None):
        if trunk.d_in != cond_dim:
            raise ConfigurationError("trunk input width mismatch")
        if mean_head.d_out != n_params or std_head.d_out != n_params:
            raise ConfigurationError("head output width mismatch")
        self.trunk = trunk
        self.mean_head = mean_head
        self.std_head = std_head
        self.cond_dim = cond_dim
        self.n_params = n_params
        self.x_scaler = x_scaler if x_scaler is not None else MinMaxScaler()
        self.y_scaler = y_scaler if y_scaler is not None else MinMaxScaler()
        # per-parameter predictive-spread inflation, set by calibration
        self.sigma_scale = np.ones(n_params)

    @classmethod
    def create(cls, cond_dim: int, n_params: int,
               hidden: tuple[int, ...] = (64, 64),
               seed: int = 0) -> "InferenceModel":
        trunk = DenseNetwork.create([cond_dim, *hidden],
                                    ["tanh"] * len(hidden), seed=seed)
        mean_head = DenseNetwork.create([hidden[-1], n_params], ["linear"],
                                        seed=seed + 1)
        std_head = DenseNetwork.create([hidden[-1], n_params], ["softplus"],
                                       seed=seed + 2)
        return cls(trunk, mean_head, std_head, cond_dim, n_params)

    def parameters(self) -> list[np.ndarray]:
        return (self.trunk.parameters() + self.mean_head.parameters()
                + self.std_head.parameters())

    def forward(self, w_scaled: np.ndarray):
        """Scaled conditions -> (mu, sigma) in scaled target units."""
        h = self.trunk.forward(np.atleast_2d(w_scaled))
        mu = self.mean_head.forward(h)
        sigma = self.std_head.forward(h) + SIGMA_FLOOR
        return mu, sigma

    def get_state(self):
        meta = {
            "cond_dim": self.cond_dim, "n_params": self.n_params,
            "trunk_acts": [l.activation for l in self.trunk.layers],
        }
        arrays = {}
        for name, net in (("trunk", self.trunk), ("mean", self.mean_head),
                          ("std", self.std_head)):
            for i, layer in enumerate(net.layers):
                arrays[f"{name}_w{i}"] = layer.w
                arrays[f"{name}_b{i}"] = layer.b
        for tag, scaler in (("x", self.x_scaler), ("y", self.y_scaler)):
            if scaler.lo is not None:
                arrays[f"{tag}_lo"] = scaler.lo
                arrays[f"{tag}_span"] = scaler.span
        arrays["sigma_scale"] = self.sigma_scale
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays) -> "InferenceModel":
        def build(name, acts):
            layers = []
            for i, act in enumerate(acts):
                layers.append(Layer(arrays[f"{name}_w{i}"].copy(),
                                    arrays[f"{name}_b{i}"].copy(), act))
            return DenseNetwork(layers)

        trunk = build("trunk", meta["trunk_acts"])
        mean_head = build("mean", ["linear"])
        std_head = build("std", ["softplus"])
        scalers = []
        for tag in ("x", "y"):
            s = MinMaxScaler()
            if f"{tag}_lo" in arrays:
                s.lo = arrays[f"{tag}_lo"].copy()
                s.span = arrays[f"{tag}_span"].copy()
            scalers.append(s)
        model = cls(trunk, mean_head, std_head, meta["cond_dim"],
                    meta["n_params"], scalers[0], scalers[1])
        if "sigma_scale" in arrays:
            model.sigma_scale = arrays["sigma_scale"].copy()
        return model


def gaussian_nll(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
    """Batch-mean negative log-likelihood of diagonal Gaussians."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    k = y.shape[1]
    per = 0.5 * np.sum(np.log(sigma ** 2) + ((y - mu) / sigma) ** 2, axis=1)
    return float(np.mean(per) + 0.5 * k * np.log(2.0 * np.pi))


def nll_loss(model: InferenceModel, w_scaled: np.ndarray,
             y_scaled: np.ndarray, with_gradients: bool = False):
    """NLL on a batch, optionally with parameter gradients matching
    ``model.parameters()``."""
    w = np.atleast_2d(np.asarray(w_scaled, dtype=float))
    y = np.atleast_2d(np.asarray(y_scaled, dtype=float))
    b = w.shape[0]
    h, trunk_caches = model.trunk.forward_cached(w)
    mu, mean_caches = model.mean_head.forward_cached(h)
    raw, std_caches = model.std_head.forward_cached(h)
    sigma = raw + SIGMA_FLOOR
    value = gaussian_nll(y, mu, sigma)
    if not with_gradients:
        return value, None, (mu, sigma)
    g_mu = (mu - y) / sigma ** 2 / b
    g_sigma = (1.0 / sigma - (y - mu) ** 2 / sigma ** 3) / b
    mean_grads, gh_mean = model.mean_head.backward(mean_caches, g_mu)
    std_grads, gh_std = model.std_head.backward(std_caches, g_sigma)
    trunk_grads, _ = model.trunk.backward(trunk_caches, gh_mean + gh_std)
    return value, trunk_grads + mean_grads + std_grads, (mu, sigma)


def train_inference(w: np.ndarray, y: np.ndarray,
                    schedule: InferenceSchedule,
                    hidden: tuple[int, ...] = (64, 64),
                    model: InferenceModel | None = None):
    """Fit the regressor; returns (model, per-epoch NLL history).

    When ``model`` is given its scalers must already be fitted and training
    continues in place (used by cross-validation folds).
    """
    W = np.atleast_2d(np.asarray(w, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if W.shape[0] != Y.shape[0]:
        raise ConfigurationError("need one target row per condition row")
    if model is None:
        model = InferenceModel.create(W.shape[1], Y.shape[1], hidden=hidden,
                                      seed=schedule.seed)
        model.x_scaler.fit(W)
        model.y_scaler.fit(Y)
    Ws = model.x_scaler.transform(W)
    Ys = model.y_scaler.transform(Y)

    params = model.parameters()
    opt = Adam(params, lr=schedule.learning_rate)
    rng = np.random.default_rng([schedule.seed, 201])
    n = W.shape[0]
    history = []
    for _ in range(schedule.epochs):
        order = rng.permutation(n)
        total, n_batches = 0.0, 0
        for lo in range(0, n, schedule.batch_size):
            idx = order[lo:lo + schedule.batch_size]
            value, grads, _ = nll_loss(model, Ws[idx], Ys[idx],
                                       with_gradients=True)
            opt.step(params, grads)
            total += value
            n_batches += 1
        history.append(total / n_batches)
    return model, history


def cross_validate(w: np.ndarray, y: np.ndarray, schedule: InferenceSchedule,
                   hidden: tuple[int, ...] = (64, 64),
                   n_folds: int = 5) -> dict:
    """K-fold assessment: per-fold validation NLL and per-parameter RMSE
    in physical units. Fold assignment is a seeded permutation."""
    W = np.atleast_2d(np.asarray(w, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    n = W.shape[0]
    if n_folds < 2 or n_folds > n:
        raise ConfigurationError("fold count must lie in [2, n_samples]")
    rng = np.random.default_rng([schedule.seed, 202])
    folds = np.array_split(rng.permutation(n), n_folds)
    val_nll, val_rmse, z_sq = [], [], []
    for f, hold in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), hold)
        fold_sched = InferenceSchedule(
            epochs=schedule.epochs, batch_size=schedule.batch_size,
            learning_rate=schedule.learning_rate, seed=schedule.seed + f)
        model, _ = train_inference(W[train_idx], Y[train_idx], fold_sched,
                                   hidden=hidden)
        mu, sigma = infer_parameters(model, W[hold])
        ys = model.y_scaler.transform(Y[hold])
        ms = model.x_scaler.transform(W[hold])
        mu_s, sig_s = model.forward(ms)
        val_nll.append(gaussian_nll(ys, mu_s, sig_s))
        val_rmse.append(np.sqrt(np.mean((mu - Y[hold]) ** 2, axis=0)))
        z_sq.append(((Y[hold] - mu) / sigma) ** 2)
    return {
        "folds": [np.sort(f).tolist() for f in folds],
        "val_nll": np.asarray(val_nll),
        "val_rmse": np.vstack(val_rmse),
        "z_rms": np.sqrt(np.mean(np.vstack(z_sq), axis=0)),
    }


def apply_sigma_calibration(model: InferenceModel,
                            z_rms: np.ndarray) -> np.ndarray:
    """Inflate the model's predictive spread by held-out z-score RMS.

    A perfectly calibrated Gaussian head has unit z-score RMS on unseen
    data; larger values mean the head underestimates its spread. The factor
    is floored at one so calibration never narrows a band.
    """
    model.sigma_scale = np.maximum(1.0, np.asarray(z_rms, dtype=float))
    return model.sigma_scale


def infer_parameters(model: InferenceModel, w: np.ndarray,
                     bounds: tuple[np.ndarray, np.ndarray] | None = None):
    """Condition rows -> (means, standard deviations) in physical units.

    ``bounds`` (lower, upper) clamps the means to the admissible box; the
    standard deviations are left unclamped but carry any calibration factor
    stored on the model.
    """
    if model.y_scaler.lo is None or model.x_scaler.lo is None:
        raise ConfigurationError("model must be trained before inference")
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    ws = model.x_scaler.transform(np.atleast_2d(w))
    mu_s, sig_s = model.forward(ws)
    mu = model.y_scaler.inverse(mu_s)
    sigma = sig_s * model.sigma_scale * model.y_scaler.span
    if bounds is not None:
        mu = np.clip(mu, bounds[0], bounds[1])
    if single:
        return mu[0], sigma[0]
    return mu, sigma
