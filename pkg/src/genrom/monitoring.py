"""Synthetic monitoring data and its compression into condition features.

Sensor signals (acceleration channels) get reproducible Gaussian noise at a
fraction of each channel's RMS, are condensed either into per-channel
statistics or into pairwise ARX coefficients between neighbouring sensors,
then min-max scaled and compressed with PCA. The resulting low-dimensional
vector w is what conditions the generative model and the parameter
regressor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .neural import Adam, DenseNetwork

N_STAT_FEATURES = 8


def add_measurement_noise(signals: np.ndarray, ratio: float,
                          seed: int) -> np.ndarray:
    """Add zero-mean Gaussian noise with std = ratio * RMS per channel.

    A silent channel (zero RMS) stays silent. ratio = 0 returns an
    identical copy.
    """
    if ratio < 0:
        raise ConfigurationError("noise ratio must be >= 0")
    s = np.atleast_2d(np.asarray(signals, dtype=float))
    rms = np.sqrt(np.mean(s ** 2, axis=1))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(s.shape) * (ratio * rms)[:, None]
    out = s + noise
    return out if np.asarray(signals).ndim > 1 else out[0]


@dataclass(frozen=True)
class SensorLayout:
    """Which dofs carry sensors; order defines the channel order."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) < 1:
            raise ConfigurationError("need at least one sensor")
        if len(set(self.indices)) != len(self.indices):
            raise ConfigurationError("duplicate sensor locations")

    @classmethod
    def spread(cls, n_dof: int, n_sensors: int) -> "SensorLayout":
        """Evenly spaced sensors across the chain."""
        if not 1 <= n_sensors <= n_dof:
            raise ConfigurationError("sensor count must be in [1, n_dof]")
        idx = np.unique(np.round(np.linspace(0, n_dof - 1, n_sensors)).astype(int))
        return cls(indices=tuple(int(i) for i in idx))

    @property
    def n_sensors(self) -> int:
        return len(self.indices)

    def pick(self, full_field: np.ndarray) -> np.ndarray:
        for i in self.indices:
            if not 0 <= i < full_field.shape[0]:
                raise ConfigurationError(f"sensor dof {i} outside the model")
        return full_field[list(self.indices)]


def statistical_features(signals: np.ndarray, dt: float) -> np.ndarray:
    """Eight features per channel, concatenated channel-major.

    Per channel: mean, std, RMS, peak |amplitude|, kurtosis (m4/m2^2),
    zero-crossing rate, dominant frequency, spectral centroid. Spectral
    quantities are computed on the de-meaned signal.
    """
    s = np.atleast_2d(np.asarray(signals, dtype=float))
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    n = s.shape[1]
    if n < 4:
        raise ConfigurationError("signal too short for features")
    feats = []
    freqs = np.fft.rfftfreq(n, dt)
    for ch in s:
        mean = float(np.mean(ch))
        centered = ch - mean
        var = float(np.mean(centered ** 2))
        std = float(np.sqrt(var))
        rms = float(np.sqrt(np.mean(ch ** 2)))
        peak = float(np.max(np.abs(ch)))
        kurt = float(np.mean(centered ** 4) / var ** 2) if var > 0 else 0.0
        zcr = float(np.count_nonzero(ch[1:] * ch[:-1] < 0)) / (n - 1)
        spec = np.abs(np.fft.rfft(centered))
        spec[0] = 0.0
        total = float(spec.sum())
        if total > 0:
            f_dom = float(freqs[int(np.argmax(spec))])
            centroid = float((freqs * spec).sum() / total)
        else:
            f_dom = 0.0
            centroid = 0.0
        feats.extend([mean, std, rms, peak, kurt, zcr, f_dom, centroid])
    return np.array(feats)


@dataclass
class ARXModel:
    """Linear (or single-hidden-layer) lag model from one channel to another.

    Prediction: y[t] = sum_i a_i y[t-i] + sum_j b_j x[t-delay-j], with
    i = 1..n_a and j = 0..n_b-1. The coefficient vector stacks the a's then
    the b's; the nonlinear variant stores flattened network weights instead.
    """

    n_a: int
    n_b: int
    delay: int
    coefficients: np.ndarray
    residual_rms: float
    hidden: int = 0

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]


def _lag_matrix(y: np.ndarray, x: np.ndarray | None, n_a: int, n_b: int,
                delay: int) -> tuple[np.ndarray, np.ndarray]:
    n = y.shape[0]
    t0 = n_a
    if x is not None and n_b > 0:
        t0 = max(t0, delay + n_b - 1)
    if t0 >= n:
        raise ConfigurationError("signal too short for the requested lags")
    cols = [y[t0 - i:n - i] for i in range(1, n_a + 1)]
    if x is not None:
        cols += [x[t0 - delay - j:n - delay - j] for j in range(n_b)]
    return np.column_stack(cols), y[t0:]


def fit_arx(y: np.ndarray, x: np.ndarray | None = None, n_a: int = 8,
            n_b: int = 8, delay: int = 0, ridge: float = 0.0,
            hidden: int = 0, seed: int = 0) -> ARXModel:
    """Least-squares fit of the lag model; ridge > 0 regularizes.

    hidden > 0 swaps the linear map for one tanh hidden layer trained by
    Adam; the feature vector is then the flattened network weights.
    """
    y = np.asarray(y, dtype=float)
    x = None if x is None else np.asarray(x, dtype=float)
    if x is None:
        n_b = 0
    if n_a < 1 and n_b < 1:
        raise ConfigurationError("model needs at least one lag term")
    if delay < 0 or ridge < 0:
        raise ConfigurationError("delay and ridge must be >= 0")
    phi, target = _lag_matrix(y, x, n_a, n_b, delay)

    if hidden > 0:
        net = DenseNetwork.create([phi.shape[1], hidden, 1],
                                  ["tanh", "linear"], seed=seed)
        opt = Adam(net.parameters(), lr=1e-2)
        tgt = target[:, None]
        for _ in range(300):
            out, caches = net.forward_cached(phi)
            grads, _ = net.backward(caches, (out - tgt) / phi.shape[0])
            if ridge > 0:
                for g, p in zip(grads, net.parameters()):
                    g += ridge * p
            opt.step(net.parameters(), grads)
        resid = net.forward(phi)[:, 0] - target
        coeffs = np.concatenate([p.ravel() for p in net.parameters()])
    else:
        if ridge > 0:
            a = phi.T @ phi + ridge * np.eye(phi.shape[1])
            coeffs = np.linalg.solve(a, phi.T @ target)
        else:
            coeffs, *_ = np.linalg.lstsq(phi, target, rcond=None)
        resid = phi @ coeffs - target
    return ARXModel(n_a=n_a, n_b=n_b, delay=delay, coefficients=coeffs,
                    residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                    hidden=hidden)


def arx_features(signals: np.ndarray, n_a: int = 8, n_b: int = 8,
                 delay: int = 0, ridge: float = 1e-8,
                 hidden: int = 0, seed: int = 0) -> np.ndarray:
    """Stacked coefficients of lag models between neighbouring channels.

    Channel pairs follow the sensor chain: (0 -> 1), (1 -> 2), ... A single
    channel degenerates to one autoregressive model.
    """
    s = np.atleast_2d(np.asarray(signals, dtype=float))
    c = s.shape[0]
    if c == 1:
        return fit_arx(s[0], None, n_a=n_a, n_b=0, delay=delay, ridge=ridge,
                       hidden=hidden, seed=seed).coefficients
    parts = []
    for i in range(c - 1):
        model = fit_arx(s[i + 1], s[i], n_a=n_a, n_b=n_b, delay=delay,
                        ridge=ridge, hidden=hidden, seed=seed + i)
        parts.append(model.coefficients)
    return np.concatenate(parts)


@dataclass
class MinMaxScaler:
    """Column-wise map of the training range onto [0, 1].

    Degenerate columns (zero range) map to 0. transform/inverse are exact
    inverses on non-degenerate columns.
    """

    lo: np.ndarray | None = None
    span: np.ndarray | None = None

    def fit(self, X: np.ndarray) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.lo = X.min(axis=0)
        self.span = X.max(axis=0) - self.lo
        return self

    def _check(self):
        if self.lo is None:
            raise ConfigurationError("scaler used before fit")

    def transform(self, X: np.ndarray) -> np.ndarray:
        self._check()
        X = np.asarray(X, dtype=float)
        safe = np.where(self.span > 0, self.span, 1.0)
        out = (X - self.lo) / safe
        return np.where(self.span > 0, out, 0.0)

    def inverse(self, X: np.ndarray) -> np.ndarray:
        self._check()
        return np.asarray(X, dtype=float) * self.span + self.lo


@dataclass
class PCAModel:
    """Rank-limited principal directions of centered feature rows."""

    mean: np.ndarray
    components: np.ndarray  # (n_components, d)
    variances: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) @ self.components + self.mean


def fit_pca(X: np.ndarray, n_components: int) -> PCAModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if not 1 <= n_components <= min(n, d):
        raise ConfigurationError(
            f"n_components must be in [1, {min(n, d)}], got {n_components}")
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    denom = max(n - 1, 1)
    return PCAModel(mean=mean, components=vt[:n_components].copy(),
                    variances=(s[:n_components] ** 2) / denom)


@dataclass
class FeatureExtractor:
    """signals -> scaled, PCA-compressed condition vector w.

    mode "stats" uses per-channel statistics; "arx" uses pairwise lag-model
    coefficients. fit() learns the scaler and PCA on training signals;
    transform() then maps one signal set to w.
    """

    mode: str = "stats"
    dt: float = 0.01
    pca_dim: int = 12
    n_a: int = 8
    n_b: int = 8
    delay: int = 0
    ridge: float = 1e-8
    hidden: int = 0
    scaler: MinMaxScaler = field(default_factory=MinMaxScaler)
    pca: PCAModel | None = None

    def __post_init__(self):
        if self.mode not in ("stats", "arx"):
            raise ConfigurationError(f"unknown feature mode {self.mode!r}")

    def raw_features(self, signals: np.ndarray) -> np.ndarray:
        if self.mode == "stats":
            return statistical_features(signals, self.dt)
        return arx_features(signals, n_a=self.n_a, n_b=self.n_b,
                            delay=self.delay, ridge=self.ridge,
                            hidden=self.hidden)

    def fit(self, signal_sets: list[np.ndarray]) -> np.ndarray:
        """Fit scaler + PCA on training signal sets; returns the W matrix."""
        if len(signal_sets) < 2:
            raise ConfigurationError("need at least two training samples")
        raw = np.vstack([self.raw_features(s) for s in signal_sets])
        scaled = self.scaler.fit(raw).transform(raw)
        dim = min(self.pca_dim, scaled.shape[0], scaled.shape[1])
        self.pca = fit_pca(scaled, dim)
        return self.pca.transform(scaled)

    def transform(self, signals: np.ndarray) -> np.ndarray:
        if self.pca is None:
            raise ConfigurationError("feature extractor used before fit")
        return self.pca.transform(
            self.scaler.transform(self.raw_features(signals)))

    @property
    def dim(self) -> int:
        if self.pca is None:
            raise ConfigurationError("feature extractor used before fit")
        return self.pca.n_components

    def get_state(self):
        """(metadata, named arrays) for serialization; arrays are present
        only after fit()."""
        meta = {"mode": self.mode, "dt": self.dt, "pca_dim": self.pca_dim,
                "n_a": self.n_a, "n_b": self.n_b, "delay": self.delay,
                "ridge": self.ridge, "hidden": self.hidden}
        arrays = {}
        if self.scaler.lo is not None:
            arrays["scaler_lo"] = self.scaler.lo
            arrays["scaler_span"] = self.scaler.span
        if self.pca is not None:
            arrays["pca_mean"] = self.pca.mean
            arrays["pca_components"] = self.pca.components
            arrays["pca_variances"] = self.pca.variances
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays) -> "FeatureExtractor":
        ex = cls(**meta)
        if "scaler_lo" in arrays:
            ex.scaler.lo = arrays["scaler_lo"].copy()
            ex.scaler.span = arrays["scaler_span"].copy()
        if "pca_mean" in arrays:
            ex.pca = PCAModel(mean=arrays["pca_mean"].copy(),
                              components=arrays["pca_components"].copy(),
                              variances=arrays["pca_variances"].copy())
        return ex
