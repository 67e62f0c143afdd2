"""Dense networks in float64 with hand-written reverse-mode gradients.

The models here are small (tens of thousands of weights), trained on small
batches, and embedded inside numerical pipelines that want strict
reproducibility and double precision throughout. A framework would buy
nothing; explicit forward/backward keeps every gradient auditable against
finite differences.

Conventions: inputs are (batch, d_in); a layer computes x @ w + b with
w of shape (d_in, d_out).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# name -> (value from preactivation, derivative from preactivation)
ACTIVATIONS = {
    "linear": (lambda z: z, lambda z: np.ones_like(z)),
    "tanh": (np.tanh, lambda z: 1.0 / np.cosh(z) ** 2),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(float)),
    "softplus": (_softplus, _sigmoid),
}


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise ConfigurationError("inconsistent layer shapes")


class DenseNetwork:
    """Plain multilayer perceptron with explicit backward pass."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ConfigurationError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.w.shape[1] != nxt.w.shape[0]:
                raise ConfigurationError("layer widths do not chain")
        self.layers = layers

    @classmethod
    def create(cls, widths: list[int], activations: list[str],
               seed: int) -> "DenseNetwork":
        """Scaled-uniform init: w ~ U(+-sqrt(6/(fan_in+fan_out))), b = 0."""
        if len(widths) < 2 or len(activations) != len(widths) - 1:
            raise ConfigurationError("need len(widths)-1 activations")
        rng = np.random.default_rng(seed)
        layers = []
        for d_in, d_out, act in zip(widths, widths[1:], activations):
            limit = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-limit, limit, (d_in, d_out))
            layers.append(Layer(w=w, b=np.zeros(d_out), activation=act))
        return cls(layers)

    @property
    def d_in(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def d_out(self) -> int:
        return self.layers[-1].w.shape[1]

    @property
    def n_parameters(self) -> int:
        return sum(l.w.size + l.b.size for l in self.layers)

    def parameters(self) -> list[np.ndarray]:
        """Live references, interleaved [w0, b0, w1, b1, ...]."""
        out = []
        for l in self.layers:
            out.append(l.w)
            out.append(l.b)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        for l in self.layers:
            f, _ = ACTIVATIONS[l.activation]
            h = f(h @ l.w + l.b)
        return h[0] if squeeze else h

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping (input, preactivation) per layer."""
        h = np.asarray(x, dtype=float)
        if h.ndim == 1:
            raise ConfigurationError("cached forward expects a batch")
        caches = []
        for l in self.layers:
            z = h @ l.w + l.b
            caches.append((h, z))
            f, _ = ACTIVATIONS[l.activation]
            h = f(z)
        return h, caches

    def backward(self, caches, grad_out: np.ndarray):
        """Gradients of sum(loss) whose output-gradient is grad_out.

        Returns (param_grads, grad_in) where param_grads interleaves
        [gw0, gb0, gw1, gb1, ...] to match :meth:`parameters`.
        """
        grads: list[np.ndarray] = []
        delta = np.asarray(grad_out, dtype=float)
        for l, (h_in, z) in zip(reversed(self.layers), reversed(caches)):
            _, df = ACTIVATIONS[l.activation]
            delta = delta * df(z)
            grads.append(delta.sum(axis=0))   # bias first, reversed below
            grads.append(h_in.T @ delta)
            delta = delta @ l.w.T
        grads.reverse()
        return grads, delta

    def copy(self) -> "DenseNetwork":
        return DenseNetwork([Layer(l.w.copy(), l.b.copy(), l.activation)
                             for l in self.layers])


class Adam:
    """Adam with bias correction; operates in place on parameter lists."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigurationError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ConfigurationError("parameter/gradient list mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def finite_difference_gradient(loss_fn, arrays: list[np.ndarray],
                               h: float = 1e-6) -> list[np.ndarray]:
    """Central-difference gradient of a scalar loss over arrays, in place
    perturbed and restored. Meant for verifying the analytic backward pass.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn()
            flat[i] = keep - h
            down = loss_fn()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_gradient_error(analytic: list[np.ndarray],
                            numeric: list[np.ndarray]) -> float:
    """Max relative mismatch between two gradient lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-12)
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst
