"""Conditional variational generation of basis coefficient matrices.

An encoder maps a (flattened, min-max scaled) coefficient matrix plus its
condition vector w to a diagonal Gaussian over latent codes; the decoder
maps a latent draw plus w back to coefficient space. Training minimizes
reconstruction + closed-form KL; late in training two physics terms can be
added: alignment of held snapshots with the decoded subspace, and the
mismatch of an actual reduced-order solve in the decoded basis.

At prediction time nothing is encoded: latent draws come from the prior,
and the zero latent gives the mean coefficient matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .monitoring import MinMaxScaler
from .neural import Adam, DenseNetwork
from .reduction import (grassmann_exp, horizontal_project,
                        tangent_from_coefficients, unflatten_coefficients)


def reparameterize(mu: np.ndarray, logvar: np.ndarray,
                   eta: np.ndarray) -> np.ndarray:
    """z = mu + eta * sigma with sigma = exp(logvar / 2)."""
    return mu + eta * np.exp(0.5 * logvar)


def kl_gaussian(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(q || N(0, I)) for a diagonal Gaussian, summed over dimensions.

    For batches (2-D inputs) the result is averaged over the batch.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    logvar = np.atleast_2d(np.asarray(logvar, dtype=float))
    per_sample = -0.5 * np.sum(1.0 + logvar - mu ** 2 - np.exp(logvar), axis=1)
    return float(np.mean(per_sample))


def projection_alignment(basis: np.ndarray, snapshots: np.ndarray) -> float:
    """Relative misfit of snapshots under projection onto span(basis).

    ||V V^T U - U||_F / ||U||_F: zero when U lies in the span, close to one
    when U is orthogonal to it.
    """
    u = np.asarray(snapshots, dtype=float)
    denom = np.linalg.norm(u)
    if denom <= 0.0:
        raise ConfigurationError("alignment snapshots carry no energy")
    v = np.asarray(basis, dtype=float)
    return float(np.linalg.norm(v @ (v.T @ u) - u) / denom)


@dataclass
class TrainingSchedule:
    """Knobs of the optimization loop."""

    epochs: int = 400
    batch_size: int = 64
    learning_rate: float = 1e-4
    n_latent_draws: int = 1
    base_fraction: float = 0.8    # fraction of epochs before physics terms
    gamma_align: float = 0.15
    gamma_rom: float = 0.15
    rom_term_samples: int = 8     # per-epoch budget for actual ROM solves
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.n_latent_draws < 1:
            raise ConfigurationError("epochs, batch size, draws must be >= 1")
        if not 0.0 <= self.base_fraction <= 1.0:
            raise ConfigurationError("base_fraction must lie in [0, 1]")
        if self.gamma_align < 0 or self.gamma_rom < 0:
            raise ConfigurationError("loss weights must be >= 0")


class CVAEModel:
    """Encoder trunk with mean/log-variance heads, plus a decoder."""

    def __init__(self, trunk: DenseNetwork, mean_head: DenseNetwork,
                 logvar_head: DenseNetwork, decoder: DenseNetwork,
                 obs_dim: int, cond_dim: int, latent_dim: int,
                 r_tilde: int, r: int,
                 scaler: MinMaxScaler | None = None):
        if r_tilde * r != obs_dim:
            raise ConfigurationError("obs_dim must equal r_tilde * r")
        if trunk.d_in != obs_dim + cond_dim:
            raise ConfigurationError("encoder input width mismatch")
        if decoder.d_in != latent_dim + cond_dim:
            raise ConfigurationError("decoder input width mismatch")
        if decoder.d_out != obs_dim:
            raise ConfigurationError("decoder output width mismatch")
        if mean_head.d_out != latent_dim or logvar_head.d_out != latent_dim:
            raise ConfigurationError("head output width mismatch")
        self.trunk = trunk
        self.mean_head = mean_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.obs_dim = obs_dim
        self.cond_dim = cond_dim
        self.latent_dim = latent_dim
        self.r_tilde = r_tilde
        self.r = r
        self.scaler = scaler if scaler is not None else MinMaxScaler()

    @classmethod
    def create(cls, r_tilde: int, r: int, cond_dim: int,
               latent_dim: int = 12,
               encoder_hidden: tuple[int, ...] = (64, 64, 64),
               decoder_hidden: tuple[int, ...] = (64, 64, 64),
               seed: int = 0) -> "CVAEModel":
        """Fresh model; hidden activations are tanh except the decoder's
        first layer, which is linear."""
        obs_dim = r_tilde * r
        trunk = DenseNetwork.create(
            [obs_dim + cond_dim, *encoder_hidden],
            ["tanh"] * len(encoder_hidden), seed=seed)
        mean_head = DenseNetwork.create(
            [encoder_hidden[-1], latent_dim], ["linear"], seed=seed + 1)
        logvar_head = DenseNetwork.create(
            [encoder_hidden[-1], latent_dim], ["linear"], seed=seed + 2)
        dec_acts = ["linear"] + ["tanh"] * (len(decoder_hidden) - 1) + ["linear"]
        decoder = DenseNetwork.create(
            [latent_dim + cond_dim, *decoder_hidden, obs_dim],
            dec_acts, seed=seed + 3)
        return cls(trunk, mean_head, logvar_head, decoder, obs_dim,
                   cond_dim, latent_dim, r_tilde, r)

    def parameters(self) -> list[np.ndarray]:
        return (self.trunk.parameters() + self.mean_head.parameters()
                + self.logvar_head.parameters() + self.decoder.parameters())

    def encode(self, x_scaled: np.ndarray, w: np.ndarray):
        """Scaled observation batch + condition batch -> (mu, logvar)."""
        h = self.trunk.forward(np.hstack([np.atleast_2d(x_scaled),
                                          np.atleast_2d(w)]))
        return self.mean_head.forward(h), self.logvar_head.forward(h)

    def decode(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.decoder.forward(np.hstack([np.atleast_2d(z),
                                               np.atleast_2d(w)]))

    def get_state(self):
        """(metadata, named arrays) for serialization."""
        meta = {
            "obs_dim": self.obs_dim, "cond_dim": self.cond_dim,
            "latent_dim": self.latent_dim, "r_tilde": self.r_tilde,
            "r": self.r,
            "trunk_widths": [self.trunk.d_in] + [l.w.shape[1] for l in self.trunk.layers],
            "trunk_acts": [l.activation for l in self.trunk.layers],
            "decoder_widths": [self.decoder.d_in] + [l.w.shape[1] for l in self.decoder.layers],
            "decoder_acts": [l.activation for l in self.decoder.layers],
        }
        arrays = {}
        for name, net in (("trunk", self.trunk), ("mean", self.mean_head),
                          ("logvar", self.logvar_head),
                          ("decoder", self.decoder)):
            for i, layer in enumerate(net.layers):
                arrays[f"{name}_w{i}"] = layer.w
                arrays[f"{name}_b{i}"] = layer.b
        if self.scaler.lo is not None:
            arrays["scaler_lo"] = self.scaler.lo
            arrays["scaler_span"] = self.scaler.span
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays) -> "CVAEModel":
        def build(name, widths, acts):
            from .neural import Layer
            layers = []
            for i in range(len(acts)):
                layers.append(Layer(arrays[f"{name}_w{i}"].copy(),
                                    arrays[f"{name}_b{i}"].copy(), acts[i]))
            return DenseNetwork(layers)

        trunk = build("trunk", meta["trunk_widths"], meta["trunk_acts"])
        mean_head = build("mean", None, ["linear"])
        logvar_head = build("logvar", None, ["linear"])
        decoder = build("decoder", meta["decoder_widths"], meta["decoder_acts"])
        scaler = MinMaxScaler()
        if "scaler_lo" in arrays:
            scaler.lo = arrays["scaler_lo"].copy()
            scaler.span = arrays["scaler_span"].copy()
        return cls(trunk, mean_head, logvar_head, decoder, meta["obs_dim"],
                   meta["cond_dim"], meta["latent_dim"], meta["r_tilde"],
                   meta["r"], scaler)


def elbo_parts(model: CVAEModel, x_scaled: np.ndarray, w: np.ndarray,
               eta: np.ndarray, with_gradients: bool = False):
    """Reconstruction + KL loss on a batch, optionally with parameter
    gradients in the order of ``model.parameters()``.

    ``eta`` has shape (n_draws, batch, latent_dim); passing it explicitly
    keeps the loss a deterministic function, which the finite-difference
    tests rely on.
    """
    x = np.atleast_2d(np.asarray(x_scaled, dtype=float))
    wb = np.atleast_2d(np.asarray(w, dtype=float))
    b = x.shape[0]
    n_draws = eta.shape[0]
    if eta.shape != (n_draws, b, model.latent_dim):
        raise ConfigurationError("eta shape must be (n_draws, batch, latent)")

    enc_in = np.hstack([x, wb])
    h, trunk_caches = model.trunk.forward_cached(enc_in)
    mu, mean_caches = model.mean_head.forward_cached(h)
    logvar, lv_caches = model.logvar_head.forward_cached(h)
    sigma = np.exp(0.5 * logvar)

    # decode all draws as one stacked batch
    z = mu[None, :, :] + eta * sigma[None, :, :]
    dec_in = np.hstack([z.reshape(n_draws * b, model.latent_dim),
                        np.tile(wb, (n_draws, 1))])
    x_hat_flat, dec_caches = model.decoder.forward_cached(dec_in)
    x_hat = x_hat_flat.reshape(n_draws, b, model.obs_dim)

    diff = x_hat - x[None, :, :]
    recon = 0.5 * float(np.sum(diff ** 2)) / (n_draws * b)
    kl = kl_gaussian(mu, logvar)
    parts = {"total": recon + kl, "recon": recon, "kl": kl}
    if not with_gradients:
        return parts, None, (mu, logvar, x_hat)

    grad_xhat = diff.reshape(n_draws * b, model.obs_dim) / (n_draws * b)
    dec_grads, dec_in_grad = model.decoder.backward(dec_caches, grad_xhat)
    dz = dec_in_grad[:, :model.latent_dim].reshape(n_draws, b,
                                                   model.latent_dim)
    g_mu = dz.sum(axis=0) + mu / b
    g_logvar = (np.sum(dz * eta, axis=0) * 0.5 * sigma
                - 0.5 * (1.0 - np.exp(logvar)) / b)
    mean_grads, gh_mean = model.mean_head.backward(mean_caches, g_mu)
    lv_grads, gh_lv = model.logvar_head.backward(lv_caches, g_logvar)
    trunk_grads, _ = model.trunk.backward(trunk_caches, gh_mean + gh_lv)
    grads = trunk_grads + mean_grads + lv_grads + dec_grads
    return parts, grads, (mu, logvar, x_hat)


def alignment_term(x_hat_scaled: np.ndarray, model: CVAEModel,
                   v_global: np.ndarray, v0: np.ndarray,
                   snapshots: np.ndarray):
    """Snapshot-alignment penalty of one decoded observation, with its
    gradient with respect to the scaled decoder output.

    The value orthonormalizes the decoded basis exactly (tangent-space
    reconstruction, exponential map). The gradient linearizes the basis as
    reference + tangent and treats orthonormalization as locally constant,
    which is first-order accurate for the small tangents this term sees.
    """
    x_mat = unflatten_coefficients(model.scaler.inverse(x_hat_scaled),
                                   model.r_tilde, model.r)
    xh = horizontal_project(x_mat, v_global, v0)
    gamma = tangent_from_coefficients(xh, v_global)
    v_tilde = grassmann_exp(v0, gamma)
    value = projection_alignment(v_tilde, snapshots)

    u = snapshots
    e = v_tilde @ (v_tilde.T @ u) - u
    norm_e = np.linalg.norm(e)
    if norm_e <= 0.0:
        return value, np.zeros_like(x_hat_scaled)
    dv = (e @ (u.T @ v_tilde) + u @ (e.T @ v_tilde)) / (norm_e * np.linalg.norm(u))
    dx_mat = v_global.T @ dv                       # tangent -> coefficients
    bmat = v_global.T @ v0
    dx_mat = dx_mat - bmat @ (bmat.T @ dx_mat)     # adjoint of the projection
    # chain through descaling: d(inverse)/dx is the per-column span
    grad_scaled = dx_mat.ravel(order="F") * model.scaler.span
    return value, grad_scaled


def train_cvae(x_flat: np.ndarray, w: np.ndarray, r_tilde: int, r: int,
               schedule: TrainingSchedule, latent_dim: int = 12,
               encoder_hidden: tuple[int, ...] = (64, 64, 64),
               decoder_hidden: tuple[int, ...] = (64, 64, 64),
               rom_context=None) -> tuple[CVAEModel, dict]:
    """Fit the generative model on rows of coefficients and conditions.

    ``rom_context``, when given, provides the physics terms activated after
    ``base_fraction`` of the epochs: attributes ``v_global``, ``v0``,
    ``snapshots`` (list of per-sample snapshot blocks) and ``run_rom(i, V)``
    returning the reduced solution block for sample i in basis V. The
    alignment term is backpropagated; the reduced-solve term only reports.
    """
    X = np.atleast_2d(np.asarray(x_flat, dtype=float))
    W = np.atleast_2d(np.asarray(w, dtype=float))
    n, obs_dim = X.shape
    if W.shape[0] != n:
        raise ConfigurationError("need one condition row per observation")
    if obs_dim != r_tilde * r:
        raise ConfigurationError("observation width must be r_tilde * r")

    model = CVAEModel.create(r_tilde, r, W.shape[1], latent_dim=latent_dim,
                             encoder_hidden=encoder_hidden,
                             decoder_hidden=decoder_hidden,
                             seed=schedule.seed)
    Xs = model.scaler.fit(X).transform(X)

    params = model.parameters()
    opt = Adam(params, lr=schedule.learning_rate)
    rng_shuffle = np.random.default_rng([schedule.seed, 101])
    rng_eta = np.random.default_rng([schedule.seed, 102])
    rng_rom = np.random.default_rng([schedule.seed, 103])

    start_physics = int(np.ceil(schedule.base_fraction * schedule.epochs))
    use_physics = rom_context is not None and (
        schedule.gamma_align > 0 or schedule.gamma_rom > 0)

    history = {k: [] for k in ("total", "recon", "kl", "align", "rom")}
    for epoch in range(schedule.epochs):
        physics_on = use_physics and epoch >= start_physics
        order = rng_shuffle.permutation(n)
        sums = {k: 0.0 for k in history}
        n_batches = 0
        for lo in range(0, n, schedule.batch_size):
            idx = order[lo:lo + schedule.batch_size]
            xb, wb = Xs[idx], W[idx]
            eta = rng_eta.standard_normal(
                (schedule.n_latent_draws, idx.shape[0], latent_dim))
            parts, grads, aux = elbo_parts(model, xb, wb, eta,
                                           with_gradients=True)
            align_val = 0.0
            if physics_on and schedule.gamma_align > 0:
                _, _, x_hat = aux
                extra = np.zeros_like(x_hat[0])
                for row, sample in enumerate(idx):
                    val, g = alignment_term(x_hat[0][row], model,
                                            rom_context.v_global,
                                            rom_context.v0,
                                            rom_context.snapshots[sample])
                    align_val += val
                    extra[row] = g
                align_val /= idx.shape[0]
                # push the extra output-gradient back through the decoder
                mu, logvar, _ = aux
                z = mu + eta[0] * np.exp(0.5 * logvar)
                dec_in = np.hstack([z, wb])
                _, caches = model.decoder.forward_cached(dec_in)
                extra_grads, _ = model.decoder.backward(
                    caches, schedule.gamma_align * extra / idx.shape[0])
                off = len(grads) - len(extra_grads)
                for i, g in enumerate(extra_grads):
                    grads[off + i] = grads[off + i] + g
            opt.step(params, grads)
            sums["total"] += parts["total"] + schedule.gamma_align * align_val
            sums["recon"] += parts["recon"]
            sums["kl"] += parts["kl"]
            sums["align"] += align_val
            n_batches += 1

        rom_val = 0.0
        if physics_on and schedule.gamma_rom > 0:
            pick = rng_rom.choice(n, size=min(schedule.rom_term_samples, n),
                                  replace=False)
            for i in pick:
                x_hat = model.decode(np.zeros(latent_dim), W[i])
                x_mat = unflatten_coefficients(model.scaler.inverse(x_hat),
                                               r_tilde, r)
                xh = horizontal_project(x_mat, rom_context.v_global,
                                        rom_context.v0)
                v = grassmann_exp(rom_context.v0, tangent_from_coefficients(
                    xh, rom_context.v_global))
                u_ref = rom_context.snapshots[i]
                u_rom = rom_context.run_rom(int(i), v)
                rom_val += float(np.linalg.norm(u_rom - u_ref)
                                 / np.linalg.norm(u_ref))
            rom_val /= len(pick)

        for k in ("total", "recon", "kl", "align"):
            history[k].append(sums[k] / n_batches)
        history["rom"].append(rom_val)
        if physics_on and schedule.gamma_rom > 0:
            history["total"][-1] += schedule.gamma_rom * rom_val
    return model, history


def generate_coefficients(model: CVAEModel, w: np.ndarray, n_draws: int,
                          seed: int):
    """Sample coefficient matrices from the prior, conditioned on w.

    Returns (mean_matrix, draw_matrices): the mean is the zero-latent
    decode; draws use standard normal latents from the given seed.
    """
    if model.scaler.lo is None:
        raise ConfigurationError("model must be trained before generation")
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != model.cond_dim:
        raise ConfigurationError("condition vector has wrong width")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, model.latent_dim))
    mean_flat = model.scaler.inverse(model.decode(np.zeros(model.latent_dim), w))
    mean_mat = unflatten_coefficients(mean_flat, model.r_tilde, model.r)
    draw_flat = model.scaler.inverse(model.decode(z, np.tile(w, (n_draws, 1))))
    draws = [unflatten_coefficients(draw_flat[i], model.r_tilde, model.r)
             for i in range(n_draws)]
    return mean_mat, draws
