"""Full-order model: a parametric chain of masses with hardening springs.

The governing system is  M u'' + C u' + g(u; p) = F(t; p)  where g collects
per-element forces  f = k*delta + k3*delta**3  over elongations delta, C is
Rayleigh damping built from M and the linear part of the tangent at u = 0,
and F is a multi-sine excitation spread over two spatial load patterns.

Physical parameters enter through named entries of a ParameterVector:

    stiffness_scale   multiplies every linear spring constant
    cubic_scale       multiplies every cubic coefficient
    amp_scale         multiplies the excitation amplitude
    load_angle        mixes the two load patterns (radians)

Unknown names are ignored by the chain, missing ones fall back to defaults,
so toy systems in tests can carry reduced parameter sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels as kernels
from .errors import ConfigurationError, IntegrationError

_PARAM_DEFAULTS = {
    "stiffness_scale": 1.0,
    "cubic_scale": 1.0,
    "amp_scale": 1.0,
    "load_angle": math.pi / 4.0,
}


@dataclass(frozen=True)
class ParameterVector:
    """Named physical parameter sample."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.names) != self.values.shape[0]:
            raise ConfigurationError("parameter names/values length mismatch")

    def get(self, name: str, default: float | None = None) -> float:
        if name in self.names:
            return float(self.values[self.names.index(name)])
        if default is None:
            default = _PARAM_DEFAULTS.get(name)
        if default is None:
            raise KeyError(name)
        return float(default)

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class Marginal:
    """One-dimensional marginal distribution with hard truncation bounds."""

    kind: str  # "normal" or "uniform"
    lower: float
    upper: float
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ConfigurationError(f"unknown marginal kind {self.kind!r}")
        if not self.upper > self.lower:
            raise ConfigurationError("marginal requires upper > lower")
        if self.kind == "normal" and self.std <= 0:
            raise ConfigurationError("normal marginal requires std > 0")

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF of the truncated marginal, u in [0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.lower + u * (self.upper - self.lower)
        a = ndtr((self.lower - self.mean) / self.std)
        b = ndtr((self.upper - self.mean) / self.std)
        x = self.mean + self.std * ndtri(a + u * (b - a))
        return np.clip(x, self.lower, self.upper)

    @property
    def nominal(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.lower + self.upper)
        return min(max(self.mean, self.lower), self.upper)


@dataclass(frozen=True)
class ParameterSpace:
    names: tuple[str, ...]
    marginals: tuple[Marginal, ...]

    def __post_init__(self):
        if len(self.names) != len(self.marginals):
            raise ConfigurationError("parameter space names/marginals mismatch")

    @property
    def dim(self) -> int:
        return len(self.names)

    def nominal(self) -> ParameterVector:
        return ParameterVector(self.names, np.array([m.nominal for m in self.marginals]))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([m.lower for m in self.marginals])
        hi = np.array([m.upper for m in self.marginals])
        return lo, hi

    def clip(self, values: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds()
        return np.clip(values, lo, hi)


def sample_parameters(space: ParameterSpace, n: int, seed: int) -> list[ParameterVector]:
    """Latin hypercube sample: one point per equal-probability stratum.

    Each marginal is cut into n strata of the truncated distribution; a
    seeded permutation assigns strata to samples, a uniform jitter places
    the point inside its stratum, and the inverse CDF maps it to physical
    units.
    """
    if n < 1:
        raise ConfigurationError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    cols = []
    for marg in space.marginals:
        perm = rng.permutation(n)
        jitter = rng.random(n)
        u = (perm + jitter) / n
        cols.append(marg.ppf(u))
    values = np.column_stack(cols)
    return [ParameterVector(space.names, values[i]) for i in range(n)]


@dataclass(frozen=True)
class MultiSineExcitation:
    """Sum of equal-amplitude sines with seeded random phases.

    Per-component amplitude is base_amplitude/sqrt(n) so the signal RMS is
    roughly base_amplitude/sqrt(2) regardless of the component count.
    """

    base_amplitude: float = 1.0
    f_min: float = 0.1
    f_max: float = 5.0
    n_components: int = 60
    phase_seed: int = 7021

    def __post_init__(self):
        if self.n_components < 1:
            raise ConfigurationError("excitation needs at least one component")
        if not (self.f_max > self.f_min > 0):
            raise ConfigurationError("excitation requires f_max > f_min > 0")

    def signal(self, times: np.ndarray) -> np.ndarray:
        freqs = np.linspace(self.f_min, self.f_max, self.n_components)
        phases = np.random.default_rng(self.phase_seed).uniform(
            0.0, 2.0 * math.pi, self.n_components)
        amp = self.base_amplitude / math.sqrt(self.n_components)
        arg = 2.0 * math.pi * np.outer(freqs, times) + phases[:, None]
        return amp * np.sin(arg).sum(axis=0)


@dataclass(frozen=True)
class TimeHistory:
    """Sampled trajectory: arrays are (n_dof, n_steps) on a uniform grid."""

    dt: float
    displacement: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("time step must be positive")
        shape = self.displacement.shape
        if self.velocity.shape != shape or self.acceleration.shape != shape:
            raise ConfigurationError("time history arrays must share a shape")

    @property
    def n_dof(self) -> int:
        return self.displacement.shape[0]

    @property
    def n_steps(self) -> int:
        return self.displacement.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


@dataclass(frozen=True)
class FOMSystem:
    """Assembled chain: topology, element laws, mass, damping, loading."""

    mass: np.ndarray
    dof_a: np.ndarray
    dof_b: np.ndarray
    k_lin: np.ndarray
    k_cub: np.ndarray
    alpha_m: float
    alpha_k: float
    excitation: MultiSineExcitation
    load_patterns: np.ndarray  # (n_dof, 2), orthonormal columns
    baseline_perturbed: bool = False  # marks an as-built twin, see make_perturbed_twin

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    @property
    def n_elements(self) -> int:
        return self.dof_a.shape[0]

    def element_stiffness(self, p: ParameterVector) -> tuple[np.ndarray, np.ndarray]:
        """Effective per-element coefficients at parameter sample p."""
        return (self.k_lin * p.get("stiffness_scale"),
                self.k_cub * p.get("cubic_scale"))

    def linear_stiffness_matrix(self, p: ParameterVector) -> np.ndarray:
        k_lin, _ = self.element_stiffness(p)
        zeros = np.zeros(self.n_dof)
        _, K = kernels.assemble_force_tangent(
            zeros, self.dof_a, self.dof_b, k_lin, np.zeros_like(k_lin))
        return K

    def damping_matrix(self, p: ParameterVector) -> np.ndarray:
        return self.alpha_m * self.mass + self.alpha_k * self.linear_stiffness_matrix(p)

    def restoring_force(self, u: np.ndarray, p: ParameterVector) -> np.ndarray:
        k_lin, k_cub = self.element_stiffness(p)
        return kernels.assemble_force(u, self.dof_a, self.dof_b, k_lin, k_cub)

    def restoring_force_tangent(self, u: np.ndarray, p: ParameterVector):
        k_lin, k_cub = self.element_stiffness(p)
        return kernels.assemble_force_tangent(u, self.dof_a, self.dof_b, k_lin, k_cub)

    def load_direction(self, p: ParameterVector) -> np.ndarray:
        theta = p.get("load_angle")
        return (math.cos(theta) * self.load_patterns[:, 0]
                + math.sin(theta) * self.load_patterns[:, 1])

    def external_force(self, times: np.ndarray, p: ParameterVector) -> np.ndarray:
        s = self.excitation.signal(times) * p.get("amp_scale")
        return np.outer(self.load_direction(p), s)


@dataclass(frozen=True)
class ChainConfig:
    """Constructor input for :func:`assemble_chain`."""

    n_dof: int = 20
    mass: float = 1.0
    k_lin: float = 100.0
    k_cub: float = 50.0
    ground: str = "all"  # "first", "both", or "all"
    alpha_m: float = 0.02
    alpha_k: float = 0.002
    excitation: MultiSineExcitation = field(default_factory=MultiSineExcitation)


def assemble_chain(cfg: ChainConfig) -> FOMSystem:
    """Build the chain system from a configuration.

    Grounding options: "first" pins dof 0 to ground, "both" pins the two
    chain ends, "all" adds a ground spring at every dof. Neighbour coupling
    springs are always present.
    """
    n = cfg.n_dof
    if n < 1:
        raise ConfigurationError("n_dof must be >= 1")
    if cfg.mass <= 0 or cfg.k_lin <= 0:
        raise ConfigurationError("mass and k_lin must be positive")
    if cfg.k_cub < 0:
        raise ConfigurationError("k_cub must be non-negative")
    if cfg.ground not in ("first", "both", "all"):
        raise ConfigurationError(f"unknown ground layout {cfg.ground!r}")

    if cfg.ground == "first":
        grounded = [0]
    elif cfg.ground == "both":
        grounded = [0] if n == 1 else [0, n - 1]
    else:
        grounded = list(range(n))
    dof_a = grounded + list(range(n - 1))
    dof_b = [-1] * len(grounded) + list(range(1, n))

    n_el = len(dof_a)
    mass = cfg.mass * np.eye(n)

    # two orthonormal load patterns: uniform push and a linear sweep
    p0 = np.ones(n) / math.sqrt(n)
    ramp = np.linspace(-1.0, 1.0, n) if n > 1 else np.array([1.0])
    ramp = ramp - (ramp @ p0) * p0
    norm = np.linalg.norm(ramp)
    p1 = ramp / norm if norm > 1e-12 else p0
    patterns = np.column_stack([p0, p1])

    return FOMSystem(
        mass=mass,
        dof_a=np.asarray(dof_a, dtype=np.int64),
        dof_b=np.asarray(dof_b, dtype=np.int64),
        k_lin=np.full(n_el, float(cfg.k_lin)),
        k_cub=np.full(n_el, float(cfg.k_cub)),
        alpha_m=cfg.alpha_m,
        alpha_k=cfg.alpha_k,
        excitation=cfg.excitation,
        load_patterns=patterns,
    )


def element_directions(system: FOMSystem, basis: np.ndarray) -> np.ndarray:
    """Per-element elongation directions expressed in a reduced basis.

    Row e of the result maps reduced coordinates q to the elongation of
    element e: delta_e = row_e @ q. Used by both the projected assembly and
    the element-weight training matrix.
    """
    V = np.asarray(basis, dtype=float)
    rows = np.empty((system.n_elements, V.shape[1]))
    for e in range(system.n_elements):
        a = system.dof_a[e]
        b = system.dof_b[e]
        rows[e] = V[a] if b < 0 else V[b] - V[a]
    return rows


def make_perturbed_twin(system: FOMSystem, sigma: float,
                        seed: int) -> FOMSystem:
    """Copy of a system whose baseline springs are independently perturbed.

    Per-element linear constants are drawn once from N(k_e, sigma^2) and
    clamped positive; the draw is frozen into the returned system. Parameter
    scaling still applies when the twin is evaluated, so the twin belongs to
    the same parametric family but represents a different as-built
    structure. It plays the role of the physical asset when synthesizing
    monitoring data: inversions against it never see their own forward
    model. sigma = 0 reproduces the nominal system bit for bit.
    """
    if sigma < 0:
        raise ConfigurationError("perturbation std must be >= 0")
    rng = np.random.default_rng(seed)
    drawn = rng.normal(loc=system.k_lin, scale=sigma)
    drawn = np.maximum(drawn, 1e-9)
    return replace(system, k_lin=drawn, k_cub=system.k_cub.copy(),
                   baseline_perturbed=True)


def integrate_newmark(system: FOMSystem, p: ParameterVector, dt: float,
                      n_steps: int, u0: np.ndarray | None = None,
                      v0: np.ndarray | None = None, *, beta: float = 0.25,
                      gamma: float = 0.5, rel_tol: float = 1e-8,
                      abs_floor: float = 1e-10, max_iter: int = 25) -> TimeHistory:
    """Integrate the full-order system with the implicit Newmark scheme.

    Newton iteration at each step runs until the dynamic residual drops
    below rel_tol times the current load norm (or an absolute floor when
    the load vanishes). Non-convergence raises IntegrationError carrying
    the failing step index.
    """
    n = system.n_dof
    if dt <= 0 or n_steps < 1:
        raise ConfigurationError("need dt > 0 and n_steps >= 1")
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
    if u0.shape != (n,) or v0.shape != (n,):
        raise ConfigurationError("initial conditions have wrong shape")

    times = np.arange(n_steps + 1) * dt
    force = system.external_force(times, p)
    damp = system.damping_matrix(p)
    k_lin, k_cub = system.element_stiffness(p)

    U, V, A, _iters, fail = kernels.newmark_full(
        system.mass, damp, system.dof_a, system.dof_b, k_lin, k_cub,
        force, dt, beta, gamma, rel_tol, abs_floor, max_iter, u0, v0)
    if fail >= 0:
        raise IntegrationError(
            f"Newton iteration failed to converge at step {fail}", step=fail)
    return TimeHistory(dt=dt, displacement=U, velocity=V, acceleration=A)
