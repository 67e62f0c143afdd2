"""Campaign configuration: one JSON-serializable tree of settings.

Every stage of the offline/online pipeline reads its knobs from here, so a
campaign is reproducible from (config file, master seed) alone. Unknown keys
in a file are rejected rather than silently ignored.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .fom import (ChainConfig, FOMSystem, Marginal, MultiSineExcitation,
                  ParameterSpace, assemble_chain)


@dataclass
class ChainSettings:
    n_dof: int = 20
    mass: float = 1.0
    k_lin: float = 100.0
    k_cub: float = 100.0
    ground: str = "all"
    alpha_m: float = 0.1
    alpha_k: float = 0.005


@dataclass
class ExcitationSettings:
    base_amplitude: float = 50.0
    f_min: float = 0.1
    f_max: float = 5.0
    n_components: int = 60
    phase_seed: int = 7021


@dataclass
class TimeSettings:
    dt: float = 0.01
    n_steps: int = 500


@dataclass
class MarginalSettings:
    kind: str = "normal"
    mean: float = 1.0
    std: float = 0.1
    lower: float = 0.5
    upper: float = 1.5


def _default_marginals() -> dict:
    return {
        "stiffness_scale": MarginalSettings("normal", 1.0, 0.08, 0.75, 1.25),
        "cubic_scale": MarginalSettings("normal", 1.0, 0.15, 0.5, 1.5),
        "amp_scale": MarginalSettings("normal", 1.0, 0.12, 0.6, 1.4),
        "load_angle": MarginalSettings("normal", math.pi / 4, math.pi / 18,
                                       0.0, math.pi / 2),
    }


@dataclass
class SamplingSettings:
    n_train: int = 150
    n_test: int = 40
    marginals: dict = field(default_factory=_default_marginals)


@dataclass
class TwinSettings:
    sigma: float = 5.0            # stiffness perturbation of the twin chain
    noise_ratio: float = 0.07     # sensor noise std as a fraction of RMS
    n_sensors: int = 10
    feature_mode: str = "stats"   # "stats" or "arx"
    pca_dim: int = 12
    arx_order: int = 8
    arx_delay: int = 0
    arx_ridge: float = 1e-8
    arx_hidden: int = 0


@dataclass
class ReductionSettings:
    pod_tol: float = 1e-5
    global_pod_tol: float = 1e-7
    min_order: int = 1
    max_order: int = 0            # 0 means unlimited
    ecsw_tau: float = 0.01
    ecsw_max_states: int = 200


@dataclass
class GenerativeSettings:
    latent_dim: int = 12
    encoder_hidden: tuple = (64, 64, 64)
    decoder_hidden: tuple = (64, 64, 64)
    epochs: int = 400
    batch_size: int = 64
    learning_rate: float = 1e-4
    n_latent_draws: int = 1
    base_fraction: float = 0.8
    gamma_align: float = 0.15
    gamma_rom: float = 0.15
    rom_term_samples: int = 8


@dataclass
class InferenceSettings:
    hidden: tuple = (64, 64)
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    cv_folds: int = 5


@dataclass
class PredictionSettings:
    n_basis_draws: int = 100
    n_param_draws: int = 50
    envelope_factor: float = 3.0
    max_failure_fraction: float = 0.5


@dataclass
class CampaignConfig:
    master_seed: int = 2026
    chain: ChainSettings = field(default_factory=ChainSettings)
    excitation: ExcitationSettings = field(default_factory=ExcitationSettings)
    time: TimeSettings = field(default_factory=TimeSettings)
    sampling: SamplingSettings = field(default_factory=SamplingSettings)
    twin: TwinSettings = field(default_factory=TwinSettings)
    reduction: ReductionSettings = field(default_factory=ReductionSettings)
    generative: GenerativeSettings = field(default_factory=GenerativeSettings)
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    prediction: PredictionSettings = field(default_factory=PredictionSettings)

    def validate(self) -> "CampaignConfig":
        c = self
        if c.chain.n_dof < 2:
            raise ConfigurationError("chain needs at least two masses")
        if c.chain.ground not in ("first", "both", "all"):
            raise ConfigurationError("ground must be first, both or all")
        if c.chain.mass <= 0 or c.chain.k_lin <= 0:
            raise ConfigurationError("mass and linear stiffness must be > 0")
        if c.time.dt <= 0 or c.time.n_steps < 2:
            raise ConfigurationError("need dt > 0 and at least two steps")
        if c.excitation.f_min <= 0 or c.excitation.f_max <= c.excitation.f_min:
            raise ConfigurationError("excitation band must satisfy 0 < lo < hi")
        if c.sampling.n_train < 2 or c.sampling.n_test < 1:
            raise ConfigurationError("sample counts too small")
        for name, m in c.sampling.marginals.items():
            if m.kind not in ("normal", "uniform"):
                raise ConfigurationError(f"unknown marginal kind for {name}")
            if not m.lower < m.upper:
                raise ConfigurationError(f"empty range for {name}")
        if c.twin.n_sensors < 1 or c.twin.n_sensors > c.chain.n_dof:
            raise ConfigurationError("sensor count must lie in [1, n_dof]")
        if c.twin.feature_mode not in ("stats", "arx"):
            raise ConfigurationError("feature_mode must be stats or arx")
        if c.twin.noise_ratio < 0 or c.twin.sigma < 0:
            raise ConfigurationError("twin noise levels must be >= 0")
        if not 0 < c.reduction.ecsw_tau < 1:
            raise ConfigurationError("ecsw tolerance must lie in (0, 1)")
        if c.reduction.pod_tol <= 0 or c.reduction.global_pod_tol <= 0:
            raise ConfigurationError("energy tolerances must be positive")
        if c.prediction.n_basis_draws < 1 or c.prediction.n_param_draws < 1:
            raise ConfigurationError("draw counts must be >= 1")
        if not 0 < c.prediction.max_failure_fraction <= 1:
            raise ConfigurationError("failure fraction must lie in (0, 1]")
        if c.prediction.envelope_factor <= 0:
            raise ConfigurationError("envelope factor must be positive")
        return self

    # ---- bridges to the physics layer ----

    def build_system(self) -> FOMSystem:
        e = self.excitation
        excitation = MultiSineExcitation(
            base_amplitude=e.base_amplitude, f_min=e.f_min, f_max=e.f_max,
            n_components=e.n_components, phase_seed=e.phase_seed)
        cc = ChainConfig(n_dof=self.chain.n_dof, mass=self.chain.mass,
                         k_lin=self.chain.k_lin, k_cub=self.chain.k_cub,
                         ground=self.chain.ground, alpha_m=self.chain.alpha_m,
                         alpha_k=self.chain.alpha_k, excitation=excitation)
        return assemble_chain(cc)

    def build_space(self) -> ParameterSpace:
        names, margs = [], []
        for name, m in self.sampling.marginals.items():
            names.append(name)
            margs.append(Marginal(kind=m.kind, lower=m.lower, upper=m.upper,
                                  mean=m.mean, std=m.std))
        return ParameterSpace(names=tuple(names), marginals=tuple(margs))

    # ---- serialization ----

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        return _build(cls, data, "config").validate()

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "CampaignConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be an object")
        return cls.from_dict(data)


def _build(cls, data: dict, where: str):
    """Construct a dataclass from a plain dict, rejecting unknown keys and
    recursing into nested dataclass fields."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(
            f"unknown keys in {where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (
                isinstance(f.type, str) and f.type in _NESTED):
            sub = _NESTED[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        elif name == "marginals":
            kwargs[name] = {
                k: _build(MarginalSettings, v, f"{where}.marginals.{k}")
                for k, v in value.items()}
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {c.__name__: c for c in (
    ChainSettings, ExcitationSettings, TimeSettings, MarginalSettings,
    SamplingSettings, TwinSettings, ReductionSettings, GenerativeSettings,
    InferenceSettings, PredictionSettings)}
