"""Campaign orchestration: offline training, artifact persistence, online
prediction with uncertainty envelopes, and tiered evaluation.

Offline, the pipeline samples the parameter space, runs the full-order
chain, builds local projection bases and their tangent-space coordinates,
synthesizes monitoring data on a perturbed twin, and fits the generative
and inference networks plus sparse element weights. The artifact it returns
can be stored to a directory and reloaded bit-for-bit.

Online, monitoring signals turn into a condition vector, the networks turn
that into parameter estimates and an ensemble of projection bases, and
reduced solves turn those into a mean trajectory with spread envelopes.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import CampaignConfig
from .errors import (ConfigurationError, GeometryError, IntegrationError,
                     PredictionError)
from .fom import (FOMSystem, ParameterSpace, ParameterVector,
                  integrate_newmark, make_perturbed_twin, sample_parameters)
from .generative import (CVAEModel, TrainingSchedule, generate_coefficients,
                         train_cvae)
from .hyperreduction import (ECSWWeights, select_training_states, train_ecsw)
from .inference import (InferenceModel, InferenceSchedule,
                        apply_sigma_calibration, cross_validate,
                        infer_parameters, train_inference)
from .matio import array_hash, load_array, save_array
from .monitoring import FeatureExtractor, SensorLayout, add_measurement_noise
from .reduction import (compute_pod, flatten_coefficients, grassmann_log,
                        reconstruct_basis, subspace_coefficients)
from .rom import error_metric, galerkin_project, integrate_reduced, reconstruct

ARTIFACT_FORMAT = 1

# seed stream tags, all children of the campaign master seed
_S_TRAIN_LHS = 1
_S_TWIN = 2
_S_TEST_LHS = 3
_S_TRAIN_NOISE = 4     # + sample index
_S_CVAE = 5
_S_INFERENCE = 6
_S_TEST_NOISE = 7      # + sample index
_S_EVAL_DECODE = 8     # + sample index
_S_EVAL_PREDICT = 10   # + sample index


def derive_seed(master: int, *stream) -> int:
    """Deterministic child seed for a named stage of the campaign."""
    ss = np.random.SeedSequence([int(master)] + [int(s) for s in stream])
    return int(ss.generate_state(1)[0])


@dataclass
class ModelArtifact:
    """Everything the online phase needs, plus the twin for evaluation."""

    config: CampaignConfig
    system: FOMSystem
    space: ParameterSpace
    twin: FOMSystem
    sensors: SensorLayout
    extractor: FeatureExtractor
    cvae: CVAEModel
    inference: InferenceModel
    v0: np.ndarray
    v_global: np.ndarray
    r: int
    r_tilde: int
    ecsw: ECSWWeights | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class PredictionResult:
    """Mean trajectory with symmetric spread envelopes."""

    dt: float
    mean: np.ndarray       # (n_dof, n_steps)
    band: np.ndarray       # ensemble standard deviation, same shape
    lower: np.ndarray
    upper: np.ndarray
    params_mean: np.ndarray
    params_std: np.ndarray
    condition: np.ndarray
    n_members: int
    n_failed: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.mean.shape[1]) * self.dt


class _RomTermContext:
    """Physics-term hooks handed to the generative trainer."""

    def __init__(self, system, params, dt, n_steps, v_global, v0, snapshots):
        self.system = system
        self.params = params
        self.dt = dt
        self.n_steps = n_steps
        self.v_global = v_global
        self.v0 = v0
        self.snapshots = snapshots

    def run_rom(self, i: int, basis: np.ndarray) -> np.ndarray:
        try:
            red = galerkin_project(self.system, basis)
            hist = integrate_reduced(red, self.params[i], self.dt,
                                     self.n_steps)
            return reconstruct(red, hist).displacement
        except (IntegrationError, GeometryError):
            # a failed decode counts as total mismatch, not a crash
            return np.zeros_like(self.snapshots[i])


def _monitoring_signals(twin: FOMSystem, sensors: SensorLayout,
                        p: ParameterVector, dt: float, n_steps: int,
                        noise_ratio: float, seed: int) -> np.ndarray:
    """Twin accelerations at the sensor dofs, with measurement noise."""
    hist = integrate_newmark(twin, p, dt, n_steps)
    return add_measurement_noise(sensors.pick(hist.acceleration),
                                 noise_ratio, seed)


def train_offline(cfg: CampaignConfig, progress=None):
    """Run the full offline campaign; returns (artifact, summary).

    The summary carries loss histories, cross-validation scores, basis
    orders and stage timings; nothing in it is needed online.
    """
    cfg.validate()
    say = progress if progress is not None else (lambda msg: None)
    timings: dict[str, float] = {}
    t_all = time.perf_counter()

    system = cfg.build_system()
    space = cfg.build_space()
    dt, n_steps = cfg.time.dt, cfg.time.n_steps
    master = cfg.master_seed

    # ---- full-order campaign over the sampled parameter space ----
    t0 = time.perf_counter()
    params_train = sample_parameters(space, cfg.sampling.n_train,
                                     derive_seed(master, _S_TRAIN_LHS))
    snapshots = []
    for i, p in enumerate(params_train):
        snapshots.append(integrate_newmark(system, p, dt, n_steps).displacement)
        if (i + 1) % 25 == 0:
            say(f"full-order runs: {i + 1}/{len(params_train)}")
    timings["fom_campaign"] = time.perf_counter() - t0

    # ---- local bases at a common order ----
    t0 = time.perf_counter()
    red = cfg.reduction
    cap = red.max_order if red.max_order > 0 else None
    orders = [compute_pod(u, red.pod_tol, min_order=red.min_order,
                          max_order=cap).order for u in snapshots]
    r = max(orders)
    if cap is not None:
        r = min(r, cap)
    local_bases = [compute_pod(u, red.pod_tol, min_order=r, max_order=r).modes
                   for u in snapshots]

    nominal = space.nominal()
    u_nominal = integrate_newmark(system, nominal, dt, n_steps).displacement
    v0 = compute_pod(u_nominal, red.pod_tol, min_order=r, max_order=r).modes

    v_global = compute_pod(np.hstack(snapshots), red.global_pod_tol,
                           min_order=r).modes
    r_tilde = v_global.shape[1]
    say(f"basis orders: local r = {r}, global r_tilde = {r_tilde}")

    x_rows = []
    for i, vi in enumerate(local_bases):
        try:
            gamma = grassmann_log(v0, vi)
        except GeometryError as exc:
            raise GeometryError(f"training sample {i}: {exc}") from exc
        x_rows.append(flatten_coefficients(subspace_coefficients(gamma,
                                                                 v_global)))
    x_flat = np.vstack(x_rows)
    timings["reduction"] = time.perf_counter() - t0

    # ---- monitoring data on the perturbed twin ----
    t0 = time.perf_counter()
    twin = make_perturbed_twin(system, cfg.twin.sigma,
                               derive_seed(master, _S_TWIN))
    sensors = SensorLayout.spread(cfg.chain.n_dof, cfg.twin.n_sensors)
    signal_sets = []
    for i, p in enumerate(params_train):
        signal_sets.append(_monitoring_signals(
            twin, sensors, p, dt, n_steps, cfg.twin.noise_ratio,
            derive_seed(master, _S_TRAIN_NOISE, i)))
        if (i + 1) % 25 == 0:
            say(f"twin monitoring runs: {i + 1}/{len(params_train)}")
    extractor = FeatureExtractor(
        mode=cfg.twin.feature_mode, dt=dt, pca_dim=cfg.twin.pca_dim,
        n_a=cfg.twin.arx_order, n_b=cfg.twin.arx_order,
        delay=cfg.twin.arx_delay, ridge=cfg.twin.arx_ridge,
        hidden=cfg.twin.arx_hidden)
    w_train = extractor.fit(signal_sets)
    timings["monitoring"] = time.perf_counter() - t0
    say(f"condition vectors: {w_train.shape[0]} x {w_train.shape[1]}")

    # ---- generative model over coefficient matrices ----
    t0 = time.perf_counter()
    gen = cfg.generative
    schedule = TrainingSchedule(
        epochs=gen.epochs, batch_size=gen.batch_size,
        learning_rate=gen.learning_rate, n_latent_draws=gen.n_latent_draws,
        base_fraction=gen.base_fraction, gamma_align=gen.gamma_align,
        gamma_rom=gen.gamma_rom, rom_term_samples=gen.rom_term_samples,
        seed=derive_seed(master, _S_CVAE))
    context = _RomTermContext(system, params_train, dt, n_steps, v_global,
                              v0, snapshots)
    cvae, gen_history = train_cvae(
        x_flat, w_train, r_tilde, r, schedule, latent_dim=gen.latent_dim,
        encoder_hidden=gen.encoder_hidden, decoder_hidden=gen.decoder_hidden,
        rom_context=context)
    timings["generative"] = time.perf_counter() - t0
    say(f"generative loss: {gen_history['total'][0]:.4f} -> "
        f"{gen_history['total'][-1]:.4f}")

    # ---- parameter inference network ----
    t0 = time.perf_counter()
    y_train = np.vstack([p.values for p in params_train])
    inf = cfg.inference
    inf_schedule = InferenceSchedule(
        epochs=inf.epochs, batch_size=inf.batch_size,
        learning_rate=inf.learning_rate,
        seed=derive_seed(master, _S_INFERENCE))
    cv_report = cross_validate(w_train, y_train, inf_schedule,
                               hidden=inf.hidden, n_folds=inf.cv_folds)
    regressor, inf_history = train_inference(w_train, y_train, inf_schedule,
                                             hidden=inf.hidden)
    scale = apply_sigma_calibration(regressor, cv_report["z_rms"])
    timings["inference"] = time.perf_counter() - t0
    say(f"inference NLL: {inf_history[0]:.4f} -> {inf_history[-1]:.4f}, "
        f"cv mean {float(np.mean(cv_report['val_nll'])):.4f}, "
        f"spread calibration {np.array2string(scale, precision=2)}")

    # ---- sparse element weights in the reference basis ----
    t0 = time.perf_counter()
    states = select_training_states(u_nominal, red.ecsw_max_states)
    ecsw = train_ecsw(system, v0, states, nominal, tau=red.ecsw_tau,
                      basis_hash=array_hash(v0))
    timings["hyperreduction"] = time.perf_counter() - t0
    say(f"element weights: {ecsw.n_selected}/{ecsw.n_elements_total} "
        f"(residual {ecsw.residual:.3e})")

    timings["total"] = time.perf_counter() - t_all
    summary = {
        "n_train": len(params_train),
        "basis_orders": {"r": int(r), "r_tilde": int(r_tilde),
                         "local_orders": [int(o) for o in orders]},
        "generative_history": {k: [float(v) for v in vals]
                               for k, vals in gen_history.items()},
        "inference_history": [float(v) for v in inf_history],
        "cross_validation": {
            "val_nll": [float(v) for v in cv_report["val_nll"]],
            "val_rmse": np.asarray(cv_report["val_rmse"]).tolist(),
            "sigma_scale": [float(v) for v in scale],
        },
        "ecsw": {"selected": int(ecsw.n_selected),
                 "residual": float(ecsw.residual),
                 "converged": bool(ecsw.converged)},
        "timings": timings,
    }
    artifact = ModelArtifact(
        config=cfg, system=system, space=space, twin=twin, sensors=sensors,
        extractor=extractor, cvae=cvae, inference=regressor, v0=v0,
        v_global=v_global, r=int(r), r_tilde=int(r_tilde), ecsw=ecsw,
        meta=summary)
    return artifact, summary


# ---------------------------------------------------------------------------
# artifact persistence
# ---------------------------------------------------------------------------

def save_artifact(artifact: ModelArtifact, path: str) -> None:
    """Write the artifact to a directory (config, manifest, binary arrays)."""
    os.makedirs(path, exist_ok=True)
    arrays_dir = os.path.join(path, "arrays")
    os.makedirs(arrays_dir, exist_ok=True)

    arrays: dict[str, np.ndarray] = {
        "v0": artifact.v0,
        "v_global": artifact.v_global,
        "twin_k_lin": artifact.twin.k_lin,
        "twin_k_cub": artifact.twin.k_cub,
        "sensor_indices": np.asarray(artifact.sensors.indices, dtype=float),
    }
    cvae_meta, cvae_arrays = artifact.cvae.get_state()
    for k, v in cvae_arrays.items():
        arrays[f"cvae_{k}"] = v
    inf_meta, inf_arrays = artifact.inference.get_state()
    for k, v in inf_arrays.items():
        arrays[f"inf_{k}"] = v
    ext_meta, ext_arrays = artifact.extractor.get_state()
    for k, v in ext_arrays.items():
        arrays[f"ext_{k}"] = v

    ecsw_meta = None
    if artifact.ecsw is not None:
        e = artifact.ecsw
        arrays["ecsw_element_ids"] = e.element_ids.astype(float)
        arrays["ecsw_weights"] = e.weights
        ecsw_meta = {"residual": e.residual, "tolerance": e.tolerance,
                     "converged": e.converged,
                     "n_elements_total": e.n_elements_total,
                     "basis_hash": e.basis_hash}

    for name, arr in arrays.items():
        save_array(os.path.join(arrays_dir, f"{name}.grm"), arr)

    manifest = {
        "format": ARTIFACT_FORMAT,
        "r": artifact.r,
        "r_tilde": artifact.r_tilde,
        "cvae": cvae_meta,
        "inference": inf_meta,
        "extractor": ext_meta,
        "ecsw": ecsw_meta,
        "arrays": sorted(arrays),
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifact.config.to_json(os.path.join(path, "config.json"))
    if artifact.meta:
        with open(os.path.join(path, "summary.json"), "w") as fh:
            json.dump(artifact.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_artifact(path: str) -> ModelArtifact:
    """Reload a directory written by :func:`save_artifact`."""
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read artifact manifest: {exc}") from exc
    if manifest.get("format") != ARTIFACT_FORMAT:
        raise ConfigurationError(
            f"unsupported artifact format {manifest.get('format')!r}")

    cfg = CampaignConfig.from_json(os.path.join(path, "config.json"))
    arrays_dir = os.path.join(path, "arrays")
    arrays = {name: load_array(os.path.join(arrays_dir, f"{name}.grm"))
              for name in manifest["arrays"]}

    def sub(prefix):
        n = len(prefix)
        return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix)}

    system = cfg.build_system()
    space = cfg.build_space()
    twin = replace(system, k_lin=arrays["twin_k_lin"],
                   k_cub=arrays["twin_k_cub"], baseline_perturbed=True)
    sensors = SensorLayout(tuple(int(i) for i in arrays["sensor_indices"]))
    extractor = FeatureExtractor.from_state(manifest["extractor"],
                                            sub("ext_"))
    cvae = CVAEModel.from_state(manifest["cvae"], sub("cvae_"))
    inference = InferenceModel.from_state(manifest["inference"], sub("inf_"))

    ecsw = None
    if manifest["ecsw"] is not None:
        em = manifest["ecsw"]
        ecsw = ECSWWeights(
            element_ids=arrays["ecsw_element_ids"].astype(np.int64),
            weights=arrays["ecsw_weights"], residual=em["residual"],
            tolerance=em["tolerance"], converged=em["converged"],
            n_elements_total=em["n_elements_total"],
            basis_hash=em["basis_hash"])

    meta = {}
    summary_path = os.path.join(path, "summary.json")
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            meta = json.load(fh)

    return ModelArtifact(
        config=cfg, system=system, space=space, twin=twin, sensors=sensors,
        extractor=extractor, cvae=cvae, inference=inference,
        v0=arrays["v0"], v_global=arrays["v_global"],
        r=manifest["r"], r_tilde=manifest["r_tilde"], ecsw=ecsw, meta=meta)


# ---------------------------------------------------------------------------
# online prediction
# ---------------------------------------------------------------------------

def predict_online(artifact: ModelArtifact, signals: np.ndarray,
                   seed: int = 0, n_basis_draws: int | None = None,
                   n_param_draws: int | None = None) -> PredictionResult:
    """Monitoring signals -> mean trajectory with spread envelopes.

    An ensemble pairs sampled projection bases with sampled parameter sets
    (cycling the shorter list); its first member uses the zero-latent basis
    and the inferred parameter means. The reported trajectory is the
    ensemble mean and the envelopes are that mean plus or minus
    ``envelope_factor`` times the ensemble standard deviation, so the band
    reflects both basis and parameter uncertainty.
    """
    cfg = artifact.config
    pred = cfg.prediction
    n_basis = pred.n_basis_draws if n_basis_draws is None else n_basis_draws
    n_param = pred.n_param_draws if n_param_draws is None else n_param_draws
    if n_basis < 1 or n_param < 1:
        raise ConfigurationError("draw counts must be >= 1")
    dt, n_steps = cfg.time.dt, cfg.time.n_steps

    w = artifact.extractor.transform(signals)
    bounds = artifact.space.bounds()
    mu_p, sigma_p = infer_parameters(artifact.inference, w, bounds=bounds)

    mean_x, basis_draws = generate_coefficients(
        artifact.cvae, w, n_basis, seed=derive_seed(seed, 21))
    rng = np.random.default_rng(derive_seed(seed, 22))
    param_rows = np.clip(
        rng.normal(mu_p, sigma_p, size=(n_param, mu_p.shape[0])),
        bounds[0], bounds[1])

    n_members = max(n_basis, n_param) + 1
    member_trajs = []
    n_failed = 0
    for i in range(n_members):
        if i == 0:
            x, values = mean_x, mu_p
        else:
            x = basis_draws[(i - 1) % n_basis]
            values = param_rows[(i - 1) % n_param]
        p = ParameterVector(artifact.space.names, values)
        try:
            basis = reconstruct_basis(x, artifact.v_global, artifact.v0)
            red = galerkin_project(artifact.system, basis)
            hist = integrate_reduced(red, p, dt, n_steps)
            member_trajs.append(reconstruct(red, hist).displacement)
        except (IntegrationError, GeometryError):
            n_failed += 1
    if not member_trajs or n_failed > pred.max_failure_fraction * n_members:
        raise PredictionError(
            f"{n_failed}/{n_members} ensemble members failed to solve")

    stack = np.stack(member_trajs)
    mean_traj = stack.mean(axis=0)
    band = stack.std(axis=0)
    return PredictionResult(
        dt=dt, mean=mean_traj, band=band,
        lower=mean_traj - pred.envelope_factor * band,
        upper=mean_traj + pred.envelope_factor * band,
        params_mean=mu_p, params_std=sigma_p, condition=w,
        n_members=n_members, n_failed=n_failed)


# ---------------------------------------------------------------------------
# evaluation ladder
# ---------------------------------------------------------------------------

TIER_NAMES = ("truncation", "hyper", "generative", "inference")


def evaluate(artifact: ModelArtifact, out_dir: str, progress=None,
             n_basis_draws: int | None = None,
             n_param_draws: int | None = None,
             with_envelopes: bool = True) -> dict:
    """Accuracy ladder on fresh test samples, written to ``out_dir``.

    Each tier adds one error source. "truncation" projects each test run
    onto its own basis (the best the subspace dimension allows); "hyper"
    adds sparse element weights; "generative" swaps in the basis decoded
    from monitoring data (still hyper-reduced, still at true parameters);
    "inference" also replaces the parameters by their inferred means.
    Element weights are retrained for every basis they are used with, so
    the sparsity certificate holds at each tier. report_metrics.json holds
    only deterministic quantities; wall times go to timings.json and the
    speedup columns of report.csv.
    """
    cfg = artifact.config
    cfg.validate()
    say = progress if progress is not None else (lambda msg: None)
    os.makedirs(out_dir, exist_ok=True)
    dt, n_steps = cfg.time.dt, cfg.time.n_steps
    master = cfg.master_seed
    system = artifact.system
    space = artifact.space

    params_test = sample_parameters(space, cfg.sampling.n_test,
                                    derive_seed(master, _S_TEST_LHS))
    y_true = np.vstack([p.values for p in params_test])

    errors = {t: [] for t in TIER_NAMES}
    solve_times = {t: 0.0 for t in TIER_NAMES}
    train_times = {t: 0.0 for t in TIER_NAMES}
    tier_failures = {t: 0 for t in TIER_NAMES}
    fom_time = 0.0
    ecsw_selected = []
    ecsw_residuals = []
    dec_selected = []
    mu_rows, sigma_rows = [], []
    env_coverage, env_failed = [], []

    def timed_error(tier, build_and_solve, reference):
        t0 = time.perf_counter()
        try:
            approx = build_and_solve()
        except (IntegrationError, GeometryError):
            tier_failures[tier] += 1
            errors[tier].append(None)
            return
        solve_times[tier] += time.perf_counter() - t0
        errors[tier].append(error_metric(reference, approx))

    for i, p in enumerate(params_test):
        t0 = time.perf_counter()
        truth = integrate_newmark(system, p, dt, n_steps)
        fom_time += time.perf_counter() - t0
        u_true = truth.displacement

        signals = _monitoring_signals(
            artifact.twin, artifact.sensors, p, dt, n_steps,
            cfg.twin.noise_ratio, derive_seed(master, _S_TEST_NOISE, i))
        w = artifact.extractor.transform(signals)

        own_basis = compute_pod(u_true, cfg.reduction.pod_tol,
                                min_order=artifact.r,
                                max_order=artifact.r).modes

        def solve(basis, params, weights=None, context_hash=None):
            red = galerkin_project(system, basis, weights=weights,
                                   context_basis_hash=context_hash)
            hist = integrate_reduced(red, params, dt, n_steps)
            return reconstruct(red, hist)

        timed_error("truncation", lambda: solve(own_basis, p), truth)

        states = select_training_states(u_true, cfg.reduction.ecsw_max_states)

        def fit_weights(tier, basis):
            t0 = time.perf_counter()
            weights = train_ecsw(system, basis, states, p,
                                 tau=cfg.reduction.ecsw_tau,
                                 basis_hash=array_hash(basis))
            train_times[tier] += time.perf_counter() - t0
            return weights

        weights = fit_weights("hyper", own_basis)
        ecsw_selected.append(int(weights.n_selected))
        ecsw_residuals.append(float(weights.residual))
        timed_error("hyper",
                    lambda: solve(own_basis, p, weights,
                                  array_hash(own_basis)), truth)

        mean_x, _ = generate_coefficients(
            artifact.cvae, w, 1, seed=derive_seed(master, _S_EVAL_DECODE, i))
        decoded = reconstruct_basis(mean_x, artifact.v_global, artifact.v0)
        dec_weights = fit_weights("generative", decoded)
        dec_selected.append(int(dec_weights.n_selected))
        dec_hash = array_hash(decoded)
        timed_error("generative",
                    lambda: solve(decoded, p, dec_weights, dec_hash), truth)

        mu_p, sigma_p = infer_parameters(artifact.inference, w,
                                         bounds=space.bounds())
        mu_rows.append(mu_p)
        sigma_rows.append(sigma_p)
        p_hat = ParameterVector(space.names, mu_p)
        timed_error("inference",
                    lambda: solve(decoded, p_hat, dec_weights, dec_hash),
                    truth)

        if with_envelopes:
            try:
                result = predict_online(
                    artifact, signals,
                    seed=derive_seed(master, _S_EVAL_PREDICT, i),
                    n_basis_draws=n_basis_draws,
                    n_param_draws=n_param_draws)
                step_inside = np.all((u_true >= result.lower)
                                     & (u_true <= result.upper), axis=0)
                env_coverage.append(float(np.mean(step_inside)))
                env_failed.append(int(result.n_failed))
            except PredictionError:
                env_coverage.append(None)
                env_failed.append(-1)
        say(f"test sample {i + 1}/{len(params_test)} done")

    mu = np.vstack(mu_rows)
    sigma = np.vstack(sigma_rows)
    within = np.abs(y_true - mu) <= cfg.prediction.envelope_factor * sigma

    n_test = len(params_test)
    metrics = {
        "n_test": n_test,
        "basis_orders": {"r": artifact.r, "r_tilde": artifact.r_tilde},
        "tiers": {
            t: {
                "errors_pct": errors[t],
                "max_error_pct": _agg(errors[t], max),
                "mean_error_pct": _agg(errors[t], _mean),
                "failures": tier_failures[t],
            } for t in TIER_NAMES
        },
        "parameters": {
            "names": list(space.names),
            "true": y_true.tolist(),
            "mean": mu.tolist(),
            "std": sigma.tolist(),
            "within_band": within.tolist(),
            "coverage_rate": float(np.mean(within)),
        },
        "ecsw": {"selected": ecsw_selected, "residuals": ecsw_residuals,
                 "selected_decoded": dec_selected},
        "envelopes": {
            "factor": cfg.prediction.envelope_factor,
            "coverage": env_coverage,
            "n_failed_members": env_failed,
        } if with_envelopes else None,
    }
    with open(os.path.join(out_dir, "report_metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    timings = {
        "fom_total_s": fom_time,
        "tier_solve_total_s": dict(solve_times),
        "tier_train_total_s": dict(train_times),
    }
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")

    offline = artifact.meta.get("timings", {}) if artifact.meta else {}
    rows = [{
        "model": "fom", "model_size": system.n_dof,
        "elements": system.n_elements, "max_error_pct": 0.0,
        "mean_error_pct": 0.0, "training_time_s": 0.0,
        "solution_time_s": fom_time / n_test, "speedup": 1.0,
        "n_samples": n_test,
    }]
    mean_dec = int(round(np.mean(dec_selected))) if dec_selected else 0
    tier_train = {
        "truncation": offline.get("reduction", 0.0),
        "hyper": train_times["hyper"] / n_test,
        "generative": offline.get("generative", 0.0)
        + train_times["generative"] / n_test,
        "inference": offline.get("inference", 0.0),
    }
    tier_elements = {
        "truncation": system.n_elements,
        "hyper": int(round(np.mean(ecsw_selected))) if ecsw_selected else 0,
        "generative": mean_dec,
        "inference": mean_dec,
    }
    for t in TIER_NAMES:
        n_ok = sum(1 for e in errors[t] if e is not None)
        mean_solve = solve_times[t] / n_ok if n_ok else float("nan")
        rows.append({
            "model": t, "model_size": artifact.r,
            "elements": tier_elements[t],
            "max_error_pct": _agg(errors[t], max),
            "mean_error_pct": _agg(errors[t], _mean),
            "training_time_s": tier_train[t],
            "solution_time_s": mean_solve,
            "speedup": (fom_time / n_test) / mean_solve if n_ok else 0.0,
            "n_samples": n_ok,
        })
    _write_report_csv(os.path.join(out_dir, "report.csv"), rows)
    return {"metrics": metrics, "timings": timings, "rows": rows}


def _mean(values):
    return sum(values) / len(values)


def _agg(values, fn):
    ok = [v for v in values if v is not None]
    return float(fn(ok)) if ok else None


REPORT_COLUMNS = ("model", "model_size", "elements", "max_error_pct",
                  "mean_error_pct", "training_time_s", "solution_time_s",
                  "speedup", "n_samples")


def _write_report_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key, val in out.items():
                if isinstance(val, float):
                    out[key] = f"{val:.6g}"
                elif val is None:
                    out[key] = ""
            writer.writerow(out)
