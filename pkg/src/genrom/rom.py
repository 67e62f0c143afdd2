"""Galerkin-projected dynamics with optional element weighting.

A ReducedSystem carries everything the stepping kernel needs: the projected
mass, the element direction rows for whatever element subset survives
weighting, and the source system for parameter-dependent pieces (element
laws, damping, loading).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import (ConfigurationError, GeometryError, IntegrationError,
                     StaleWeightsError)
from .fom import FOMSystem, ParameterVector, TimeHistory, element_directions
from .hyperreduction import ECSWWeights


@dataclass(frozen=True)
class ReducedHistory:
    """Trajectory in reduced coordinates, arrays (order, n_steps)."""

    dt: float
    coords: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    @property
    def order(self) -> int:
        return self.coords.shape[0]

    @property
    def n_steps(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class ReducedSystem:
    system: FOMSystem
    basis: np.ndarray
    m_red: np.ndarray
    dmat: np.ndarray          # direction rows, active elements only
    element_ids: np.ndarray   # active element indices into the source system
    weights: np.ndarray       # positive weights, ones when not hyper-reduced

    @property
    def order(self) -> int:
        return self.basis.shape[1]

    @property
    def hyper_reduced(self) -> bool:
        return self.element_ids.shape[0] < self.system.n_elements


def galerkin_project(system: FOMSystem, basis: np.ndarray,
                     weights: ECSWWeights | None = None,
                     context_basis_hash: str | None = None) -> ReducedSystem:
    """Project the chain onto an orthonormal basis.

    When element weights are supplied they must have been trained in the
    same basis context: a mismatch between the weights' recorded hash and
    ``context_basis_hash`` raises StaleWeightsError, as does a topology
    change.
    """
    V = np.ascontiguousarray(basis, dtype=float)
    if V.ndim != 2 or V.shape[0] != system.n_dof:
        raise GeometryError("basis shape does not match the system")
    ortho_dev = np.max(np.abs(V.T @ V - np.eye(V.shape[1])))
    if ortho_dev > 1e-8:
        raise GeometryError(f"projection basis not orthonormal (dev {ortho_dev:.2e})")

    if weights is None:
        element_ids = np.arange(system.n_elements, dtype=np.int64)
        w = np.ones(system.n_elements)
    else:
        if weights.n_elements_total != system.n_elements:
            raise StaleWeightsError(
                "weights were trained on a different element count")
        if (weights.basis_hash and context_basis_hash is not None
                and weights.basis_hash != context_basis_hash):
            raise StaleWeightsError(
                "weights were trained against a different basis")
        if weights.n_selected == 0:
            raise StaleWeightsError("weight set is empty")
        if np.any(weights.weights <= 0.0):
            raise StaleWeightsError("weights must be strictly positive")
        element_ids = weights.element_ids
        w = weights.weights

    m_red = V.T @ system.mass @ V
    try:
        np.linalg.cholesky(m_red)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("projected mass is not positive definite") from exc

    dmat_full = element_directions(system, V)
    return ReducedSystem(
        system=system,
        basis=V,
        m_red=m_red,
        dmat=np.ascontiguousarray(dmat_full[element_ids]),
        element_ids=np.asarray(element_ids, dtype=np.int64),
        weights=np.ascontiguousarray(w, dtype=float),
    )


def reduced_force(red: ReducedSystem, q: np.ndarray,
                  p: ParameterVector) -> tuple[np.ndarray, np.ndarray]:
    """Weighted projected restoring force and tangent at reduced coords q."""
    k_lin, k_cub = red.system.element_stiffness(p)
    return kernels.reduced_force_tangent(
        np.ascontiguousarray(q, dtype=float), red.dmat,
        np.ascontiguousarray(k_lin[red.element_ids]),
        np.ascontiguousarray(k_cub[red.element_ids]), red.weights)


def integrate_reduced(red: ReducedSystem, p: ParameterVector, dt: float,
                      n_steps: int, q0: np.ndarray | None = None,
                      v0: np.ndarray | None = None, *, beta: float = 0.25,
                      gamma: float = 0.5, rel_tol: float = 1e-8,
                      abs_floor: float = 1e-10,
                      max_iter: int = 25) -> ReducedHistory:
    """Implicit Newmark stepping in reduced coordinates."""
    r = red.order
    if dt <= 0 or n_steps < 1:
        raise ConfigurationError("need dt > 0 and n_steps >= 1")
    q0 = np.zeros(r) if q0 is None else np.asarray(q0, dtype=float)
    v0 = np.zeros(r) if v0 is None else np.asarray(v0, dtype=float)
    if q0.shape != (r,) or v0.shape != (r,):
        raise ConfigurationError("initial conditions have wrong shape")

    times = np.arange(n_steps + 1) * dt
    V = red.basis
    f_red = V.T @ red.system.external_force(times, p)
    c_red = V.T @ red.system.damping_matrix(p) @ V
    k_lin, k_cub = red.system.element_stiffness(p)

    Q, Vel, Acc, _iters, fail = kernels.newmark_reduced(
        red.m_red, np.ascontiguousarray(c_red), red.dmat,
        np.ascontiguousarray(k_lin[red.element_ids]),
        np.ascontiguousarray(k_cub[red.element_ids]),
        red.weights, np.ascontiguousarray(f_red), dt, beta, gamma,
        rel_tol, abs_floor, max_iter, q0, v0)
    if fail >= 0:
        raise IntegrationError(
            f"reduced Newton iteration failed at step {fail}", step=fail)
    return ReducedHistory(dt=dt, coords=Q, velocity=Vel, acceleration=Acc)


def reconstruct(red: ReducedSystem, hist: ReducedHistory) -> TimeHistory:
    """Lift a reduced trajectory back to physical coordinates."""
    V = red.basis
    return TimeHistory(dt=hist.dt,
                       displacement=V @ hist.coords,
                       velocity=V @ hist.velocity,
                       acceleration=V @ hist.acceleration)


def _field(x) -> np.ndarray:
    return x.displacement if isinstance(x, TimeHistory) else np.asarray(x, dtype=float)


def error_metric(reference, approximation, dofs=None, steps=None) -> float:
    """Relative trajectory mismatch in percent.

    100 * ||ref - approx||_F / ||ref||_F over an optional dof/step subset.
    Accepts TimeHistory objects (displacement field) or plain arrays.
    """
    ref = _field(reference)
    app = _field(approximation)
    if ref.shape != app.shape:
        raise GeometryError("histories must share a shape")
    if dofs is not None:
        ref = ref[np.asarray(dofs, dtype=int)]
        app = app[np.asarray(dofs, dtype=int)]
    if steps is not None:
        ref = ref[:, np.asarray(steps, dtype=int)]
        app = app[:, np.asarray(steps, dtype=int)]
    denom = np.linalg.norm(ref)
    if denom <= 0.0:
        raise GeometryError("reference trajectory has no energy")
    return 100.0 * float(np.linalg.norm(ref - app) / denom)
