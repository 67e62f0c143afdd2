"""Element weighting so projected force assembly touches few elements.

Training stacks, state by state, the projected per-element force
contributions into a matrix G whose row blocks are r-vectors per element.
The all-ones weight vector reproduces the exact projected force, so the
target b = G @ 1 is always reachable; a sparse non-negative least-squares
solve then looks for far fewer positive weights with a controlled residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .fom import FOMSystem, ParameterVector, element_directions


@dataclass
class ECSWWeights:
    """Sparse positive element weights bound to the basis they were trained on."""

    element_ids: np.ndarray
    weights: np.ndarray
    residual: float
    tolerance: float
    converged: bool
    n_elements_total: int
    basis_hash: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def n_selected(self) -> int:
        return self.element_ids.shape[0]

    def dense(self) -> np.ndarray:
        xi = np.zeros(self.n_elements_total)
        xi[self.element_ids] = self.weights
        return xi


def select_training_states(displacements: np.ndarray, max_states: int = 200,
                           offset: int = 0) -> np.ndarray:
    """Uniform-stride column subset capped at max_states."""
    n_cols = displacements.shape[1]
    stride = max(1, -(-n_cols // max_states))
    return displacements[:, offset::stride][:, :max_states]


def build_ecsw_system(system: FOMSystem, basis: np.ndarray,
                      states: np.ndarray,
                      params: ParameterVector | list[ParameterVector],
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Training matrix G and target b = G @ 1.

    ``states`` holds displacement snapshots as columns; ``params`` is either
    one parameter vector for all states or one per state.
    """
    V = np.asarray(basis, dtype=float)
    n, r = V.shape
    if states.shape[0] != n:
        raise GeometryError("state dimension does not match the basis")
    n_states = states.shape[1]
    if isinstance(params, ParameterVector):
        params = [params] * n_states
    if len(params) != n_states:
        raise GeometryError("need one parameter vector per training state")

    dmat = element_directions(system, V)  # (n_el, r)
    G = np.empty((n_states * r, system.n_elements))
    for s in range(n_states):
        k_lin, k_cub = system.element_stiffness(params[s])
        delta = np.where(system.dof_b >= 0,
                         states[system.dof_b, s] - states[system.dof_a, s],
                         states[system.dof_a, s])
        f = (k_lin + k_cub * delta * delta) * delta
        G[s * r:(s + 1) * r, :] = (dmat * f[:, None]).T
    return G, G.sum(axis=1)


def solve_sparse_nnls(G: np.ndarray, b: np.ndarray, tau: float = 0.01,
                      max_outer: int | None = None,
                      min_elements: int = 0) -> ECSWWeights:
    """Greedy active-set non-negative least squares with early stopping.

    Elements enter by steepest correlation with the residual; each entry is
    followed by a restricted least-squares solve with the classic
    positivity-restoration inner loop. Iteration stops once
    ||G xi - b|| <= tau * ||b||, so loose tolerances buy sparsity.
    ``min_elements`` keeps the loop recruiting past the tolerance until the
    weighted set reaches that size (capped by the column count); a set
    smaller than the projection order is usually too poor to reproduce the
    reduced force over a whole trajectory even when its training residual
    passes.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    n_el = G.shape[1]
    norm_b = np.linalg.norm(b)
    if norm_b <= 0.0:
        raise GeometryError("weight training target vanishes; no snapshot "
                            "produces any projected force")
    if max_outer is None:
        max_outer = n_el
    min_elements = min(int(min_elements), n_el)

    target = tau * norm_b
    xi = np.zeros(n_el)
    active: list[int] = []
    residual = b.copy()
    rnorm = norm_b
    history = [rnorm / norm_b]
    inner_budget = 10 * n_el

    while ((rnorm > target or len(active) < min_elements)
           and len(active) < n_el and len(history) <= max_outer):
        mu = G.T @ residual
        mu[active] = -np.inf
        e = int(np.argmax(mu))
        if mu[e] <= 0.0:
            break  # KKT point of the constrained problem
        active.append(e)
        xi[e] = 0.0
        while inner_budget > 0:
            inner_budget -= 1
            z, *_ = np.linalg.lstsq(G[:, active], b, rcond=None)
            if np.all(z > 0.0):
                for idx, el in enumerate(active):
                    xi[el] = z[idx]
                break
            cur = np.array([xi[el] for el in active])
            neg = z <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = cur[neg] / (cur[neg] - z[neg])
            alpha = float(np.min(steps))
            cur = cur + alpha * (z - cur)
            keep = cur > 1e-12 * max(1.0, float(np.max(np.abs(cur))))
            for idx, el in enumerate(active):
                xi[el] = cur[idx] if keep[idx] else 0.0
            active = [el for idx, el in enumerate(active) if keep[idx]]
            if not active:
                break
        residual = b - G[:, active] @ np.array([xi[el] for el in active])
        rnorm = float(np.linalg.norm(residual))
        history.append(rnorm / norm_b)

    ids = np.array(sorted(active), dtype=np.int64)
    return ECSWWeights(
        element_ids=ids,
        weights=xi[ids],
        residual=rnorm / norm_b,
        tolerance=tau,
        converged=bool(rnorm <= target),
        n_elements_total=n_el,
        history=history,
    )


def train_ecsw(system: FOMSystem, basis: np.ndarray, states: np.ndarray,
               params: ParameterVector | list[ParameterVector],
               tau: float = 0.01, basis_hash: str = "",
               min_elements: int | None = None) -> ECSWWeights:
    """End-to-end weight training against a fixed projection basis.

    By default the weighted set is required to hold at least as many
    elements as the basis has columns, on top of the residual tolerance.
    """
    if min_elements is None:
        min_elements = basis.shape[1]
    G, b = build_ecsw_system(system, basis, states, params)
    weights = solve_sparse_nnls(G, b, tau=tau, min_elements=min_elements)
    weights.basis_hash = basis_hash
    return weights
