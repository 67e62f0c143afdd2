"""Projection bases and the geometry used to interpolate between them.

Local bases live on the Grassmann manifold of r-dimensional subspaces. They
are mapped to the tangent space at a reference subspace (matrix logarithm),
expressed there as small coefficient matrices against a global basis, and
mapped back (exponential) after generation. All maps use thin SVDs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class PODBasis:
    """Orthonormal mode set with the full singular spectrum it came from."""

    modes: np.ndarray
    singular_values: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.modes.shape[0]

    @property
    def order(self) -> int:
        return self.modes.shape[1]

    def project(self, u: np.ndarray) -> np.ndarray:
        return self.modes.T @ u

    def lift(self, q: np.ndarray) -> np.ndarray:
        return self.modes @ q


def truncation_order(singular_values: np.ndarray, tol_energy: float) -> int:
    """Smallest r whose discarded tail energy fraction is <= tol_energy.

    Energy is measured in squared singular values. tol_energy >= 1 collapses
    to a single mode.
    """
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total <= 0.0:
        raise GeometryError("spectrum carries no energy")
    tail = 1.0 - np.cumsum(s2) / total
    # roundoff can leave a tiny negative tail at full rank
    tail = np.maximum(tail, 0.0)
    return int(np.argmax(tail <= tol_energy) + 1)


def compute_pod(snapshots: np.ndarray, tol_energy: float = 1e-5,
                min_order: int | None = None,
                max_order: int | None = None) -> PODBasis:
    """Proper orthogonal decomposition of a snapshot matrix.

    Columns of ``snapshots`` are states. The basis order is the energy rule
    of :func:`truncation_order`, clamped to [min_order, max_order] when
    given.
    """
    S = np.asarray(snapshots, dtype=float)
    if S.ndim != 2 or S.size == 0:
        raise GeometryError("snapshot matrix must be 2-D and non-empty")
    if not np.all(np.isfinite(S)):
        raise GeometryError("snapshot matrix contains non-finite entries")
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    if s[0] <= 0.0:
        raise GeometryError("snapshot matrix has no energy")
    r = truncation_order(s, tol_energy)
    if min_order is not None:
        r = max(r, min_order)
    if max_order is not None:
        r = min(r, max_order)
    r = max(1, min(r, s.shape[0]))
    return PODBasis(modes=U[:, :r].copy(), singular_values=s)


def mgs_orthonormalize(a: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalization pass."""
    q = np.array(a, dtype=float, copy=True)
    n, m = q.shape
    if m > n:
        raise GeometryError("cannot orthonormalize more columns than rows")
    for _ in range(2):
        for j in range(m):
            for i in range(j):
                q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
            norm = np.linalg.norm(q[:, j])
            if norm < 1e-14:
                raise GeometryError("rank-deficient basis in orthonormalization")
            q[:, j] /= norm
    return q


def _check_basis_pair(v0: np.ndarray, vi: np.ndarray, tol: float = 1e-8):
    if v0.shape != vi.shape:
        raise GeometryError("bases must share a shape")
    if v0.shape[0] < v0.shape[1]:
        raise GeometryError("basis must be tall (n_dof >= order)")
    for name, v in (("reference", v0), ("target", vi)):
        err = np.max(np.abs(v.T @ v - np.eye(v.shape[1])))
        if err > tol:
            raise GeometryError(f"{name} basis is not orthonormal (dev {err:.2e})")


def grassmann_log(v0: np.ndarray, vi: np.ndarray) -> np.ndarray:
    """Tangent-space image of subspace vi at reference subspace v0.

    Raises GeometryError at (or numerically near) the cut locus, where some
    principal angle reaches 90 degrees and the map is undefined.
    """
    v0 = np.asarray(v0, dtype=float)
    vi = np.asarray(vi, dtype=float)
    _check_basis_pair(v0, vi)
    a = v0.T @ vi
    smin = np.linalg.svd(a, compute_uv=False)[-1]
    if smin < 1e-12:
        raise GeometryError("subspaces are orthogonal along some direction "
                            "(cut locus); tangent map undefined")
    t = np.linalg.solve(a.T, vi.T).T  # vi @ inv(a)
    l = t - v0 @ (v0.T @ t)
    u, s, wt = np.linalg.svd(l, full_matrices=False)
    return (u * np.arctan(s)) @ wt


def grassmann_exp(v0: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Inverse of :func:`grassmann_log`: map a tangent matrix to a basis.

    The result is re-orthonormalized; a zero tangent returns v0 itself.
    """
    v0 = np.asarray(v0, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != v0.shape:
        raise GeometryError("tangent matrix shape must match the reference")
    u, s, wt = np.linalg.svd(gamma, full_matrices=False)
    v = (v0 @ wt.T) * np.cos(s) + u * np.sin(s)
    return mgs_orthonormalize(v @ wt)


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angles between two subspaces, ascending, in radians.

    Uses the combined sine/cosine formulation: arccos of the cross-Gramian
    singular values alone cannot resolve angles below sqrt(machine eps), so
    small angles come from the sine part instead.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = a.T @ b
    cosines = np.sort(np.clip(np.linalg.svd(m, compute_uv=False), 0.0, 1.0))[::-1]
    sines = np.sort(np.clip(np.linalg.svd(b - a @ m, compute_uv=False), 0.0, 1.0))
    return np.arctan2(sines, cosines)


def subspace_coefficients(gamma: np.ndarray, v_global: np.ndarray) -> np.ndarray:
    """Least-squares coefficients expressing a tangent matrix in the global
    basis: minimizes ||v_global @ X - gamma||_F column by column."""
    x, *_ = np.linalg.lstsq(v_global, gamma, rcond=None)
    return x


def tangent_from_coefficients(x: np.ndarray, v_global: np.ndarray) -> np.ndarray:
    return v_global @ x


def horizontal_project(x: np.ndarray, v_global: np.ndarray,
                       v0: np.ndarray) -> np.ndarray:
    """Remove the tangent component pointing along the reference subspace.

    Generated coefficient matrices are not exactly horizontal; this projects
    v_global @ x onto the complement of span(v0), expressed back in x.
    """
    b = v_global.T @ v0          # (r_tilde, r)
    return x - b @ (v0.T @ (v_global @ x))


def reconstruct_basis(x: np.ndarray, v_global: np.ndarray,
                      v0: np.ndarray) -> np.ndarray:
    """Coefficient matrix -> tangent matrix -> orthonormal local basis."""
    xh = horizontal_project(x, v_global, v0)
    return grassmann_exp(v0, tangent_from_coefficients(xh, v_global))


def flatten_coefficients(x: np.ndarray) -> np.ndarray:
    """Column-major flattening; the generative model sees these vectors."""
    return np.asarray(x, dtype=float).ravel(order="F")


def unflatten_coefficients(vec: np.ndarray, r_tilde: int, r: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.size != r_tilde * r:
        raise GeometryError(f"cannot reshape {vec.size} values to "
                            f"({r_tilde}, {r})")
    return vec.reshape((r_tilde, r), order="F")
