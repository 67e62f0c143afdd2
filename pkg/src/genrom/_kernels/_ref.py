"""Reference numpy implementation of the hot assembly/integration kernels.

The compiled backend (``_core``) mirrors this module function for function.
Keep the two in lockstep: the parity tests compare them to near machine
precision on random problems.

Element convention: each element ``e`` couples ``dof_a[e]`` to ``dof_b[e]``
with elongation ``delta = u[b] - u[a]``; ``dof_b[e] == -1`` marks a ground
spring with ``delta = u[a]``. The scalar law is ``f = k*delta + k3*delta**3``
with tangent ``k + 3*k3*delta**2``.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def element_elongations(u, dof_a, dof_b):
    delta = np.where(dof_b >= 0, u[dof_b] - u[dof_a], u[dof_a])
    return delta


def element_state(delta, k_lin, k_cub):
    """Per-element force and tangent stiffness from elongations."""
    d2 = delta * delta
    f = (k_lin + k_cub * d2) * delta
    kt = k_lin + 3.0 * k_cub * d2
    return f, kt


def assemble_force(u, dof_a, dof_b, k_lin, k_cub):
    """Full-order elastic restoring force g(u)."""
    delta = element_elongations(u, dof_a, dof_b)
    f, _ = element_state(delta, k_lin, k_cub)
    g = np.zeros_like(u)
    grounded = dof_b < 0
    np.add.at(g, dof_a[grounded], f[grounded])
    pair = ~grounded
    np.add.at(g, dof_a[pair], -f[pair])
    np.add.at(g, dof_b[pair], f[pair])
    return g


def assemble_force_tangent(u, dof_a, dof_b, k_lin, k_cub):
    """Restoring force and dense tangent stiffness matrix."""
    n = u.shape[0]
    delta = element_elongations(u, dof_a, dof_b)
    f, kt = element_state(delta, k_lin, k_cub)
    g = np.zeros(n)
    K = np.zeros((n, n))
    for e in range(dof_a.shape[0]):
        a = dof_a[e]
        b = dof_b[e]
        if b < 0:
            g[a] += f[e]
            K[a, a] += kt[e]
        else:
            g[a] -= f[e]
            g[b] += f[e]
            K[a, a] += kt[e]
            K[b, b] += kt[e]
            K[a, b] -= kt[e]
            K[b, a] -= kt[e]
    return g, K


def reduced_force_tangent(q, dmat, k_lin, k_cub, weights):
    """Projected restoring force and tangent in reduced coordinates.

    ``dmat`` holds one row per retained element: the reduced-space direction
    along which that element stretches. ``weights`` are the (positive)
    element weights; pass all-ones for plain Galerkin assembly.
    """
    delta = dmat @ q
    f, kt = element_state(delta, k_lin, k_cub)
    wf = weights * f
    g_r = dmat.T @ wf
    K_r = dmat.T @ (dmat * (weights * kt)[:, None])
    return g_r, K_r


def newmark_reduced(m_red, c_red, dmat, k_lin, k_cub, weights, f_red, dt,
                    beta, gamma, rel_tol, abs_floor, max_iter, q0, v0):
    """Implicit Newmark time stepping of the reduced system.

    Parameters follow the average-acceleration family: the predictor is the
    previous displacement, and each step solves the nonlinear residual
    ``m a + c v + g(q) - f`` with Newton iteration.

    Returns ``(Q, V, A, total_newton_iters, fail_step)``; ``fail_step`` is
    ``-1`` on success, otherwise the 1-based index of the step whose Newton
    loop did not converge (arrays are filled up to the failing step).
    """
    r = m_red.shape[0]
    n_steps = f_red.shape[1] - 1
    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 0.5 / beta - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt * (0.5 * gamma / beta - 1.0)

    Q = np.zeros((r, n_steps + 1))
    V = np.zeros((r, n_steps + 1))
    A = np.zeros((r, n_steps + 1))
    Q[:, 0] = q0
    V[:, 0] = v0
    g0, _ = reduced_force_tangent(q0, dmat, k_lin, k_cub, weights)
    A[:, 0] = np.linalg.solve(m_red, f_red[:, 0] - c_red @ v0 - g0)

    total_iters = 0
    for n in range(n_steps):
        qn = Q[:, n]
        vn = V[:, n]
        an = A[:, n]
        fn1 = f_red[:, n + 1]
        q = qn.copy()
        converged = False
        tol = abs_floor
        for it in range(max_iter):
            acc = a0 * (q - qn) - a2 * vn - a3 * an
            vel = vn + dt * (1.0 - gamma) * an + gamma * dt * acc
            g, Kt = reduced_force_tangent(q, dmat, k_lin, k_cub, weights)
            f_ine = m_red @ acc
            f_dmp = c_red @ vel
            res = fn1 - f_ine - f_dmp - g
            if it == 0:
                # residual measured against every force in play, so the
                # criterion survives F ~ 0 (free vibration) and the
                # 1/(beta dt^2) roundoff amplification
                ref = (np.linalg.norm(fn1) + np.linalg.norm(f_ine)
                       + np.linalg.norm(f_dmp) + np.linalg.norm(g))
                tol = max(rel_tol * ref, abs_floor)
            total_iters += 1
            if np.linalg.norm(res) <= tol:
                converged = True
                break
            K_eff = Kt + a0 * m_red + a1 * c_red
            q = q + np.linalg.solve(K_eff, res)
        if not converged:
            return Q, V, A, total_iters, n + 1
        acc = a0 * (q - qn) - a2 * vn - a3 * an
        vel = vn + dt * (1.0 - gamma) * an + gamma * dt * acc
        Q[:, n + 1] = q
        V[:, n + 1] = vel
        A[:, n + 1] = acc
    return Q, V, A, total_iters, -1


def newmark_full(mass, damp, dof_a, dof_b, k_lin, k_cub, force, dt,
                 beta, gamma, rel_tol, abs_floor, max_iter, u0, v0):
    """Implicit Newmark stepping of the full-order chain (dense solves)."""
    n = mass.shape[0]
    n_steps = force.shape[1] - 1
    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 0.5 / beta - 1.0

    U = np.zeros((n, n_steps + 1))
    V = np.zeros((n, n_steps + 1))
    A = np.zeros((n, n_steps + 1))
    U[:, 0] = u0
    V[:, 0] = v0
    g0 = assemble_force(u0, dof_a, dof_b, k_lin, k_cub)
    A[:, 0] = np.linalg.solve(mass, force[:, 0] - damp @ v0 - g0)

    total_iters = 0
    for step in range(n_steps):
        un = U[:, step]
        vn = V[:, step]
        an = A[:, step]
        fn1 = force[:, step + 1]
        u = un.copy()
        converged = False
        tol = abs_floor
        for it in range(max_iter):
            acc = a0 * (u - un) - a2 * vn - a3 * an
            vel = vn + dt * (1.0 - gamma) * an + gamma * dt * acc
            g, Kt = assemble_force_tangent(u, dof_a, dof_b, k_lin, k_cub)
            f_ine = mass @ acc
            f_dmp = damp @ vel
            res = fn1 - f_ine - f_dmp - g
            if it == 0:
                ref = (np.linalg.norm(fn1) + np.linalg.norm(f_ine)
                       + np.linalg.norm(f_dmp) + np.linalg.norm(g))
                tol = max(rel_tol * ref, abs_floor)
            total_iters += 1
            if np.linalg.norm(res) <= tol:
                converged = True
                break
            K_eff = Kt + a0 * mass + a1 * damp
            u = u + np.linalg.solve(K_eff, res)
        if not converged:
            return U, V, A, total_iters, step + 1
        acc = a0 * (u - un) - a2 * vn - a3 * an
        vel = vn + dt * (1.0 - gamma) * an + gamma * dt * acc
        U[:, step + 1] = u
        V[:, step + 1] = vel
        A[:, step + 1] = acc
    return U, V, A, total_iters, -1
