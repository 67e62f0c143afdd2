"""Backend parity: the compiled kernels must match the numpy reference."""

import numpy as np
import pytest

from genrom import _kernels as kernels
from genrom._kernels import _ref

needs_ext = pytest.mark.skipif(kernels.BACKEND != "compiled",
                               reason="compiled extension not available")


def random_problem(seed, r=7, m=20, n_steps=150):
    rng = np.random.default_rng(seed)
    dmat = 0.4 * rng.standard_normal((m, r))
    k_lin = rng.uniform(60.0, 140.0, m)
    k_cub = rng.uniform(0.0, 90.0, m)
    weights = rng.uniform(0.5, 1.5, m)
    m_red = np.eye(r) + 0.01 * rng.standard_normal((r, r))
    m_red = 0.5 * (m_red + m_red.T)
    c_red = 0.05 * np.eye(r)
    f = 0.8 * rng.standard_normal((r, n_steps + 1))
    q0 = 0.05 * rng.standard_normal(r)
    v0 = 0.05 * rng.standard_normal(r)
    return (m_red, c_red, dmat, k_lin, k_cub, weights, f,
            0.01, 0.25, 0.5, 1e-8, 1e-10, 25, q0, v0)


class TestAssemblyOracle:
    def test_full_force_matches_loop_construction(self):
        # independent oracle: accumulate element forces one at a time
        rng = np.random.default_rng(2)
        n, m = 9, 15
        dof_a = rng.integers(0, n, m).astype(np.int64)
        dof_b = rng.integers(-1, n, m).astype(np.int64)
        dof_b[dof_b == dof_a] = -1
        k_lin = rng.uniform(10.0, 50.0, m)
        k_cub = rng.uniform(0.0, 30.0, m)
        u = rng.standard_normal(n)
        g = np.zeros(n)
        for e in range(m):
            a, b = dof_a[e], dof_b[e]
            delta = u[a] if b < 0 else u[b] - u[a]
            f = k_lin[e] * delta + k_cub[e] * delta ** 3
            if b < 0:
                g[a] += f
            else:
                g[a] -= f
                g[b] += f
        np.testing.assert_allclose(
            kernels.assemble_force(u, dof_a, dof_b, k_lin, k_cub), g,
            atol=1e-12)

    def test_tangent_consistent_with_force(self):
        rng = np.random.default_rng(3)
        n, m = 6, 11
        dof_a = rng.integers(0, n, m).astype(np.int64)
        dof_b = rng.integers(-1, n, m).astype(np.int64)
        dof_b[dof_b == dof_a] = -1
        k_lin = rng.uniform(10.0, 50.0, m)
        k_cub = rng.uniform(0.0, 30.0, m)
        u = rng.standard_normal(n)
        g1 = kernels.assemble_force(u, dof_a, dof_b, k_lin, k_cub)
        g2, K = kernels.assemble_force_tangent(u, dof_a, dof_b, k_lin, k_cub)
        # accumulation order differs between the two paths, so roundoff only
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-9)
        h = 1e-7
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            fd = (kernels.assemble_force(u + e, dof_a, dof_b, k_lin, k_cub)
                  - kernels.assemble_force(u - e, dof_a, dof_b, k_lin, k_cub)) / (2 * h)
            np.testing.assert_allclose(K[:, j], fd, atol=1e-5)


@needs_ext
class TestBackendParity:
    def test_reduced_force_tangent(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            r, m = 6, 18
            dmat = rng.standard_normal((m, r))
            k_lin = rng.uniform(50.0, 150.0, m)
            k_cub = rng.uniform(0.0, 80.0, m)
            w = rng.uniform(0.1, 2.0, m)
            q = rng.standard_normal(r)
            g1, K1 = _ref.reduced_force_tangent(q, dmat, k_lin, k_cub, w)
            g2, K2 = kernels.reduced_force_tangent(q, dmat, k_lin, k_cub, w)
            np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(K1, K2, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_newmark_trajectories_and_iterations(self, seed):
        args = random_problem(seed)
        Q1, V1, A1, it1, f1 = _ref.newmark_reduced(*args)
        Q2, V2, A2, it2, f2 = kernels.newmark_reduced(*args)
        assert f1 == f2 == -1
        assert it1 == it2  # identical Newton paths, not just close answers
        np.testing.assert_allclose(Q1, Q2, atol=1e-12)
        np.testing.assert_allclose(V1, V2, atol=1e-11)
        np.testing.assert_allclose(A1, A2, atol=1e-10)

    def test_free_vibration_parity(self):
        args = list(random_problem(4))
        args[6] = np.zeros_like(args[6])  # no load: absolute floor path
        Q1, _, _, it1, f1 = _ref.newmark_reduced(*args)
        Q2, _, _, it2, f2 = kernels.newmark_reduced(*args)
        assert f1 == f2 == -1
        assert it1 == it2
        np.testing.assert_allclose(Q1, Q2, atol=1e-12)

    def test_failure_step_parity(self):
        args = list(random_problem(5))
        args[4] = args[4] * 1e6   # violently stiff cubic term
        args[7] = 0.3             # huge step
        args[12] = 2              # starve the Newton loop
        _, _, _, _, f1 = _ref.newmark_reduced(*args)
        _, _, _, _, f2 = kernels.newmark_reduced(*args)
        assert f1 == f2
        assert f1 > 0
