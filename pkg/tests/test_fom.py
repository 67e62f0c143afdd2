import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.special import ndtr

from genrom.errors import ConfigurationError, IntegrationError
from genrom.fom import (ChainConfig, Marginal, MultiSineExcitation,
                        ParameterSpace, ParameterVector, assemble_chain,
                        element_directions, integrate_newmark,
                        make_perturbed_twin, sample_parameters)


def sdof_system(k=4.0 * math.pi ** 2, k3=0.0, alpha_m=0.0, alpha_k=0.0,
                amplitude=0.0, **exc_kw):
    exc = MultiSineExcitation(base_amplitude=amplitude, **exc_kw)
    cfg = ChainConfig(n_dof=1, mass=1.0, k_lin=k, k_cub=k3, ground="first",
                      alpha_m=alpha_m, alpha_k=alpha_k, excitation=exc)
    return assemble_chain(cfg)


def nominal(names=("stiffness_scale", "cubic_scale", "amp_scale", "load_angle")):
    vals = {"stiffness_scale": 1.0, "cubic_scale": 1.0, "amp_scale": 1.0,
            "load_angle": 0.0}
    return ParameterVector(tuple(names), np.array([vals[n] for n in names]))


class TestAssembly:
    def test_element_counts_per_layout(self):
        # 3 masses grounded at both ends: 2 ground + 2 coupling springs
        cfg = ChainConfig(n_dof=3, ground="both")
        assert assemble_chain(cfg).n_elements == 4
        assert assemble_chain(ChainConfig(n_dof=5, ground="first")).n_elements == 5
        assert assemble_chain(ChainConfig(n_dof=5, ground="all")).n_elements == 9

    def test_linear_stiffness_matrix_matches_graph(self):
        sys3 = assemble_chain(ChainConfig(n_dof=3, k_lin=10.0, ground="both"))
        K = sys3.linear_stiffness_matrix(nominal())
        expected = 10.0 * np.array([[2.0, -1.0, 0.0],
                                    [-1.0, 2.0, -1.0],
                                    [0.0, -1.0, 2.0]])
        np.testing.assert_allclose(K, expected)

    def test_load_patterns_orthonormal(self):
        sys = assemble_chain(ChainConfig(n_dof=7))
        P = sys.load_patterns
        np.testing.assert_allclose(P.T @ P, np.eye(2), atol=1e-12)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ConfigurationError):
            assemble_chain(ChainConfig(n_dof=0))
        with pytest.raises(ConfigurationError):
            assemble_chain(ChainConfig(k_lin=-1.0))
        with pytest.raises(ConfigurationError):
            assemble_chain(ChainConfig(ground="sideways"))
        with pytest.raises(ConfigurationError):
            MultiSineExcitation(f_min=2.0, f_max=1.0)

    def test_element_directions_identity_basis(self):
        sys = assemble_chain(ChainConfig(n_dof=3, ground="both"))
        D = element_directions(sys, np.eye(3))
        np.testing.assert_array_equal(D[0], [1.0, 0.0, 0.0])   # ground at 0
        np.testing.assert_array_equal(D[1], [0.0, 0.0, 1.0])   # ground at 2
        np.testing.assert_array_equal(D[2], [-1.0, 1.0, 0.0])  # 0-1 coupling
        np.testing.assert_array_equal(D[3], [0.0, -1.0, 1.0])  # 1-2 coupling

    def test_tangent_matches_finite_differences(self):
        sys = assemble_chain(ChainConfig(n_dof=6, k_cub=80.0, ground="all"))
        p = nominal()
        rng = np.random.default_rng(3)
        u = 0.3 * rng.standard_normal(6)
        _, K = sys.restoring_force_tangent(u, p)
        h = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            col = (sys.restoring_force(u + e, p) - sys.restoring_force(u - e, p)) / (2 * h)
            np.testing.assert_allclose(K[:, j], col, rtol=1e-6, atol=1e-6)


class TestIntegrator:
    def test_sdof_free_vibration_matches_cosine(self):
        # u(t) = cos(2 pi t) for k = 4 pi^2, m = 1, u0 = 1
        sys = sdof_system()
        hist = integrate_newmark(sys, nominal(), dt=1e-3, n_steps=1000,
                                 u0=np.array([1.0]))
        exact = np.cos(2.0 * math.pi * hist.times)
        err = np.max(np.abs(hist.displacement[0] - exact))
        assert err < 5e-3

    def test_second_order_convergence(self):
        sys = sdof_system()
        errs = []
        for dt in (2e-3, 1e-3):
            n = int(round(1.0 / dt))
            hist = integrate_newmark(sys, nominal(), dt=dt, n_steps=n,
                                     u0=np.array([1.0]))
            exact = np.cos(2.0 * math.pi * hist.times)
            errs.append(np.max(np.abs(hist.displacement[0] - exact)))
        ratio = errs[0] / errs[1]
        assert 3.3 < ratio < 4.7

    def test_energy_conserved_linear_undamped(self):
        cfg = ChainConfig(n_dof=8, k_lin=50.0, k_cub=0.0, ground="all",
                          alpha_m=0.0, alpha_k=0.0,
                          excitation=MultiSineExcitation(base_amplitude=0.0))
        sys = assemble_chain(cfg)
        p = nominal()
        rng = np.random.default_rng(11)
        u0 = 0.1 * rng.standard_normal(8)
        hist = integrate_newmark(sys, p, dt=0.01, n_steps=400, u0=u0)
        K = sys.linear_stiffness_matrix(p)
        U, V = hist.displacement, hist.velocity
        energy = 0.5 * (np.einsum("it,ij,jt->t", V, sys.mass, V)
                        + np.einsum("it,ij,jt->t", U, K, U))
        drift = np.max(np.abs(energy - energy[0])) / energy[0]
        assert drift < 1e-9

    def test_forced_duffing_matches_ode_oracle(self):
        # independent oracle: adaptive RK on the first-order form
        k, k3, amp = 40.0, 400.0, 2.0
        sys = sdof_system(k=k, k3=k3, alpha_m=0.05, alpha_k=0.001,
                          amplitude=amp, n_components=4, f_min=0.4,
                          f_max=1.2, phase_seed=5)
        p = nominal()
        dt, n = 0.002, 1500
        hist = integrate_newmark(sys, p, dt=dt, n_steps=n)

        c = 0.05 * 1.0 + 0.001 * k
        exc = sys.excitation

        def rhs(t, y):
            f = exc.signal(np.array([t]))[0]
            return [y[1], f - c * y[1] - k * y[0] - k3 * y[0] ** 3]

        sol = solve_ivp(rhs, (0.0, n * dt), [0.0, 0.0], t_eval=hist.times,
                        rtol=1e-10, atol=1e-12, method="RK45")
        ref = sol.y[0]
        scale = np.max(np.abs(ref))
        err = np.max(np.abs(hist.displacement[0] - ref)) / scale
        assert err < 2e-3

    def test_nonconvergence_reports_step(self):
        sys = sdof_system(k=40.0, k3=4000.0, amplitude=5.0,
                          n_components=3, f_min=0.5, f_max=1.5)
        with pytest.raises(IntegrationError) as exc_info:
            integrate_newmark(sys, nominal(), dt=0.05, n_steps=50, max_iter=1)
        assert exc_info.value.step >= 1

    def test_initial_conditions_respected(self):
        sys = sdof_system(k=10.0)
        hist = integrate_newmark(sys, nominal(), dt=0.01, n_steps=10,
                                 u0=np.array([0.7]), v0=np.array([-0.2]))
        assert hist.displacement[0, 0] == 0.7
        assert hist.velocity[0, 0] == -0.2
        # a0 = (F0 - C v0 - g(u0)) / m with F0 = 0 here
        np.testing.assert_allclose(hist.acceleration[0, 0], -10.0 * 0.7)


class TestExcitation:
    def test_rms_stable_across_component_count(self):
        t = np.arange(0.0, 60.0, 0.01)
        for n in (10, 200):
            s = MultiSineExcitation(base_amplitude=2.0, f_min=0.1, f_max=5.0,
                                    n_components=n, phase_seed=1).signal(t)
            rms = math.sqrt(float(np.mean(s ** 2)))
            assert abs(rms - 2.0 / math.sqrt(2.0)) / (2.0 / math.sqrt(2.0)) < 0.25

    def test_phase_seed_reproducible(self):
        t = np.linspace(0.0, 3.0, 301)
        a = MultiSineExcitation(phase_seed=9).signal(t)
        b = MultiSineExcitation(phase_seed=9).signal(t)
        c = MultiSineExcitation(phase_seed=10).signal(t)
        np.testing.assert_array_equal(a, b)
        assert np.max(np.abs(a - c)) > 1e-3

    def test_load_angle_selects_pattern(self):
        sys = assemble_chain(ChainConfig(n_dof=4))
        t = np.array([0.3])
        p0 = ParameterVector(("load_angle",), np.array([0.0]))
        p1 = ParameterVector(("load_angle",), np.array([math.pi / 2.0]))
        f0 = sys.external_force(t, p0)[:, 0]
        f1 = sys.external_force(t, p1)[:, 0]
        s = sys.excitation.signal(t)[0]
        np.testing.assert_allclose(f0, sys.load_patterns[:, 0] * s, atol=1e-12)
        np.testing.assert_allclose(f1, sys.load_patterns[:, 1] * s, atol=1e-12)


class TestParameterSampling:
    def space(self):
        return ParameterSpace(
            names=("a", "b"),
            marginals=(
                Marginal("uniform", lower=2.0, upper=4.0),
                Marginal("normal", lower=0.5, upper=1.5, mean=1.0, std=0.2),
            ))

    def test_each_stratum_hit_exactly_once(self):
        n = 10
        samples = sample_parameters(self.space(), n, seed=123)
        a = np.array([s.get("a") for s in samples])
        strata = np.floor((a - 2.0) / 2.0 * n).astype(int)
        assert sorted(strata) == list(range(n))

        # normal marginal: map through the truncated CDF, then bin
        b = np.array([s.get("b") for s in samples])
        lo, hi = ndtr((0.5 - 1.0) / 0.2), ndtr((1.5 - 1.0) / 0.2)
        u = (ndtr((b - 1.0) / 0.2) - lo) / (hi - lo)
        strata = np.floor(u * n).astype(int)
        assert sorted(strata) == list(range(n))

    def test_truncation_bounds_respected(self):
        samples = sample_parameters(self.space(), 200, seed=7)
        b = np.array([s.get("b") for s in samples])
        assert b.min() >= 0.5 and b.max() <= 1.5

    def test_seed_determinism(self):
        s1 = sample_parameters(self.space(), 8, seed=55)
        s2 = sample_parameters(self.space(), 8, seed=55)
        s3 = sample_parameters(self.space(), 8, seed=56)
        for x, y in zip(s1, s2):
            np.testing.assert_array_equal(x.values, y.values)
        assert any(np.any(x.values != y.values) for x, y in zip(s1, s3))

    def test_parameter_vector_defaults(self):
        p = ParameterVector(("stiffness_scale",), np.array([1.3]))
        assert p.get("stiffness_scale") == 1.3
        assert p.get("amp_scale") == 1.0
        with pytest.raises(KeyError):
            p.get("not_a_parameter")


class TestPerturbedTwin:
    def test_zero_sigma_is_bit_identical(self):
        sys = assemble_chain(ChainConfig(n_dof=5, k_cub=30.0))
        p = ParameterVector(("stiffness_scale",), np.array([1.1]))
        twin = make_perturbed_twin(sys, sigma=0.0, seed=4)
        np.testing.assert_array_equal(twin.k_lin, sys.k_lin)
        np.testing.assert_array_equal(twin.k_cub, sys.k_cub)
        h1 = integrate_newmark(sys, p, dt=0.01, n_steps=50)
        h2 = integrate_newmark(twin, p, dt=0.01, n_steps=50)
        np.testing.assert_array_equal(h1.displacement, h2.displacement)

    def test_perturbation_seeded_and_clamped(self):
        sys = assemble_chain(ChainConfig(n_dof=5, k_lin=100.0))
        t1 = make_perturbed_twin(sys, sigma=5.0, seed=9)
        t2 = make_perturbed_twin(sys, sigma=5.0, seed=9)
        t3 = make_perturbed_twin(sys, sigma=5.0, seed=10)
        np.testing.assert_array_equal(t1.k_lin, t2.k_lin)
        assert np.max(np.abs(t1.k_lin - t3.k_lin)) > 1e-6
        big = make_perturbed_twin(sys, sigma=1e4, seed=2)
        assert np.all(big.k_lin > 0)

    def test_twin_scales_with_the_parameter_family(self):
        sys = assemble_chain(ChainConfig(n_dof=4))
        twin = make_perturbed_twin(sys, sigma=2.0, seed=1)
        assert twin.baseline_perturbed
        base = ParameterVector(("stiffness_scale", "cubic_scale"),
                               np.array([1.0, 1.0]))
        scaled = ParameterVector(("stiffness_scale", "cubic_scale"),
                                 np.array([2.0, 3.0]))
        k1, c1 = twin.element_stiffness(base)
        k2, c2 = twin.element_stiffness(scaled)
        np.testing.assert_allclose(k2, 2.0 * k1)
        np.testing.assert_allclose(c2, 3.0 * c1)
