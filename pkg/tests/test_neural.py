import numpy as np
import pytest

from genrom.errors import ConfigurationError
from genrom.neural import (ACTIVATIONS, Adam, DenseNetwork,
                           finite_difference_gradient,
                           relative_gradient_error)


class TestActivations:
    def test_softplus_stable_and_correct(self):
        f, df = ACTIVATIONS["softplus"]
        x = np.array([-800.0, -5.0, 0.0, 5.0, 800.0])
        y = f(x)
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y[2], np.log(2.0))
        np.testing.assert_allclose(y[4], 800.0)
        # derivative is the logistic function
        np.testing.assert_allclose(df(np.array([0.0]))[0], 0.5)

    @pytest.mark.parametrize("name", ["linear", "tanh", "relu", "softplus"])
    def test_derivative_matches_fd(self, name):
        f, df = ACTIVATIONS[name]
        rng = np.random.default_rng(0)
        z = rng.standard_normal(50) * 2.0
        z = z[np.abs(z) > 1e-3]  # stay clear of the relu kink
        h = 1e-7
        fd = (f(z + h) - f(z - h)) / (2.0 * h)
        np.testing.assert_allclose(df(z), fd, atol=1e-6)


class TestDenseNetwork:
    def make(self, seed=0):
        return DenseNetwork.create([3, 8, 5, 2],
                                   ["tanh", "relu", "linear"], seed=seed)

    def test_shapes_and_param_count(self):
        net = self.make()
        assert net.d_in == 3 and net.d_out == 2
        assert net.n_parameters == (3 * 8 + 8) + (8 * 5 + 5) + (5 * 2 + 2)
        y = net.forward(np.zeros((7, 3)))
        assert y.shape == (7, 2)
        assert net.forward(np.zeros(3)).shape == (2,)

    def test_init_seeded_and_scaled(self):
        a = self.make(seed=4)
        b = self.make(seed=4)
        c = self.make(seed=5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)
        assert any(np.any(pa != pc)
                   for pa, pc in zip(a.parameters(), c.parameters()))
        limit = np.sqrt(6.0 / (3 + 8))
        w0 = a.layers[0].w
        assert np.max(np.abs(w0)) <= limit
        assert np.all(a.layers[0].b == 0.0)

    @pytest.mark.parametrize("acts", [
        ["tanh", "tanh", "linear"],
        ["relu", "relu", "linear"],
        ["tanh", "relu", "softplus"],
    ])
    def test_backward_matches_finite_differences(self, acts):
        # oracle: central differences on the summed squared output
        rng = np.random.default_rng(1)
        net = DenseNetwork.create([4, 6, 5, 3], acts, seed=2)
        x = rng.standard_normal((9, 4))

        def loss():
            return 0.5 * float(np.sum(net.forward(x) ** 2))

        out, caches = net.forward_cached(x)
        analytic, _ = net.backward(caches, out)
        numeric = finite_difference_gradient(loss, net.parameters())
        assert relative_gradient_error(analytic, numeric) < 1e-7

    def test_input_gradient(self):
        rng = np.random.default_rng(3)
        net = DenseNetwork.create([4, 7, 2], ["tanh", "linear"], seed=0)
        x = rng.standard_normal((1, 4))
        out, caches = net.forward_cached(x)
        _, grad_in = net.backward(caches, np.ones_like(out))

        def loss():
            return float(np.sum(net.forward(x)))

        numeric = finite_difference_gradient(loss, [x])[0]
        np.testing.assert_allclose(grad_in, numeric, atol=1e-7)

    def test_copy_is_deep(self):
        net = self.make()
        dup = net.copy()
        dup.layers[0].w += 1.0
        assert np.max(np.abs(net.layers[0].w - dup.layers[0].w)) > 0.5

    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigurationError):
            DenseNetwork.create([3, 4], ["tanh", "tanh"], seed=0)
        with pytest.raises(ConfigurationError):
            DenseNetwork.create([3, 4, 2], ["tanh", "warp"], seed=0)
        with pytest.raises(ConfigurationError):
            DenseNetwork([])


class TestAdam:
    def test_first_step_is_signed_lr(self):
        # with bias correction the first update is -lr * g / (|g| + eps)
        p = [np.array([1.0, -2.0, 3.0])]
        g = [np.array([0.5, -1.5, 2.5])]
        opt = Adam(p, lr=1e-3)
        before = p[0].copy()
        opt.step(p, g)
        expected = before - 1e-3 * np.sign(g[0])
        np.testing.assert_allclose(p[0], expected, atol=1e-10)

    def test_converges_on_quadratic(self):
        p = [np.array([4.0, -3.0])]
        opt = Adam(p, lr=0.05)
        for _ in range(2000):
            opt.step(p, [2.0 * p[0]])
        assert np.max(np.abs(p[0])) < 1e-4

    def test_state_mismatch_rejected(self):
        p = [np.zeros(3)]
        opt = Adam(p, lr=0.1)
        with pytest.raises(ConfigurationError):
            opt.step(p, [np.zeros(3), np.zeros(2)])
        with pytest.raises(ConfigurationError):
            Adam(p, lr=0.0)

    def test_trains_network_on_toy_regression(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-1.0, 1.0, (64, 1))
        y = np.sin(2.5 * x)
        net = DenseNetwork.create([1, 16, 1], ["tanh", "linear"], seed=7)
        opt = Adam(net.parameters(), lr=1e-2)
        for _ in range(2000):
            out, caches = net.forward_cached(x)
            grads, _ = net.backward(caches, (out - y) / x.shape[0])
            opt.step(net.parameters(), grads)
        mse = float(np.mean((net.forward(x) - y) ** 2))
        assert mse < 5e-4
