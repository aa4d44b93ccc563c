"""Forward/backward correctness for the dense-network core."""

import numpy as np
import pytest

from protoforge import netcore
from protoforge.errors import DomainError, ShapeError
from protoforge.netcore import Architecture, Parameters


def affine_net():
    # f(x) = [[2, 0]] x + 1, stored as (fan_in, fan_out)
    arch = Architecture(2, 1, (), "relu", 0.0)
    params = Parameters([np.array([[2.0], [0.0]])], [np.array([1.0])])
    return arch, params


def random_net(seed, activation="tanh", dropout=0.0, max_hidden=3, max_width=16):
    rng = np.random.default_rng(seed)
    hidden = tuple(int(rng.integers(1, max_width + 1)) for _ in range(rng.integers(0, max_hidden + 1)))
    arch = Architecture(int(rng.integers(1, 6)), int(rng.integers(1, 4)), hidden, activation, dropout)
    return arch, netcore.init_params(arch, seed)


def fd_param_gradients(x, y, params, arch, loss, levels=None, h=1e-4):
    """Central finite differences over every parameter coordinate."""
    grads = []
    for l in range(arch.n_layers):
        for tensor in (params.weights[l], params.biases[l]):
            g = np.zeros_like(tensor)
            for idx in np.ndindex(tensor.shape):
                orig = tensor[idx]
                tensor[idx] = orig + h
                lp, _ = netcore.backward_params(x, y, params, arch, loss, levels)
                tensor[idx] = orig - h
                lm, _ = netcore.backward_params(x, y, params, arch, loss, levels)
                tensor[idx] = orig
                g[idx] = (lp - lm) / (2 * h)
            grads.append(g)
    return grads


def fd_input_gradient(x, params, arch, v, h=1e-4):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(netcore.forward(xp, params, arch) @ v)
        fm = float(netcore.forward(xm, params, arch) @ v)
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)


class TestForward:
    def test_affine_identity(self):
        arch, params = affine_net()
        out = netcore.forward(np.array([1.0, 0.0]), params, arch)
        assert out.shape == (1,)
        assert out[0] == pytest.approx(3.0)

    def test_deterministic_equals_stochastic_with_zero_dropout(self):
        arch, params = random_net(7, dropout=0.0)
        x = np.random.default_rng(1).normal(size=arch.input_dim)
        det = netcore.forward(x, params, arch)
        for seed in (0, 1, 99):
            assert np.array_equal(det, netcore.forward(x, params, arch, seed=seed))

    def test_one_hidden_relu_matches_by_hand(self):
        # 2 -> 2 -> 1 relu net, weights set by hand, oracle is written-out arithmetic
        arch = Architecture(2, 1, (2,), "relu", 0.0)
        W1 = np.array([[1.0, -2.0], [0.5, 1.0]])
        b1 = np.array([0.25, -0.5])
        W2 = np.array([[3.0], [-1.0]])
        b2 = np.array([0.75])
        params = Parameters([W1, W2], [b1, b2])
        x = np.array([2.0, -1.0])
        z1 = x[0] * W1[0, 0] + x[1] * W1[1, 0] + b1[0]   # 2 - 0.5 + 0.25 = 1.75
        z2 = x[0] * W1[0, 1] + x[1] * W1[1, 1] + b1[1]   # -4 - 1 - 0.5 = -5.5
        a1, a2 = max(z1, 0.0), max(z2, 0.0)
        expected = a1 * W2[0, 0] + a2 * W2[1, 0] + b2[0]  # 5.25 + 0 + 0.75 = 6.0
        assert netcore.forward(x, params, arch)[0] == pytest.approx(expected, abs=1e-15)

    def test_batch_matches_per_row(self):
        # BLAS batches sum in a different order than single rows; the values
        # agree to rounding noise while identical calls stay bitwise equal.
        arch, params = random_net(3)
        X = np.random.default_rng(5).normal(size=(4, arch.input_dim))
        batch = netcore.forward(X, params, arch)
        rows = np.stack([netcore.forward(X[i], params, arch) for i in range(4)])
        np.testing.assert_allclose(batch, rows, rtol=0, atol=1e-12)

    def test_seed_reproducibility(self):
        arch, params = random_net(11, dropout=0.5)
        x = np.random.default_rng(2).normal(size=arch.input_dim)
        a = netcore.forward(x, params, arch, seed=42, pass_index=3)
        b = netcore.forward(x, params, arch, seed=42, pass_index=3)
        np.testing.assert_array_equal(a, b)
        c = netcore.forward(x, params, arch, seed=43, pass_index=3)
        assert not np.array_equal(a, c) or arch.hidden_layers == ()

    def test_shared_mask_batch_matches_single(self):
        # the schedule-independence behind batched Monte Carlo sampling
        arch = Architecture(3, 2, (8, 8), "relu", 0.3)
        params = netcore.init_params(arch, 0)
        X = np.random.default_rng(9).normal(size=(5, 3))
        batch = netcore.forward(X, params, arch, seed=7, pass_index=2)
        for i in range(5):
            single = netcore.forward(X[i], params, arch, seed=7, pass_index=2)
            np.testing.assert_allclose(batch[i], single, rtol=0, atol=1e-12)

    def test_shape_and_domain_errors(self):
        arch, params = affine_net()
        with pytest.raises(ShapeError):
            netcore.forward(np.zeros(3), params, arch)
        with pytest.raises(DomainError):
            netcore.forward(np.array([np.nan, 0.0]), params, arch)

    def test_dropout_unbiasedness(self):
        # mean over many seeded passes approaches the deterministic value
        arch = Architecture(2, 1, (8,), "relu", 0.5)
        params = netcore.init_params(arch, 21)
        x = np.array([0.7, -0.4])
        det = float(netcore.forward(x, params, arch)[0])
        draws = np.array(
            [float(netcore.forward(x, params, arch, seed=0, pass_index=k)[0]) for k in range(10_000)]
        )
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - det) < 3 * se + 1e-12


class TestBackwardParams:
    def test_zero_residual_zero_gradient(self):
        arch, params = affine_net()
        x = np.array([1.0, 0.0])
        y = netcore.forward(x, params, arch)  # residual 0
        loss, grads = netcore.backward_params(x, y, params, arch, "mse")
        assert loss == 0.0
        for dw, db in grads:
            assert not dw.any() and not db.any()

    def test_pinball_median_is_half_absolute_subgradient(self):
        arch, params = affine_net()
        x = np.array([1.0, 0.0])
        y_hat = netcore.forward(x, params, arch)
        # residual > 0: gradient of |e|/2 wrt prediction is -1/2 -> dW = -x/2
        _, grads = netcore.backward_params(x, y_hat + 1.0, params, arch, "pinball", (0.5,))
        np.testing.assert_allclose(grads[0][0][:, 0], -0.5 * x)
        # residual exactly 0 pins the (tau - 1) branch: d/dy_hat = 1 - tau = +1/2
        _, grads0 = netcore.backward_params(x, y_hat, params, arch, "pinball", (0.5,))
        np.testing.assert_allclose(grads0[0][0][:, 0], 0.5 * x)
        np.testing.assert_allclose(grads0[0][1], [0.5])

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    @pytest.mark.parametrize("loss,levels", [("mse", None), ("pinball", None)])
    def test_matches_finite_differences(self, activation, loss, levels):
        rng = np.random.default_rng(17)
        for seed in range(3):
            arch, params = random_net(seed + 50, activation=activation)
            if loss == "pinball":
                levels = tuple(rng.uniform(0.05, 0.95, size=arch.output_dim))
            x = rng.normal(size=arch.input_dim)
            y = rng.normal(size=arch.output_dim)
            _, grads = netcore.backward_params(x, y, params, arch, loss, levels)
            flat = [t for dw_db in grads for t in dw_db]
            fd = fd_param_gradients(x, y, params, arch, loss, levels)
            for a, b in zip(flat, fd):
                assert rel_err(a, b).max() < 1e-4

    def test_batch_gradient_is_mean_of_per_example(self):
        arch, params = random_net(23, activation="tanh")
        rng = np.random.default_rng(8)
        X = rng.normal(size=(3, arch.input_dim))
        Y = rng.normal(size=(3, arch.output_dim))
        _, batch_grads = netcore.backward_params(X, Y, params, arch, "mse")
        per = [netcore.backward_params(X[i], Y[i], params, arch, "mse")[1] for i in range(3)]
        for l in range(arch.n_layers):
            np.testing.assert_allclose(
                batch_grads[l][0], np.mean([p[l][0] for p in per], axis=0), atol=1e-12
            )


class TestBackwardInput:
    def test_affine_jacobian(self):
        arch, params = affine_net()
        g = netcore.backward_input(np.array([1.0, 0.0]), params, arch, np.array([1.0]))
        np.testing.assert_array_equal(g, [2.0, 0.0])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        for seed in range(4):
            arch, params = random_net(seed + 80, activation="tanh")
            x = rng.normal(size=arch.input_dim)
            v = rng.normal(size=arch.output_dim)
            g = netcore.backward_input(x, params, arch, v)
            fd = fd_input_gradient(x, params, arch, v)
            assert rel_err(g, fd).max() < 1e-4

    def test_relu_inactive_branch_at_zero(self):
        # single hidden unit with pre-activation exactly 0: derivative must be 0
        arch = Architecture(1, 1, (1,), "relu", 0.0)
        params = Parameters(
            [np.array([[1.0]]), np.array([[5.0]])],
            [np.array([0.0]), np.array([0.0])],
        )
        g = netcore.backward_input(np.array([0.0]), params, arch, np.array([1.0]))
        assert g[0] == 0.0


class TestSerialization:
    def test_round_trip_bitwise(self):
        arch, params = random_net(5, dropout=0.25)
        text = netcore.params_to_json(params, arch)
        params2, arch2 = netcore.params_from_json(text)
        assert arch2 == arch
        for w1, w2 in zip(params.weights, params2.weights):
            np.testing.assert_array_equal(w1, w2)
        for b1, b2 in zip(params.biases, params2.biases):
            np.testing.assert_array_equal(b1, b2)

    def test_deterministic_forward_is_pure(self):
        arch, params = random_net(12)
        x = np.random.default_rng(4).normal(size=arch.input_dim)
        np.testing.assert_array_equal(
            netcore.forward(x, params, arch), netcore.forward(x.copy(), params.copy(), arch)
        )
