import numpy as np
import pytest

from conftest import central_difference_gradient, max_relative_error
from tumordyn import autodiff as ad
from tumordyn.neuralnet import (
    AdamState,
    MLPArch,
    MLPParams,
    Xoshiro256StarStar,
    adam_step,
    adam_update,
    forward,
    grad,
    init_params,
    load_params,
    mlp_apply,
    save_params,
    unpack_layers,
    value_and_grad,
)
from tumordyn.odeint import rk4_step


class TestXoshiro:
    def test_deterministic(self):
        a = Xoshiro256StarStar(123).uniforms(50)
        b = Xoshiro256StarStar(123).uniforms(50)
        assert np.array_equal(a, b)

    def test_seeds_differ(self):
        assert not np.array_equal(Xoshiro256StarStar(1).uniforms(20), Xoshiro256StarStar(2).uniforms(20))

    def test_range_and_spread(self):
        u = Xoshiro256StarStar(7).uniforms(4000)
        assert np.all((u >= 0.0) & (u < 1.0))
        assert abs(u.mean() - 0.5) < 0.02


class TestInit:
    def test_bit_reproducible(self):
        arch = MLPArch((1, 10, 10, 1))
        assert np.array_equal(init_params(arch, 123).theta, init_params(arch, 123).theta)

    def test_param_count(self):
        # (1+1)*10 + (10+1)*10 + (10+1)*1
        assert MLPArch((1, 10, 10, 1)).n_params == 141
        assert init_params(MLPArch((1, 10, 10, 1)), 0).theta.size == 141

    def test_biases_zero(self):
        params = init_params(MLPArch((3, 8, 2)), 42)
        for _, b in unpack_layers(params.arch, params.theta):
            assert np.all(b == 0.0)

    def test_glorot_variance(self):
        params = init_params(MLPArch((128, 128, 64)), 5)
        for W, _ in unpack_layers(params.arch, params.theta):
            fan_out, fan_in = W.shape
            target = 2.0 / (fan_in + fan_out)
            assert np.var(W) == pytest.approx(target, rel=0.20)

    def test_arch_validation(self):
        with pytest.raises(ValueError):
            MLPArch((5,))
        with pytest.raises(ValueError):
            MLPArch((1, 0, 1))
        with pytest.raises(ValueError):
            MLPParams(MLPArch((1, 2, 1)), np.zeros(3))


class TestForward:
    def test_zero_params_zero_output(self):
        params = MLPParams(MLPArch((2, 5, 3)), np.zeros(MLPArch((2, 5, 3)).n_params))
        assert np.array_equal(forward(params, [1.3, -2.0]), np.zeros(3))

    def test_single_layer_is_affine(self):
        params = MLPParams(MLPArch((1, 1)), np.array([2.0, 3.0]))  # weight 2, bias 3
        assert forward(params, [4.0]) == pytest.approx([11.0])

    def test_hidden_activations_bound_output(self):
        # with tanh hiddens in (-1, 1), |output| < sum|W_last| + |b_last|
        params = init_params(MLPArch((1, 50, 1)), 9)
        W_last, b_last = unpack_layers(params.arch, params.theta)[-1]
        bound = np.sum(np.abs(W_last)) + np.abs(b_last[0])
        for x in (-1e6, -3.0, 0.0, 3.0, 1e6):
            assert abs(forward(params, [x])[0]) < bound

    def test_width_mismatch(self):
        params = init_params(MLPArch((2, 4, 1)), 0)
        with pytest.raises(ValueError):
            forward(params, [1.0])


class TestGrad:
    def test_sum_of_squares(self):
        params = init_params(MLPArch((1, 4, 1)), 3)
        g = grad(lambda th: ad.total(th * th), params)
        assert np.allclose(g, 2.0 * params.theta, rtol=1e-14)

    def test_constant_loss_zero_gradient(self):
        params = init_params(MLPArch((1, 3, 1)), 0)
        assert np.array_equal(grad(lambda th: ad.const([3.0]), params), np.zeros(params.theta.size))

    def test_matches_finite_differences_on_forward_square(self):
        arch = MLPArch((1, 6, 6, 1))
        params = init_params(arch, 11)
        x = np.array([0.7])

        def loss_fn(th):
            out = mlp_apply(unpack_layers(arch, th), x if not isinstance(th, ad.Var) else ad.const(x))
            return out * out

        g_ad = grad(loss_fn, params)
        g_fd = central_difference_gradient(loss_fn, params.theta)
        assert max_relative_error(g_ad, g_fd) < 1e-6

    def test_matches_finite_differences_through_unrolled_solve(self):
        # reverse-mode through a 10-step RK4 solve, 20 seeds
        arch = MLPArch((1, 10, 10, 1))
        targets = np.linspace(0.1, 0.9, 5)

        def make_loss(th):
            layers = unpack_layers(arch, th)
            tape = isinstance(th, ad.Var)

            def f(t, v):
                if tape:
                    return mlp_apply(layers, v)
                return float(mlp_apply(layers, np.array([v]))[0])

            v = ad.const(np.array([0.1])) if tape else 0.1
            h = 0.1
            states = [v]
            for i in range(10):
                v = rk4_step(f, i * h, v, h)
                states.append(v)
            sq = [(states[2 * i] - t) * (states[2 * i] - t) for i, t in enumerate(targets)]
            return ad.add_n(sq) * (1.0 / len(sq))

        worst = 0.0
        for seed in range(20):
            theta = init_params(arch, seed).theta
            _, g_ad = value_and_grad(make_loss, theta)
            g_fd = central_difference_gradient(make_loss, theta)
            worst = max(worst, max_relative_error(g_ad, g_fd))
        assert worst < 1e-5


class TestAdam:
    def test_zero_gradient_from_rest_keeps_params(self):
        params = init_params(MLPArch((1, 3, 1)), 2)
        state = AdamState.fresh(params.theta.size, learning_rate=0.01)
        new_params, new_state = adam_step(params, np.zeros_like(params.theta), state)
        assert np.array_equal(new_params.theta, params.theta)
        assert new_state.step_count == 1

    def test_zero_gradient_decays_moments(self):
        params = init_params(MLPArch((1, 3, 1)), 2)
        state = AdamState.fresh(params.theta.size, learning_rate=0.01)
        g = np.ones_like(params.theta)
        _, state1 = adam_step(params, g, state)
        _, state2 = adam_step(params, np.zeros_like(g), state1)
        assert np.allclose(state2.m, state1.beta1 * state1.m)
        assert np.allclose(state2.v, state1.beta2 * state1.v)
        assert state2.step_count == 2

    def test_first_step_closed_form(self):
        theta = np.array([1.0, -2.0, 0.5])
        g = np.array([0.3, -4.0, 0.0])
        state = AdamState.fresh(3, learning_rate=0.01)
        new_theta, new_state = adam_update(theta, g, state)
        # after bias correction: m_hat = g, v_hat = g^2
        expected = theta - 0.01 * g / (np.abs(g) + state.eps)
        assert np.allclose(new_theta, expected, rtol=0, atol=1e-15)
        assert new_state.step_count == 1

    def test_deterministic(self):
        theta = np.linspace(-1, 1, 7)
        g = np.linspace(0.5, -0.5, 7)
        s = AdamState.fresh(7, 0.005)
        out1 = adam_update(theta, g, s)
        out2 = adam_update(theta, g, s)
        assert np.array_equal(out1[0], out2[0])
        assert np.array_equal(out1[1].m, out2[1].m)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_update(np.zeros(3), np.zeros(4), AdamState.fresh(3, 0.01))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = init_params(MLPArch((1, 10, 10, 1)), 123)
        path = tmp_path / "net.ckpt.json"
        save_params(params, path, seed=123)
        loaded = load_params(path)
        assert loaded.arch == params.arch
        assert np.array_equal(loaded.theta, params.theta)

    def test_rejects_unknown_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_params(path)
