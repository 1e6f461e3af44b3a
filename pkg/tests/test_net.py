import numpy as np
import pytest

from pinn_rc.gradcheck import fd_param_grad, random_net
from pinn_rc.net import (
    GradientSet,
    Mlp,
    backward,
    forward,
    forward_tangent,
    from_bytes,
    init_mlp,
    to_bytes,
)


def zero_net(sizes, out_bias=0.0):
    net = init_mlp(sizes, 0)
    for p in net.params():
        p[...] = 0.0
    net.biases[-1][...] = out_bias
    return net


class TestInit:
    def test_paper_default_shape(self):
        net = init_mlp([1, 40, 40, 40, 1], seed=7)
        assert [w.shape for w in net.weights] == [(1, 40), (40, 40), (40, 40), (40, 1)]
        assert net.n_params == 40 + 40 + 2 * (1600 + 40) + 40 + 1

    def test_glorot_bounds_and_zero_bias(self):
        net = init_mlp([1, 40, 40, 1], seed=3)
        for w in net.weights:
            bound = np.sqrt(6.0 / sum(w.shape))
            assert np.all(np.abs(w) <= bound)
        assert all(np.all(b == 0) for b in net.biases)

    def test_same_seed_same_bytes(self):
        assert to_bytes(init_mlp([1, 8, 8, 2], 11)) == to_bytes(init_mlp([1, 8, 8, 2], 11))
        assert to_bytes(init_mlp([1, 8, 8, 2], 11)) != to_bytes(init_mlp([1, 8, 8, 2], 12))

    @pytest.mark.parametrize("sizes", [[], [1], [2, 4, 1], [1, 0, 1]])
    def test_invalid_sizes(self, sizes):
        with pytest.raises(ValueError):
            init_mlp(sizes, 0)

    def test_shape_mismatch_rejected(self):
        net = init_mlp([1, 3, 1], 0)
        with pytest.raises(ValueError):
            Mlp((1, 4, 1), net.weights, net.biases)

    def test_non_finite_rejected(self):
        net = init_mlp([1, 3, 1], 0)
        net.weights[0][0, 0] = np.nan
        with pytest.raises(ValueError):
            Mlp(net.layer_sizes, net.weights, net.biases)


class TestForward:
    def test_zero_net(self):
        np.testing.assert_array_equal(forward(zero_net([1, 5, 5, 1]), [-1.0, 0.3, 2.0]), 0.0)

    def test_output_bias_only(self):
        np.testing.assert_array_equal(forward(zero_net([1, 5, 1], 2.5), [-0.7, 0.0, 0.9]), 2.5)

    def test_pure(self):
        net = init_mlp([1, 8, 8, 1], 5)
        a = forward(net, 0.37)
        b = forward(net, 0.37)
        assert a.tobytes() == b.tobytes()

    def test_batch_shape(self):
        assert forward(init_mlp([1, 4, 3], 0), np.linspace(-1, 1, 7)).shape == (7, 3)


class TestTangent:
    def test_matches_forward(self):
        net = init_mlp([1, 8, 8, 2], 1)
        t = np.linspace(-1, 1, 9)
        np.testing.assert_array_equal(forward_tangent(net, t).u, forward(net, t))

    def test_constant_function(self):
        ev = forward_tangent(zero_net([1, 4, 1], 1.5), [0.2])
        assert ev.u[0, 0] == 1.5 and ev.du_dt[0, 0] == 0.0

    def test_tanh_at_zero(self):
        net = Mlp((1, 1, 1), [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        ev = forward_tangent(net, 0.0)
        assert ev.du_dt[0, 0] == 1.0

    def test_finite_difference(self):
        rng = np.random.default_rng(0)
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            net = random_net([1, 8, 8, 1], rng)
            t = rng.uniform(-1, 1)
            exact = forward_tangent(net, t).du_dt[0, 0]
            fd = (forward(net, t + h)[0, 0] - forward(net, t - h)[0, 0]) / (2 * h)
            worst = max(worst, abs(exact - fd) / max(abs(fd), 1e-3))
        assert worst < 1e-6


class TestBackward:
    def test_zero_seed(self):
        net = init_mlp([1, 6, 6, 1], 2)
        g = backward(net, forward_tangent(net, [0.1, 0.5]), 0.0, 0.0)
        assert np.all(g.flat() == 0)

    def test_dimension_mismatch(self):
        net = init_mlp([1, 6, 2], 2)
        ev = forward_tangent(net, [0.1, 0.5])
        with pytest.raises(ValueError):
            backward(net, ev, np.ones((2, 3)), 0.0)

    @pytest.mark.parametrize("sizes", [[1, 8, 1], [1, 8, 8, 1], [1, 5, 7, 3]])
    def test_finite_difference(self, sizes):
        rng = np.random.default_rng(len(sizes))
        net = random_net(sizes, rng)
        t = rng.uniform(-1, 1, 16)
        su, sd = rng.normal(size=(16, sizes[-1])), rng.normal(size=(16, sizes[-1]))

        def f(n):
            ev = forward_tangent(n, t)
            return float(np.sum(su * ev.u + sd * ev.du_dt))

        g = backward(net, forward_tangent(net, t), su, sd).flat()
        fd = fd_param_grad(f, net)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5

    def test_linear_in_seed(self):
        rng = np.random.default_rng(4)
        net = random_net([1, 8, 8, 2], rng)
        ev = forward_tangent(net, rng.uniform(-1, 1, 5))
        a_u, a_d, b_u, b_d = (rng.normal(size=(5, 2)) for _ in range(4))
        g_sum = backward(net, ev, a_u + b_u, a_d + b_d).flat()
        g_parts = (backward(net, ev, a_u, a_d) + backward(net, ev, b_u, b_d)).flat()
        np.testing.assert_allclose(g_sum, g_parts, rtol=0, atol=1e-12)

    def test_gradient_shapes(self):
        net = init_mlp([1, 4, 6, 2], 0)
        g = backward(net, forward_tangent(net, [0.0]), 1.0, 1.0)
        assert isinstance(g, GradientSet)
        assert [p.shape for p in g.params()] == [p.shape for p in net.params()]


class TestCheckpoint:
    def test_round_trip(self):
        net = init_mlp([1, 5, 7, 3], 9)
        back = from_bytes(to_bytes(net))
        assert back.layer_sizes == net.layer_sizes
        for a, b in zip(back.params(), net.params()):
            np.testing.assert_array_equal(a, b)

    def test_header(self):
        data = to_bytes(init_mlp([1, 2, 1], 0))
        assert data[:6] == b"PINNRC" and data[6:8] == b"\x01\x00"
        # header + count + 3 sizes + (2 + 2 + 2 + 1) doubles
        assert len(data) == 8 + 4 + 12 + 8 * 7

    def test_corrupt(self):
        data = to_bytes(init_mlp([1, 2, 1], 0))
        with pytest.raises(ValueError):
            from_bytes(b"XXXXXX" + data[6:])
        with pytest.raises(ValueError):
            from_bytes(data + b"\0")
