import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from bpinn_ageing.network import (
    Derivatives,
    NetworkShape,
    ShapeError,
    TanhMLP,
    load_params,
    save_params,
)


def fd_derivatives(net, theta, x, t, h=1e-4):
    f = lambda a, b: net.forward(theta, a, b)  # noqa: E731
    u = f(x, t)
    u_x = (f(x + h, t) - f(x - h, t)) / (2 * h)
    u_t = (f(x, t + h) - f(x, t - h)) / (2 * h)
    u_xx = (f(x + h, t) - 2 * u + f(x - h, t)) / h ** 2
    return u, u_t, u_x, u_xx


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("hidden", [(), (0, 3)])
def test_shape_validation(hidden):
    with pytest.raises(ShapeError):
        NetworkShape(hidden)


def test_param_count():
    assert NetworkShape((50, 50)).n_params == 2 * 50 + 50 + 50 * 50 + 50 + 50 + 1


def test_zero_params_give_zero_output():
    net = TanhMLP([7, 5])
    x = np.linspace(0, 1, 9)
    assert np.all(net.forward(np.zeros(net.n_params), x, x) == 0.0)


def test_single_unit_by_hand():
    net = TanhMLP([1])
    # W1 = [[0.7], [-0.3]], b1 = [0.2], W2 = [[1.5]], b2 = [-0.1]
    theta = np.array([0.7, -0.3, 0.2, 1.5, -0.1])
    x, t = 0.4, 0.9
    z = 0.7 * x - 0.3 * t + 0.2
    expected = 1.5 * np.tanh(z) - 0.1
    assert_allclose(net.forward(theta, x, t), expected, rtol=1e-15)
    d = net.input_derivatives(theta, x, t)
    s = 1 - np.tanh(z) ** 2
    assert_allclose(d.u_x, 1.5 * s * 0.7, rtol=1e-14)
    assert_allclose(d.u_t, 1.5 * s * -0.3, rtol=1e-14)
    assert_allclose(d.u_xx, 1.5 * -2 * np.tanh(z) * s * 0.49, rtol=1e-14)


def test_small_signal_second_derivative():
    # u = c tanh(eps x) ~ c (eps x - (eps x)^3 / 3) so u_xx ~ -2 c eps^3 x
    net = TanhMLP([1])
    eps, c, x = 1e-3, 2.0, 0.5
    theta = np.array([eps, 0.0, 0.0, c, 0.0])
    d = net.input_derivatives(theta, x, 0.3)
    assert_allclose(d.u_xx, -2 * c * eps ** 3 * x, rtol=1e-5)


def test_forward_is_deterministic():
    net = TanhMLP([8, 8])
    theta = net.init_params(1)
    x = np.random.default_rng(0).uniform(size=50)
    a = net.forward(theta, x, x[::-1])
    b = net.forward(theta, x, x[::-1])
    assert a.tobytes() == b.tobytes()


def test_x_independent_network_has_zero_x_derivatives():
    net = TanhMLP([6, 4])
    theta = net.init_params(2)
    W1, b1 = net.unflatten(theta)[0]
    W1[0] = 0.0
    layers = net.unflatten(theta)
    layers[0] = (W1, b1)
    theta = net.flatten(layers)
    d = net.input_derivatives(theta, np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    assert np.all(d.u_x == 0.0) and np.all(d.u_xx == 0.0)


def test_shape_mismatch():
    net = TanhMLP([3])
    with pytest.raises(ShapeError):
        net.forward(np.zeros(net.n_params + 1), 0.1, 0.2)
    with pytest.raises(ShapeError):
        net.flatten([(np.zeros((2, 3)), np.zeros(3))])


@given(st.lists(st.integers(1, 12), min_size=1, max_size=3), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_flatten_unflatten_round_trip(hidden, seed):
    net = TanhMLP(hidden)
    theta = np.random.default_rng(seed).standard_normal(net.n_params)
    back = net.flatten(net.unflatten(theta))
    assert back.tobytes() == theta.tobytes()
    for (W, b), (fi, fo) in zip(net.unflatten(theta), net.shape.layer_shapes):
        assert W.shape == (fi, fo) and b.shape == (fo,)


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_input_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = TanhMLP(list(rng.integers(3, 30, size=rng.integers(1, 3))))
    theta = net.init_params(rng)
    x, t = rng.uniform(0.05, 0.95, 20), rng.uniform(0.05, 0.95, 20)
    d = net.input_derivatives(theta, x, t)
    u, u_t, u_x, u_xx = fd_derivatives(net, theta, x, t)
    assert_allclose(d.u, u, rtol=0, atol=0)
    assert rel(d.u_t, u_t) <= 1e-5
    assert rel(d.u_x, u_x) <= 1e-5
    assert rel(d.u_xx, u_xx) <= 1e-5


def test_second_derivative_consistent_with_first():
    net = TanhMLP([20, 20])
    theta = net.init_params(5)
    x, t = np.linspace(0.1, 0.9, 15), np.linspace(0.2, 0.7, 15)
    h = 1e-5
    fd = (net.input_derivatives(theta, x + h, t).u_x - net.input_derivatives(theta, x - h, t).u_x) / (2 * h)
    assert rel(net.input_derivatives(theta, x, t).u_xx, fd) <= 1e-6


def mse_all_terms(target):
    def loss(d: Derivatives):
        r = d.u - target
        v = np.sum(r ** 2) + 0.3 * np.sum(d.u_t ** 2) + 0.2 * np.sum(d.u_x ** 2) + 0.1 * np.sum(d.u_xx ** 2)
        return v, Derivatives(2 * r, 0.6 * d.u_t, 0.4 * d.u_x, 0.2 * d.u_xx)
    return loss


@pytest.mark.parametrize("hidden", [(4,), (10, 10), (6, 5, 4)])
def test_loss_gradient_matches_finite_differences(hidden):
    rng = np.random.default_rng(len(hidden))
    net = TanhMLP(hidden)
    theta = net.init_params(rng) + 0.1 * rng.standard_normal(net.n_params)
    x, t = rng.uniform(size=5), rng.uniform(size=5)
    loss = mse_all_terms(rng.standard_normal(5))
    _, g = net.loss_gradient(theta, x, t, loss)
    h = 1e-6
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (loss(net.input_derivatives(theta + e, x, t))[0] - loss(net.input_derivatives(theta - e, x, t))[0]) / (2 * h)
    big = np.abs(fd) > 1e-8
    assert np.all(np.abs(g[big] - fd[big]) <= 1e-4 * np.abs(fd[big]))


def test_square_output_loss_is_stationary_at_zero():
    net = TanhMLP([5, 5])

    def loss(d):
        return float(np.sum(d.u ** 2)), Derivatives(2 * d.u, None, None, None)

    _, g = net.loss_gradient(np.zeros(net.n_params), 0.3, 0.6, loss)
    assert np.all(g == 0.0)


def test_output_bias_gradient_nonzero():
    net = TanhMLP([5])
    theta = net.init_params(0)

    def loss(d):
        return float(np.sum((d.u - 1.0) ** 2)), Derivatives(2 * (d.u - 1.0), None, None, None)

    _, g = net.loss_gradient(theta, 0.3, 0.6, loss)
    assert g[-1] != 0.0


def test_non_finite_loss_raises():
    net = TanhMLP([3])

    def loss(d):
        return float("nan"), Derivatives(d.u, None, None, None)

    with pytest.raises(FloatingPointError):
        net.loss_gradient(net.init_params(0), 0.1, 0.1, loss)


def test_value_only_vjp_matches_full():
    net = TanhMLP([7, 3])
    theta = net.init_params(4)
    x, t = np.linspace(0, 1, 6), np.linspace(1, 0, 6)
    g_u = np.arange(6.0)
    _, c1 = net.evaluate(theta, x, t, with_derivs=False)
    _, c2 = net.evaluate(theta, x, t, with_derivs=True)
    assert_allclose(net.vjp(theta, c1, g_u), net.vjp(theta, c2, g_u), rtol=1e-13, atol=1e-15)


def test_glorot_init_bounds_and_seed():
    net = TanhMLP([50, 50])
    a, b = net.init_params(3), net.init_params(3)
    assert a.tobytes() == b.tobytes()
    W2, b2 = net.unflatten(a)[1]
    assert np.all(np.abs(W2) <= np.sqrt(6 / 100)) and np.all(b2 == 0)


def test_param_file_round_trip(tmp_path):
    net = TanhMLP([9, 4])
    theta = net.init_params(11) * np.pi
    path = tmp_path / "p.txt"
    save_params(path, net.shape, theta, seed=11)
    shape, back, header = load_params(path)
    assert shape == net.shape and header["seed"] == 11
    assert back.tobytes() == theta.tobytes()


def test_param_file_count_mismatch(tmp_path):
    net = TanhMLP([3])
    path = tmp_path / "p.txt"
    save_params(path, NetworkShape((4,)), net.init_params(0))
    with pytest.raises(ShapeError):
        load_params(path)
