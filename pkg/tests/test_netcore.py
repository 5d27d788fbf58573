import numpy as np
import pytest

from src import errors, netcore
from src.netcore import Activation


SMOOTH = (Activation.TANH, Activation.SIGMOID)
H = 1e-5


def random_net(rng: np.random.Generator, n_outputs: int = None) -> netcore.DenseNet:
    depth = int(rng.integers(1, 5))
    sizes = [int(s) for s in rng.integers(1, 9, size=depth + 1)]
    if n_outputs is not None:
        sizes[-1] = n_outputs
    net = netcore.init_net(sizes, SMOOTH[int(rng.integers(len(SMOOTH)))], rng)
    for layer in net.layers:
        layer.bias[...] = rng.normal(0.0, 0.5, size=layer.bias.shape)
    return net


def numeric_grad(f, array: np.ndarray, h: float = H) -> np.ndarray:
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        old = array[idx]
        array[idx] = old + h
        plus = f()
        array[idx] = old - h
        minus = f()
        array[idx] = old
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def rel_error(exact: np.ndarray, approx: np.ndarray) -> float:
    scale = max(np.linalg.norm(exact), np.linalg.norm(approx), 1e-7)
    return float(np.linalg.norm(exact - approx) / scale)


def test_activation_derivatives():
    z = np.linspace(-3.0, 3.0, 13)
    for kind in SMOOTH:
        a, d1, d2 = netcore.activate(kind, z)
        np.testing.assert_allclose(d1, (netcore.activate(kind, z + H)[0] - netcore.activate(kind, z - H)[0]) / (2 * H), atol=1e-9)
        np.testing.assert_allclose(d2, (netcore.activate(kind, z + H)[1] - netcore.activate(kind, z - H)[1]) / (2 * H), atol=1e-9)


def test_init_net():
    net = netcore.init_net((3, 5, 2), Activation.TANH, np.random.default_rng(0))
    assert net.sizes == (3, 5, 2)
    assert net.layers[0].weight.shape == (5, 3)
    assert net.layers[-1].activation == Activation.IDENTITY
    limit = np.sqrt(6.0 / 8.0)
    assert np.abs(net.layers[0].weight).max() <= limit
    assert all(np.all(layer.bias == 0) for layer in net.layers)

    again = netcore.init_net((3, 5, 2), Activation.TANH, np.random.default_rng(0))
    np.testing.assert_array_equal(again.layers[0].weight, net.layers[0].weight)

    with pytest.raises(errors.ShapeError):
        netcore.init_net((3,))


def test_forward_shapes():
    net = netcore.init_net((3, 4, 1), Activation.TANH, np.random.default_rng(1))
    out, _ = netcore.forward(net, np.zeros(3))
    assert out.shape == (1,)
    out, _ = netcore.forward(net, np.zeros((7, 3)))
    assert out.shape == (7, 1)
    with pytest.raises(errors.ShapeError):
        netcore.forward(net, np.zeros((7, 2)))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        net = random_net(rng)
        x = rng.normal(size=(3, net.n_inputs))
        upstream = rng.normal(size=(3, net.n_outputs))

        def loss():
            return float(np.sum(upstream * netcore.forward(net, x)[0]))

        grads = netcore.grad_params(net, x, upstream)
        for param, grad in zip(net.parameters(), grads):
            assert rel_error(grad, numeric_grad(loss, param)) < 1e-5

        x_bar = netcore.grad_inputs(net, x, upstream)
        assert rel_error(x_bar, numeric_grad(loss, x)) < 1e-5


def test_tangent_path_gradients():
    rng = np.random.default_rng(7)
    for _ in range(30):
        net = random_net(rng)
        x = rng.normal(size=(4, net.n_inputs))
        t_index = int(rng.integers(net.n_inputs))
        a = rng.normal(size=(4, net.n_outputs))
        b = rng.normal(size=(4, net.n_outputs))

        def loss():
            out, out_dot, _ = netcore.forward_tangent(net, x, t_index)
            return float(np.sum(a * out) + np.sum(b * out_dot))

        _, _, cache = netcore.forward_tangent(net, x, t_index)
        grads, _ = netcore.backward(net, cache, a, b)
        for param, grad in zip(net.parameters(), grads):
            assert rel_error(grad, numeric_grad(loss, param)) < 1e-5


def test_grad_t():
    rng = np.random.default_rng(11)
    for _ in range(20):
        net = random_net(rng, n_outputs=1)
        x = rng.normal(size=(5, net.n_inputs))
        t_index = net.n_inputs - 1
        exact = netcore.grad_t(net, x, t_index)

        shifted = x.copy()
        shifted[:, t_index] += H
        plus = netcore.forward(net, shifted)[0][:, 0]
        shifted[:, t_index] -= 2 * H
        minus = netcore.forward(net, shifted)[0][:, 0]
        assert rel_error(exact, (plus - minus) / (2 * H)) < 1e-5

        _, tangent, _ = netcore.forward_tangent(net, x, t_index)
        np.testing.assert_allclose(tangent[:, 0], exact, rtol=1e-10, atol=1e-12)


def test_grad_t_identity_net():
    net = netcore.DenseNet((netcore.Layer(np.array([[0.0, 0.0, 1.0]]), np.zeros(1), Activation.IDENTITY),))
    np.testing.assert_allclose(netcore.grad_t(net, np.random.default_rng(0).normal(size=(4, 3)), 2), 1.0)


def test_grad_t_errors():
    net = netcore.init_net((3, 4, 2), Activation.TANH, np.random.default_rng(0))
    with pytest.raises(errors.ShapeError):
        netcore.grad_t(net, np.zeros((2, 3)), 2)
    scalar = netcore.init_net((3, 4, 1), Activation.TANH, np.random.default_rng(0))
    with pytest.raises(errors.ShapeError):
        netcore.grad_t(scalar, np.zeros((2, 3)), 3)


def test_poly_features():
    test_cases = [
        [[2.0], [1.0, 2.0, 4.0]],
        [[2.0, 3.0], [1.0, 2.0, 3.0, 6.0, 4.0, 9.0]],
        [[1.0, 2.0, 3.0], [1.0, 1.0, 2.0, 3.0, 2.0, 3.0, 6.0, 1.0, 4.0, 9.0]],
    ]
    for z, expected in test_cases:
        features = netcore.poly_features(np.array(z))
        assert len(features) == netcore.poly_size(len(z))
        np.testing.assert_allclose(features, expected)


def test_poly_derivative():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(4, 3))
    for column in range(3):
        shifted = z.copy()
        shifted[:, column] += H
        plus = netcore.poly_features(shifted)
        shifted[:, column] -= 2 * H
        minus = netcore.poly_features(shifted)
        np.testing.assert_allclose(netcore.poly_derivative(z, column), (plus - minus) / (2 * H), atol=1e-8)


def test_hard_threshold():
    coeffs = np.array([1e-5, -5e-5, 2e-4, 0.0, -1e-3, 1e-4])
    out, zeroed = netcore.hard_threshold(coeffs)
    np.testing.assert_array_equal(out, [0.0, 0.0, 2e-4, 0.0, -1e-3, 1e-4])
    assert zeroed == 2
    np.testing.assert_array_equal(coeffs[2:], [2e-4, 0.0, -1e-3, 1e-4])

    again, zeroed = netcore.hard_threshold(out)
    np.testing.assert_array_equal(again, out)
    assert zeroed == 0

    with pytest.raises(errors.ValidationError):
        netcore.hard_threshold(coeffs, 0.0)
