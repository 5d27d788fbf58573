"""Dense networks with exact gradients.

Weights are stored as ``(out, in)`` matrices and inputs as ``(N, in)``
batches, so a layer computes ``z = x @ W.T + b``. Besides the usual
reverse pass, a network can carry a forward tangent with respect to one
input coordinate; this gives the time derivative of the output and, after
a combined reverse pass, the parameter gradient of any loss that depends
on that derivative.
"""

import itertools

from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import errors


THRESHOLD = 1e-4


class Activation(Enum):
    TANH = 'tanh'
    SIGMOID = 'sigmoid'
    RELU = 'relu'
    IDENTITY = 'identity'


def activate(kind: Activation, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns the activation value and its first and second derivatives."""

    if kind == Activation.TANH:
        a = np.tanh(z)
        d1 = 1.0 - a * a
        return a, d1, -2.0 * a * d1
    if kind == Activation.SIGMOID:
        a = 0.5 * (1.0 + np.tanh(0.5 * z))
        d1 = a * (1.0 - a)
        return a, d1, d1 * (1.0 - 2.0 * a)
    if kind == Activation.RELU:
        return np.maximum(z, 0.0), (z > 0).astype(float), np.zeros_like(z)
    return z, np.ones_like(z), np.zeros_like(z)


class Layer(NamedTuple):
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation


class DenseNet(NamedTuple):
    layers: Tuple[Layer, ...]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.n_inputs,) + tuple(layer.weight.shape[0] for layer in self.layers)

    def parameters(self) -> List[np.ndarray]:
        """Weight and bias arrays in layer order; updates act on them in place."""

        return [p for layer in self.layers for p in (layer.weight, layer.bias)]

    def copy(self) -> 'DenseNet':
        return DenseNet(tuple(Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers))


class ForwardCache(NamedTuple):
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    tangents: Optional[List[np.ndarray]] = None
    pre_tangents: Optional[List[np.ndarray]] = None


def init_net(
    sizes: Sequence[int],
    activation: Activation = Activation.TANH,
    rng: Optional[np.random.Generator] = None,
) -> DenseNet:
    """Glorot-uniform weights, zero biases, identity on the output layer."""

    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise errors.ShapeError(f'Invalid layer sizes {tuple(sizes)}.')
    rng = rng or np.random.default_rng(0)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        kind = Activation.IDENTITY if i == len(sizes) - 2 else activation
        layers.append(Layer(weight, np.zeros(fan_out), kind))
    return DenseNet(tuple(layers))


def _as_batch(net: DenseNet, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.n_inputs:
        raise errors.ShapeError(f'Input of shape {x.shape} does not match {net.n_inputs} network inputs.')
    return batch, single


def forward(net: DenseNet, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    batch, single = _as_batch(net, x)
    cache = ForwardCache([], [])
    a = batch
    for layer in net.layers:
        cache.inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        cache.pre.append(z)
        a = activate(layer.activation, z)[0]
    return (a[0] if single else a), cache


def forward_tangent(net: DenseNet, x: np.ndarray, t_index: int) -> Tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Forward pass that also propagates d/dx[t_index].

    Returns:
        Output ``(N, out)``, its derivative with respect to the chosen input
        coordinate ``(N, out)``, and a cache for :func:`backward`.
    """

    batch, _ = _as_batch(net, x)
    if not 0 <= t_index < net.n_inputs:
        raise errors.ShapeError(f'Input index {t_index} is out of range for {net.n_inputs} inputs.')

    cache = ForwardCache([], [], [], [])
    a = batch
    a_dot = np.zeros_like(batch)
    a_dot[:, t_index] = 1.0
    for layer in net.layers:
        cache.inputs.append(a)
        cache.tangents.append(a_dot)
        z = a @ layer.weight.T + layer.bias
        z_dot = a_dot @ layer.weight.T
        cache.pre.append(z)
        cache.pre_tangents.append(z_dot)
        a, d1, _ = activate(layer.activation, z)
        a_dot = d1 * z_dot
    return a, a_dot, cache


def backward(
    net: DenseNet,
    cache: ForwardCache,
    upstream: np.ndarray,
    upstream_tangent: Optional[np.ndarray] = None,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Reverse pass accumulated over the batch.

    Args:
        net: The evaluated network.
        cache: Cache from :func:`forward` or :func:`forward_tangent`.
        upstream: Adjoint of the output, same shape as the output.
        upstream_tangent: Adjoint of the output tangent; requires a cache
            from :func:`forward_tangent`.

    Returns:
        Gradients in the order of :meth:`DenseNet.parameters` and the
        adjoint of the input batch (primal path only).
    """

    a_bar = np.asarray(upstream, dtype=float).reshape(cache.pre[-1].shape)
    with_tangent = upstream_tangent is not None
    if with_tangent:
        if cache.tangents is None:
            raise errors.ShapeError('A tangent adjoint needs a cache from forward_tangent.')
        t_bar = np.asarray(upstream_tangent, dtype=float).reshape(cache.pre[-1].shape)

    grads: List[np.ndarray] = []
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        _, d1, d2 = activate(layer.activation, cache.pre[i])

        z_bar = a_bar * d1
        if with_tangent:
            z_dot = cache.pre_tangents[i]
            z_bar = z_bar + t_bar * d2 * z_dot
            z_dot_bar = t_bar * d1

        w_bar = z_bar.T @ cache.inputs[i]
        if with_tangent:
            w_bar = w_bar + z_dot_bar.T @ cache.tangents[i]
        grads.extend([z_bar.sum(axis=0), w_bar])

        a_bar = z_bar @ layer.weight
        if with_tangent:
            t_bar = z_dot_bar @ layer.weight

    grads.reverse()
    return grads, a_bar


def grad_params(net: DenseNet, x: np.ndarray, upstream: np.ndarray) -> List[np.ndarray]:
    """Gradient of ``sum(upstream * net(x))`` with respect to every parameter."""

    _, cache = forward(net, x)
    grads, _ = backward(net, cache, upstream)
    return grads


def grad_inputs(net: DenseNet, x: np.ndarray, upstream: Optional[np.ndarray] = None) -> np.ndarray:
    out, cache = forward(net, x)
    upstream = np.ones_like(out) if upstream is None else upstream
    _, x_bar = backward(net, cache, upstream)
    return x_bar[0] if np.ndim(x) == 1 else x_bar


def grad_t(net: DenseNet, x: np.ndarray, t_index: int) -> np.ndarray:
    """Exact derivative of a scalar-output network with respect to input ``t_index``."""

    if net.n_outputs != 1:
        raise errors.ShapeError(f'Time derivative needs a scalar output, network has {net.n_outputs}.')
    if not 0 <= t_index < net.n_inputs:
        raise errors.ShapeError(f'Input index {t_index} is out of range for {net.n_inputs} inputs.')
    x_bar = grad_inputs(net, x)
    return x_bar[..., t_index]


def poly_size(n: int) -> int:
    return (n + 1) * (n + 2) // 2


def _poly_batch(z: np.ndarray) -> Tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    batch = z[None, :] if single else z
    if batch.ndim != 2 or batch.shape[1] < 1:
        raise errors.ShapeError(f'Dictionary input of shape {z.shape} needs at least one variable.')
    return batch, single


def poly_features(z: np.ndarray) -> np.ndarray:
    """Degree-2 dictionary ``[1 | z | z_a z_b (a < b) | z_i^2]``."""

    batch, single = _poly_batch(z)
    n = batch.shape[1]
    pairs = list(itertools.combinations(range(n), 2))
    columns = [np.ones((len(batch), 1)), batch]
    if pairs:
        a, b = zip(*pairs)
        columns.append(batch[:, list(a)] * batch[:, list(b)])
    columns.append(batch * batch)
    features = np.hstack(columns)
    return features[0] if single else features


def poly_derivative(z: np.ndarray, column: int) -> np.ndarray:
    """Derivative of every dictionary term with respect to ``z[:, column]``."""

    batch, single = _poly_batch(z)
    rows, n = batch.shape
    out = np.zeros((rows, poly_size(n)))
    out[:, 1 + column] = 1.0
    for k, (a, b) in enumerate(itertools.combinations(range(n), 2)):
        if a == column:
            out[:, 1 + n + k] = batch[:, b]
        elif b == column:
            out[:, 1 + n + k] = batch[:, a]
    out[:, 1 + n + n * (n - 1) // 2 + column] = 2.0 * batch[:, column]
    return out[0] if single else out


def hard_threshold(coeffs: np.ndarray, tol: float = THRESHOLD) -> Tuple[np.ndarray, int]:
    """Zeroes every coefficient with ``|c| < tol``; survivors are untouched."""

    if not tol > 0:
        raise errors.ValidationError(f'Threshold must be positive, got {tol}.')
    coeffs = np.asarray(coeffs, dtype=float)
    small = (np.abs(coeffs) < tol) & (coeffs != 0)
    return np.where(small, 0.0, coeffs), int(small.sum())
