"""Joint concentration/emission models built from dense networks.

Every model has a concentration network ``u(x)`` over ``x = [x_dil, x_atm, t]``
and an emission head producing ``q``:

    forward  q = du/dt + phi([u, x_atm])
    reverse  q = phi([u, x_atm])              (phi is the inverse influence map)
    poly     q = du/dt + c . P([u, x_atm])    (degree-2 dictionary P)
    rnn_mod  q = phi(u)
    nn       [u, q] = net(x)                  (unconstrained baseline)
"""

import logging

from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from . import errors, netcore
from .netcore import Activation, DenseNet


logger = logging.getLogger(__name__)


class ModelKind(Enum):
    FORWARD = 'forward'
    REVERSE = 'reverse'
    POLY = 'poly'
    RNN_MOD = 'rnn_mod'
    NN = 'nn'

    @property
    def uses_grad_t(self) -> bool:
        return self in (ModelKind.FORWARD, ModelKind.POLY)

    @property
    def constrained(self) -> bool:
        return self != ModelKind.NN


class Architecture(NamedTuple):
    u_hidden: Tuple[int, ...] = (500, 500, 500)
    reverse_u_hidden: Tuple[int, ...] = (500, 500)
    phi_hidden: Tuple[int, ...] = (200, 200)
    nn_hidden: Tuple[int, ...] = (500, 500, 500, 500)
    activation: Activation = Activation.TANH


class ModelParams(NamedTuple):
    """Trainable state of one model.

    ``u_net`` holds the concentration parameters; ``phi_net`` or
    ``coeffs`` hold the emission-head parameters. The NN baseline keeps its
    single two-output network in ``u_net``.
    """

    kind: ModelKind
    u_net: DenseNet
    phi_net: Optional[DenseNet]
    coeffs: Optional[np.ndarray]
    t_index: int

    def parameters(self) -> List[np.ndarray]:
        return self.u_parameters() + self.constraint_parameters()

    def u_parameters(self) -> List[np.ndarray]:
        return self.u_net.parameters()

    def constraint_parameters(self) -> List[np.ndarray]:
        if self.coeffs is not None:
            return [self.coeffs]
        return self.phi_net.parameters() if self.phi_net is not None else []

    def copy(self) -> 'ModelParams':
        return self._replace(
            u_net=self.u_net.copy(),
            phi_net=self.phi_net.copy() if self.phi_net is not None else None,
            coeffs=self.coeffs.copy() if self.coeffs is not None else None,
        )


class JointOutput(NamedTuple):
    u_hat: np.ndarray
    q_hat: np.ndarray
    grad_t_u: Optional[np.ndarray] = None


def init_model(
    kind: ModelKind,
    n_inputs: int,
    n_atm: int,
    t_index: int,
    arch: Architecture = Architecture(),
    seed: int = 0,
) -> ModelParams:
    rng = np.random.default_rng(seed)
    act = arch.activation

    if kind == ModelKind.NN:
        net = netcore.init_net((n_inputs, *arch.nn_hidden, 2), act, rng)
        return ModelParams(kind, net, None, None, t_index)

    u_hidden = arch.reverse_u_hidden if kind == ModelKind.REVERSE else arch.u_hidden
    u_net = netcore.init_net((n_inputs, *u_hidden, 1), act, rng)
    if kind == ModelKind.POLY:
        coeffs = np.zeros(netcore.poly_size(1 + n_atm))
        return ModelParams(kind, u_net, None, coeffs, t_index)

    phi_inputs = 1 if kind == ModelKind.RNN_MOD else 1 + n_atm
    phi_net = netcore.init_net((phi_inputs, *arch.phi_hidden, 1), act, rng)
    return ModelParams(kind, u_net, phi_net, None, t_index)


def _head_input(u_hat: np.ndarray, x_atm: Optional[np.ndarray]) -> np.ndarray:
    u_col = np.asarray(u_hat, dtype=float).reshape(-1, 1)
    if x_atm is None:
        return u_col
    x_atm = np.asarray(x_atm, dtype=float).reshape(len(u_col), -1)
    return np.hstack([u_col, x_atm])


def _check_head(params: ModelParams, z: np.ndarray) -> None:
    if params.coeffs is not None:
        expected = netcore.poly_size(z.shape[1])
        if len(params.coeffs) != expected:
            raise errors.ShapeError(
                f'Dictionary has {len(params.coeffs)} coefficients, {expected} expected for {z.shape[1]} variables.'
            )
    elif params.phi_net is not None and params.phi_net.n_inputs != z.shape[1]:
        raise errors.ShapeError(
            f'Emission network takes {params.phi_net.n_inputs} inputs, got {z.shape[1]}.'
        )


def _head(params: ModelParams, z: np.ndarray) -> np.ndarray:
    _check_head(params, z)
    if params.coeffs is not None:
        return netcore.poly_features(z) @ params.coeffs
    return netcore.forward(params.phi_net, z)[0][:, 0]


def _u_with_grad_t(params: ModelParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    u, u_dot, _ = netcore.forward_tangent(params.u_net, x, params.t_index)
    return u[:, 0], u_dot[:, 0]


def _require(params: ModelParams, kind: ModelKind) -> None:
    if params.kind != kind:
        raise errors.ShapeError(f'Parameters are for a "{params.kind.value}" model, not "{kind.value}".')


def eval_forward(params: ModelParams, x: np.ndarray, x_atm: np.ndarray) -> JointOutput:
    _require(params, ModelKind.FORWARD)
    u_hat, du_dt = _u_with_grad_t(params, x)
    return JointOutput(u_hat, du_dt + _head(params, _head_input(u_hat, x_atm)), du_dt)


def eval_reverse(params: ModelParams, x: np.ndarray, x_atm: np.ndarray) -> JointOutput:
    _require(params, ModelKind.REVERSE)
    u_hat = netcore.forward(params.u_net, x)[0][:, 0]
    return JointOutput(u_hat, _head(params, _head_input(u_hat, x_atm)))


def eval_poly(params: ModelParams, x: np.ndarray, x_atm: np.ndarray) -> JointOutput:
    _require(params, ModelKind.POLY)
    u_hat, du_dt = _u_with_grad_t(params, x)
    return JointOutput(u_hat, du_dt + _head(params, _head_input(u_hat, x_atm)), du_dt)


def eval_rnn_mod(params: ModelParams, x: np.ndarray, x_atm: Optional[np.ndarray] = None) -> JointOutput:
    _require(params, ModelKind.RNN_MOD)
    u_hat = netcore.forward(params.u_net, x)[0][:, 0]
    return JointOutput(u_hat, _head(params, _head_input(u_hat, None)))


def eval_nn_baseline(params: ModelParams, x: np.ndarray, x_atm: Optional[np.ndarray] = None) -> JointOutput:
    _require(params, ModelKind.NN)
    if params.u_net.n_outputs != 2:
        raise errors.ShapeError(f'Baseline network must have 2 outputs, has {params.u_net.n_outputs}.')
    out = netcore.forward(params.u_net, x)[0]
    return JointOutput(out[:, 0], out[:, 1])


EVALUATORS = {
    ModelKind.FORWARD: eval_forward,
    ModelKind.REVERSE: eval_reverse,
    ModelKind.POLY: eval_poly,
    ModelKind.RNN_MOD: eval_rnn_mod,
    ModelKind.NN: eval_nn_baseline,
}


def evaluate(params: ModelParams, x: np.ndarray, x_atm: np.ndarray) -> JointOutput:
    return EVALUATORS[params.kind](params, x, x_atm)


class LossTerms(NamedTuple):
    data_loss: float
    constraint_residual: float
    total_loss: float


def penalty_loss(u_pred: np.ndarray, u_obs: np.ndarray, residual: np.ndarray, lam: float) -> float:
    """``mean((u_pred - u_obs)^2) + lam * mean(residual^2)``."""

    u_pred, u_obs, residual = (np.asarray(v, dtype=float).ravel() for v in (u_pred, u_obs, residual))
    if not (len(u_pred) == len(u_obs) == len(residual)):
        raise errors.ShapeError(
            f'Length mismatch: {len(u_pred)} predictions, {len(u_obs)} observations, {len(residual)} residuals.'
        )
    if not lam > 0:
        raise errors.ValidationError(f'Penalty weight must be positive, got {lam}.')
    n = len(u_obs)
    return float(np.sum((u_pred - u_obs) ** 2) / n + lam * np.sum(residual ** 2) / n)


def loss_and_grads(
    params: ModelParams,
    x: np.ndarray,
    x_atm: np.ndarray,
    u_obs: np.ndarray,
    q_obs: np.ndarray,
    lam: float,
) -> Tuple[LossTerms, List[np.ndarray]]:
    """Penalized loss and its exact gradient, ordered as ``params.parameters()``.

    The constraint residual is ``q_hat - q_obs``. For the NN baseline the
    penalty weight is ignored and both outputs are fitted by mean squares.
    """

    n = len(u_obs)
    if params.kind == ModelKind.NN:
        out, cache = netcore.forward(params.u_net, x)
        du = out[:, 0] - u_obs
        dq = out[:, 1] - q_obs
        data, cons = float(np.mean(du ** 2)), float(np.mean(dq ** 2))
        upstream = np.stack([2.0 * du / n, 2.0 * dq / n], axis=1)
        grads, _ = netcore.backward(params.u_net, cache, upstream)
        return LossTerms(data, cons, data + cons), grads

    if params.kind.uses_grad_t:
        u_out, u_dot, u_cache = netcore.forward_tangent(params.u_net, x, params.t_index)
        u_hat, du_dt = u_out[:, 0], u_dot[:, 0]
    else:
        u_out, u_cache = netcore.forward(params.u_net, x)
        u_hat, du_dt = u_out[:, 0], np.zeros(n)

    z = _head_input(u_hat, None if params.kind == ModelKind.RNN_MOD else x_atm)
    _check_head(params, z)
    if params.coeffs is not None:
        features = netcore.poly_features(z)
        head = features @ params.coeffs
    else:
        head_out, head_cache = netcore.forward(params.phi_net, z)
        head = head_out[:, 0]

    residual = du_dt + head - q_obs
    data = float(np.mean((u_hat - u_obs) ** 2))
    cons = float(np.mean(residual ** 2))
    total = data + lam * cons

    r_bar = 2.0 * lam * residual / n
    if params.coeffs is not None:
        head_grads = [features.T @ r_bar]
        u_from_head = r_bar * (netcore.poly_derivative(z, 0) @ params.coeffs)
    else:
        head_grads, z_bar = netcore.backward(params.phi_net, head_cache, r_bar[:, None])
        u_from_head = z_bar[:, 0]

    u_bar = (2.0 * (u_hat - u_obs) / n + u_from_head)[:, None]
    t_bar = r_bar[:, None] if params.kind.uses_grad_t else None
    u_grads, _ = netcore.backward(params.u_net, u_cache, u_bar, t_bar)
    return LossTerms(data, cons, total), u_grads + head_grads


def substitute_measured(params: ModelParams, measured_u: np.ndarray, x_atm: np.ndarray) -> np.ndarray:
    """Scaled emissions with measured concentrations in place of ``u_hat``.

    Only the emission head is evaluated; any time-derivative term of the
    concentration network is not part of the substitution.
    """

    if params.kind == ModelKind.NN:
        raise errors.ValidationError('The unconstrained baseline has no emission head to substitute into.')
    x_atm = None if params.kind == ModelKind.RNN_MOD else x_atm
    return _head(params, _head_input(measured_u, x_atm))


def estimate_emissions_measured(
    params: ModelParams,
    measured_u: np.ndarray,
    x_atm: np.ndarray,
    scaler,
    q_column: str = 'q_tonnes_per_day',
) -> np.ndarray:
    """Daily emissions in tonnes/day from measured (scaled) concentrations.

    Raises:
        ArtifactError: If no scaler is available to undo the target scaling.
    """

    if scaler is None:
        raise errors.ArtifactError('a scaler is required to convert emissions to tonnes/day')
    return scaler.unscale(q_column, substitute_measured(params, measured_u, x_atm))
