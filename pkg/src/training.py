import json
import logging
import os

from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import analysis, errors, netcore
from .executor import Executor
from .formulations import (
    Architecture,
    ModelKind,
    ModelParams,
    estimate_emissions_measured,
    evaluate,
    init_model,
    loss_and_grads,
)
from .ingest import Dataset


logger = logging.getLogger(__name__)

REPORT_COLUMNS = ('epoch', 'data_loss', 'constraint_residual', 'total_loss')
FALLBACK_LEARNING_RATE = 1e-3


class TrainConfig(NamedTuple):
    lam: float = 1.0
    learning_rates: Tuple[float, ...] = (1e-2, 1e-3)
    momentum: float = 0.9
    weight_decay: float = 1e-3
    iterations: int = 10000
    batch_size: Optional[int] = None  # None trains full-batch
    seeds: Tuple[int, ...] = tuple(range(10))
    sparse: bool = False
    threshold: float = netcore.THRESHOLD
    workers: int = 1
    architecture: Architecture = Architecture()
    log_every: int = 1000


class TrainReport(NamedTuple):
    kind: ModelKind
    seed: int
    learning_rate: float
    data_loss: np.ndarray
    constraint_residual: np.ndarray
    total_loss: np.ndarray
    metrics: Dict[str, float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'epoch': np.arange(1, len(self.total_loss) + 1),
            'data_loss': self.data_loss,
            'constraint_residual': self.constraint_residual,
            'total_loss': self.total_loss,
        })

    def summary(self) -> dict:
        return {
            'kind': self.kind.value,
            'seed': int(self.seed),
            'learning_rate': float(self.learning_rate),
            'epochs': int(len(self.total_loss)),
            'final_data_loss': _float(self.data_loss[-1]) if len(self.data_loss) else None,
            'final_constraint_residual': (
                _float(self.constraint_residual[-1]) if len(self.constraint_residual) else None
            ),
            'final_total_loss': _float(self.total_loss[-1]) if len(self.total_loss) else None,
            **{name: _float(value) for name, value in self.metrics.items()},
        }


class TrainedModel(NamedTuple):
    params: ModelParams
    report: TrainReport


class SGDState(NamedTuple):
    velocity: List[np.ndarray]


def _float(value: float) -> Optional[float]:
    value = float(value)
    return value if np.isfinite(value) else None


def validate_config(cfg: TrainConfig) -> None:
    if not cfg.lam >= 0:
        raise errors.ConfigError(f'Penalty weight must be non-negative, got {cfg.lam}.')
    if cfg.lam == 0:
        logger.warning('Penalty weight is 0: the constraint residual is not optimized')
    if not 0 <= cfg.momentum < 1:
        raise errors.ConfigError(f'Momentum must be in [0, 1), got {cfg.momentum}.')
    if cfg.iterations < 1:
        raise errors.ConfigError(f'Iterations must be at least 1, got {cfg.iterations}.')
    if not cfg.learning_rates or any(lr <= 0 for lr in cfg.learning_rates):
        raise errors.ConfigError('At least one positive learning rate is required.')
    if cfg.weight_decay < 0:
        raise errors.ConfigError('Weight decay must be non-negative.')
    if cfg.batch_size is not None and cfg.batch_size < 1:
        raise errors.ConfigError('Batch size must be positive.')


def init_state(params: Sequence[np.ndarray]) -> SGDState:
    return SGDState([np.zeros_like(p) for p in params])


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: SGDState,
    cfg: TrainConfig,
    lr: Optional[float] = None,
    epoch: int = 0,
) -> Tuple[Sequence[np.ndarray], SGDState]:
    """Heavy-ball SGD with coupled L2 decay, updating ``params`` in place.

    ``v <- momentum * v + grad + decay * param``; ``param <- param - lr * v``.

    Raises:
        DivergenceError: If any gradient is non-finite.
    """

    lr = cfg.learning_rates[0] if lr is None else lr
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise errors.ShapeError('Parameters, gradients and momentum state differ in length.')
    for grad in grads:
        if not np.all(np.isfinite(grad)):
            raise errors.DivergenceError(epoch)

    for param, grad, velocity in zip(params, grads, state.velocity):
        if param.shape != np.shape(grad):
            raise errors.ShapeError(f'Gradient shape {np.shape(grad)} does not match parameter {param.shape}.')
        velocity *= cfg.momentum
        velocity += grad + cfg.weight_decay * param
        param -= lr * velocity
    return params, state


def _threshold_in_place(arrays: Iterable[np.ndarray], tol: float) -> int:
    zeroed = 0
    for array in arrays:
        array[...], count = netcore.hard_threshold(array, tol)
        zeroed += count
    return zeroed


def _safe_re(truth: np.ndarray, pred: np.ndarray) -> float:
    try:
        return analysis.relative_error(truth, pred)
    except errors.UndefinedMetricError:
        return float('nan')


def fit_metrics(params: ModelParams, train: Dataset, validation: Optional[Dataset]) -> Dict[str, float]:
    metrics = {}
    for name, part in (('train', train), ('val', validation)):
        if part is None or part.n_rows == 0:
            continue
        out = evaluate(params, part.x, part.x_atm)
        metrics[f're_u_{name}'] = _safe_re(part.u, out.u_hat)
        metrics[f're_q_{name}'] = _safe_re(part.q, out.q_hat)
    return metrics


def train(
    kind: ModelKind,
    train_set: Dataset,
    validation: Optional[Dataset],
    cfg: TrainConfig,
    seed: int = 0,
    lr: Optional[float] = None,
) -> TrainedModel:
    """Penalized training of one model from one seed.

    Each iteration evaluates ``y = u(x)`` and the emission head, takes one
    SGD step on ``mean((y - u)^2) + lam * mean(F^2)`` and, if requested,
    zeroes emission-head parameters below the threshold.

    Raises:
        DivergenceError: If the loss becomes non-finite; carries the report
            of the epochs completed so far.
    """

    validate_config(cfg)
    lr = cfg.learning_rates[0] if lr is None else lr
    params = init_model(
        kind,
        n_inputs=len(train_set.feature_columns),
        n_atm=len(train_set.atm_columns),
        t_index=train_set.t_index,
        arch=cfg.architecture,
        seed=seed,
    )
    flat = params.parameters()
    state = init_state(flat)
    batch_rng = np.random.default_rng([seed, 1])

    x, x_atm, u, q = train_set.x, train_set.x_atm, train_set.u, train_set.q
    n = len(u)
    history = np.full((cfg.iterations, 3), np.nan)

    def partial_report(epochs: int) -> TrainReport:
        done = history[:epochs]
        return TrainReport(kind, seed, lr, done[:, 0], done[:, 1], done[:, 2], {})

    logger.debug('Training %s model: seed=%d lr=%g lam=%g iterations=%d', kind.value, seed, lr, cfg.lam, cfg.iterations)
    for epoch in range(cfg.iterations):
        if cfg.batch_size and cfg.batch_size < n:
            rows = np.sort(batch_rng.choice(n, size=cfg.batch_size, replace=False))
            terms, grads = loss_and_grads(params, x[rows], x_atm[rows], u[rows], q[rows], cfg.lam)
        else:
            terms, grads = loss_and_grads(params, x, x_atm, u, q, cfg.lam)

        if not np.isfinite(terms.total_loss):
            raise errors.DivergenceError(epoch + 1, partial_report(epoch))
        history[epoch] = terms

        try:
            sgd_step(flat, grads, state, cfg, lr, epoch + 1)
        except errors.DivergenceError:
            raise errors.DivergenceError(epoch + 1, partial_report(epoch + 1)) from None
        if cfg.sparse:
            _threshold_in_place(params.constraint_parameters(), cfg.threshold)

        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            logger.debug(
                'epoch %d: data=%.6g constraint=%.6g total=%.6g',
                epoch + 1, terms.data_loss, terms.constraint_residual, terms.total_loss,
            )

    report = partial_report(cfg.iterations)._replace(metrics=fit_metrics(params, train_set, validation))
    return TrainedModel(params, report)


def _validation_loss(model: TrainedModel, validation: Dataset) -> float:
    out = evaluate(model.params, validation.x, validation.x_atm)
    return float(np.mean((out.u_hat - validation.u) ** 2))


def train_seed(kind: ModelKind, train_set: Dataset, validation: Optional[Dataset], cfg: TrainConfig, seed: int) -> TrainedModel:
    """Trains one seed over the learning-rate grid, keeping the lowest validation data loss."""

    best, best_loss, failure = None, np.inf, None
    for lr in cfg.learning_rates:
        try:
            model = train(kind, train_set, validation, cfg, seed, lr)
        except errors.DivergenceError as error:
            logger.warning('Seed %d diverged with learning rate %g at epoch %d', seed, lr, error.epoch)
            failure = error
            continue
        if len(cfg.learning_rates) == 1 or validation is None or validation.n_rows == 0:
            return model
        loss = _validation_loss(model, validation)
        if not np.isfinite(loss):
            continue
        if loss < best_loss:
            best, best_loss = model, loss
    if best is None:
        raise failure or errors.DivergenceError(cfg.iterations)
    return best


def sweep(kind: ModelKind, train_set: Dataset, validation: Optional[Dataset], cfg: TrainConfig) -> List[TrainedModel]:
    """Trains every configured seed; diverged seeds are dropped."""

    executor = Executor(cfg.workers, logger)
    outcomes = executor.map(train_seed, [(kind, train_set, validation, cfg, seed) for seed in cfg.seeds])
    candidates = []
    for seed, outcome in zip(cfg.seeds, outcomes):
        if isinstance(outcome, errors.DivergenceError):
            logger.warning('Seed %d excluded from selection: %s', seed, outcome)
            continue
        if isinstance(outcome, errors.BaseError):
            raise outcome
        candidates.append(outcome)
    logger.info('%d of %d seeds trained successfully', len(candidates), len(cfg.seeds))
    return candidates


def yearly_totals(dates: pd.DatetimeIndex, daily: np.ndarray) -> pd.Series:
    return pd.Series(np.asarray(daily, dtype=float), index=dates).groupby(dates.year).sum()


def select_model(
    candidates: Sequence[TrainedModel],
    dataset: Dataset,
    reported: Mapping[int, float],
) -> Tuple[TrainedModel, Dict[int, float]]:
    """Picks the candidate whose yearly emission totals best match reports.

    Emissions are estimated by substituting the measured concentrations of
    ``dataset`` into each candidate. The score is the sum over reported
    years of ``|estimated total - reported total|``; ties go to the lowest
    seed.

    Returns:
        The selected candidate and the score of every candidate by seed.
    """

    if not candidates:
        raise errors.EmptyInputError('no trained candidates to select from')
    if not reported:
        raise errors.EmptyInputError('no reported yearly emissions')

    dates = dataset.dates
    absent = sorted(set(int(y) for y in reported).difference(dates.year))
    if absent:
        raise errors.AlignmentError(f'Reported years {absent} are not covered by the dataset')

    scores: Dict[int, float] = {}
    best, best_score = None, np.inf
    for candidate in sorted(candidates, key=lambda c: c.report.seed):
        daily = estimate_emissions_measured(candidate.params, dataset.u, dataset.x_atm, dataset.scaler)
        totals = yearly_totals(dates, daily)
        score = float(sum(abs(totals[int(year)] - tonnes) for year, tonnes in reported.items()))
        scores[candidate.report.seed] = score
        if score < best_score or best is None:
            best, best_score = candidate, score

    logger.info('Selected seed %d (score %.4g)', best.report.seed, best_score)
    return best, scores


def best_by_validation(candidates: Sequence[TrainedModel], validation: Optional[Dataset]) -> TrainedModel:
    """Lowest validation data loss, lowest seed on ties; used when no yearly reports exist."""

    if not candidates:
        raise errors.EmptyInputError('no trained candidates to select from')
    ordered = sorted(candidates, key=lambda c: c.report.seed)
    if validation is None or validation.n_rows == 0:
        return ordered[0]
    losses = np.array([_validation_loss(c, validation) for c in ordered])
    if not np.isfinite(losses).any():
        return ordered[0]
    return ordered[int(np.nanargmin(np.where(np.isfinite(losses), losses, np.nan)))]


def read_reported_emissions(path: Union[str, os.PathLike]) -> Dict[int, float]:
    """Reads yearly reported totals from a ``year,tonnes`` CSV."""

    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except pd.errors.EmptyDataError:
        raise errors.EmptyInputError(f'reported emissions "{path}"') from None
    if not {'year', 'tonnes'}.issubset(frame.columns):
        raise errors.FormatError('Reported emissions need "year,tonnes" columns', path)
    if frame['year'].duplicated().any():
        raise errors.FormatError('Reported emissions list a year twice', path)
    return {int(year): float(tonnes) for year, tonnes in zip(frame['year'], frame['tonnes'])}


def lambda_sweep(
    kind: ModelKind,
    train_set: Dataset,
    validation: Optional[Dataset],
    cfg: TrainConfig,
    lambdas: Sequence[float],
) -> pd.DataFrame:
    """Final mean squared constraint residual for each penalty weight.

    Every weight trains the same seed, walking the learning-rate grid (and
    ``FALLBACK_LEARNING_RATE`` after it) until a run stays finite. A weight
    that diverges at every rate is recorded as a NaN row.
    """

    seed = cfg.seeds[0] if cfg.seeds else 0
    rates = tuple(cfg.learning_rates)
    if FALLBACK_LEARNING_RATE not in rates:
        rates += (FALLBACK_LEARNING_RATE,)

    rows = []
    for lam in lambdas:
        row = {'lambda': lam, 'learning_rate': float('nan'), 'data_loss': float('nan'),
               'constraint_residual': float('nan'), 'total_loss': float('nan')}
        for lr in rates:
            try:
                report = train(kind, train_set, validation, cfg._replace(lam=lam), seed, lr).report
            except errors.DivergenceError as error:
                logger.warning('Penalty weight %g diverged with learning rate %g at epoch %d', lam, lr, error.epoch)
                continue
            row.update({
                'learning_rate': lr,
                'data_loss': report.data_loss[-1],
                'constraint_residual': report.constraint_residual[-1],
                'total_loss': report.total_loss[-1],
            })
            break
        else:
            logger.warning('Penalty weight %g diverged at every learning rate', lam)
        rows.append(row)
    return pd.DataFrame(rows)


def compare_models(
    kinds: Sequence[ModelKind],
    train_set: Dataset,
    validation: Optional[Dataset],
    cfg: TrainConfig,
) -> pd.DataFrame:
    """Train/validation relative errors of concentration and emission per model kind."""

    seed = cfg.seeds[0] if cfg.seeds else 0
    rows = []
    for kind in kinds:
        metrics = train_seed(kind, train_set, validation, cfg, seed).report.metrics
        row = {'model': kind.value, **metrics}
        for target in ('u', 'q'):
            parts = [metrics.get(f're_{target}_train'), metrics.get(f're_{target}_val')]
            parts = [p for p in parts if p is not None]
            row[f're_{target}_avg'] = float(np.mean(parts)) if parts else float('nan')
        rows.append(row)
    return pd.DataFrame(rows)


def write_report(report: TrainReport, directory: Union[str, os.PathLike], stem: str = 'report') -> Tuple[Path, Path]:
    directory = Path(directory)
    history_path = directory / f'{stem}.csv'
    summary_path = directory / f'{stem}.json'
    try:
        directory.mkdir(parents=True, exist_ok=True)
        report.to_frame().to_csv(history_path, index=False, float_format='%.17g')
        summary_path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True))
    except OSError:
        raise errors.WriteFileError(directory) from None
    return history_path, summary_path
