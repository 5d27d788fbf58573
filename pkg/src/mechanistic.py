"""Hydrocarbon degradation and methane emission in a tailings pond.

Two kinetics families are provided: independent first-order decay of each
hydrocarbon species, and Monod uptake by a single methanogenic biomass pool.
Both are integrated with fixed-step classical Runge-Kutta, one output record
per day.
"""

import logging
import os

from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import errors


logger = logging.getLogger(__name__)

SUBSTEPS_PER_DAY = 10
REPORT_COLUMNS = ('year', 'month', 'hydrocarbon', 'tonnes')
EMISSION_COLUMN = 'q_tonnes_per_day'


class KineticsModel(Enum):
    FIRST_ORDER = 'first-order'
    MONOD = 'monod'


class KineticsParams(NamedTuple):
    """Constants of the degradation model, one entry per hydrocarbon species.

    Units: decay rates and death rate in 1/day, maximum uptake in tonnes per
    (tonne biomass * day), half-saturation in tonnes, methane factors in
    tonnes CH4 per tonne hydrocarbon degraded.
    """

    model_kind: KineticsModel = KineticsModel.FIRST_ORDER
    species: Tuple[str, ...] = ('diluent',)
    decay_rates: Tuple[float, ...] = (0.05,)
    v_max: Tuple[float, ...] = (0.0,)
    half_saturation: Tuple[float, ...] = (1.0,)
    biomass_yield: float = 0.0
    biomass_death_rate: float = 0.0
    methane_factors: Tuple[float, ...] = (0.3,)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def auxiliary(self) -> Tuple[str, ...]:
        return ('biomass',) if self.model_kind == KineticsModel.MONOD else ()


# placeholder constants for the synthetic pipeline, not fitted to any pond
DEMO_PARAMS = KineticsParams()


class PondState(NamedTuple):
    mass: np.ndarray
    aux: np.ndarray


class InflowSchedule(NamedTuple):
    dates: pd.DatetimeIndex
    inflow: np.ndarray  # (days, species), tonnes/day


class MechanisticTrajectory(NamedTuple):
    dates: pd.DatetimeIndex
    mass: np.ndarray  # (days, species), tonnes
    aux: np.ndarray  # (days, auxiliary), tonnes
    q: np.ndarray  # (days,), tonnes CH4/day

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        data = {f'C_{i + 1}': self.mass[:, i] for i in range(self.mass.shape[1])}
        data.update({f'y_{j + 1}': self.aux[:, j] for j in range(self.aux.shape[1])})
        data[EMISSION_COLUMN] = self.q
        frame = pd.DataFrame(data, index=self.dates)
        frame.index.name = 'date'
        return frame


def validate_params(params: KineticsParams) -> None:
    n = params.n_species
    if n < 1:
        raise errors.ValidationError('At least one hydrocarbon species is required.')

    per_species = {
        'decay_rates': params.decay_rates,
        'methane_factors': params.methane_factors,
    }
    if params.model_kind == KineticsModel.MONOD:
        per_species['v_max'] = params.v_max
        per_species['half_saturation'] = params.half_saturation

    for name, values in per_species.items():
        if len(values) != n:
            raise errors.ValidationError(f'"{name}" has {len(values)} values for {n} species.')
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise errors.ValidationError(f'"{name}" must be finite and non-negative.')

    for name in ('biomass_yield', 'biomass_death_rate'):
        value = getattr(params, name)
        if not np.isfinite(value) or value < 0:
            raise errors.ValidationError(f'"{name}" must be finite and non-negative.')

    if params.model_kind == KineticsModel.MONOD and any(k <= 0 for k in params.half_saturation):
        raise errors.ValidationError('"half_saturation" must be positive for Monod kinetics.')


def initial_state(params: KineticsParams, mass: Sequence[float] = None, biomass: float = 0.0) -> PondState:
    mass = np.zeros(params.n_species) if mass is None else np.asarray(mass, dtype=float)
    aux = np.full(len(params.auxiliary), float(biomass))
    return PondState(mass, aux)


def _degradation(mass: np.ndarray, aux: np.ndarray, params: KineticsParams) -> np.ndarray:
    """Per-species degradation rate in tonnes/day."""

    if params.model_kind == KineticsModel.FIRST_ORDER:
        return np.asarray(params.decay_rates) * mass
    v_max = np.asarray(params.v_max)
    k_s = np.asarray(params.half_saturation)
    return v_max * mass * aux[0] / (k_s + mass)


def _derivative(y: np.ndarray, inflow: np.ndarray, params: KineticsParams) -> np.ndarray:
    # augmented layout: [mass | aux | cumulative degraded | cumulative CH4]
    n, k = params.n_species, len(params.auxiliary)
    mass, aux = y[:n], y[n:n + k]

    degraded = _degradation(mass, aux, params)
    d_mass = inflow - degraded
    if k:
        d_aux = np.array([params.biomass_yield * degraded.sum() - params.biomass_death_rate * aux[0]])
    else:
        d_aux = np.empty(0)
    q = np.dot(params.methane_factors, degraded)
    return np.concatenate([d_mass, d_aux, degraded, [q]])


def _rk4(y: np.ndarray, inflow: np.ndarray, params: KineticsParams, h: float) -> np.ndarray:
    k1 = _derivative(y, inflow, params)
    k2 = _derivative(y + 0.5 * h * k1, inflow, params)
    k3 = _derivative(y + 0.5 * h * k2, inflow, params)
    k4 = _derivative(y + h * k3, inflow, params)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(state: PondState, params: KineticsParams) -> None:
    for name, value in zip(params.species, state.mass):
        if not np.isfinite(value):
            raise errors.NumericalBlowupError(name)
    for name, value in zip(params.auxiliary, state.aux):
        if not np.isfinite(value):
            raise errors.NumericalBlowupError(name)


def step(
    state: PondState,
    inflow: Sequence[float],
    params: KineticsParams,
    dt: float = 1.0,
    substeps: int = 1,
) -> Tuple[PondState, float]:
    """Advances the pond by ``dt`` days with classical RK4.

    Args:
        state: Hydrocarbon masses and auxiliary state at the start of the step.
        inflow: Daily inflow per species (tonnes/day), constant over the step.
        params: Kinetics constants.
        dt: Step length in days.
        substeps: Number of equal RK4 sub-steps taken inside ``dt``.

    Raises:
        ValidationError: If ``dt`` is not positive.
        NumericalBlowupError: If the state is or becomes non-finite.

    Returns:
        The next state and the CH4 mass (tonnes) emitted during the step.
    """

    if not dt > 0:
        raise errors.ValidationError(f'Time step must be positive, got {dt}.')
    _check_finite(state, params)

    n, k = params.n_species, len(params.auxiliary)
    inflow = np.asarray(inflow, dtype=float)
    y = np.concatenate([state.mass, state.aux, np.zeros(n), [0.0]])
    h = dt / substeps
    for _ in range(substeps):
        y = _rk4(y, inflow, params, h)

    next_state = PondState(y[:n], y[n:n + k])
    _check_finite(next_state, params)
    return next_state, float(y[-1])


def build_inflow_schedule(
    monthly_totals: Iterable[Tuple[int, int, Sequence[float]]],
    fft_fraction: float,
) -> InflowSchedule:
    """Spreads monthly diluent totals evenly over the days of each month.

    Args:
        monthly_totals: ``(year, month, tonnes per species)`` in calendar order.
        fft_fraction: Share of the company total that flows into this pond.
    """

    if not 0.0 <= fft_fraction <= 1.0:
        raise errors.ValidationError(f'FFT fraction must be in [0, 1], got {fft_fraction}.')

    months = list(monthly_totals)
    if not months:
        raise errors.EmptyInputError('no monthly diluent totals')

    blocks = []
    previous = None
    for year, month, tonnes in months:
        period = pd.Period(year=int(year), month=int(month), freq='M')
        if previous is not None and period != previous + 1:
            raise errors.ScheduleGapError(str(previous), str(period))
        previous = period

        tonnes = np.asarray(tonnes, dtype=float)
        if np.any(tonnes < 0) or not np.all(np.isfinite(tonnes)):
            raise errors.ValidationError(f'Negative or invalid diluent total in {period}.')
        daily = fft_fraction * tonnes / period.days_in_month
        blocks.append(np.tile(daily, (period.days_in_month, 1)))

    first = pd.Period(year=int(months[0][0]), month=int(months[0][1]), freq='M')
    dates = pd.date_range(first.start_time, periods=sum(len(b) for b in blocks), freq='D')
    return InflowSchedule(dates, np.vstack(blocks))


def simulate(
    params: KineticsParams,
    schedule: InflowSchedule,
    init: Optional[PondState] = None,
    substeps: int = SUBSTEPS_PER_DAY,
) -> MechanisticTrajectory:
    """Integrates the pond day by day over the whole schedule."""

    validate_params(params)
    if len(schedule.dates) == 0:
        raise errors.EmptyInputError('inflow schedule')
    if schedule.inflow.shape[1] != params.n_species:
        raise errors.ShapeError(
            f'Schedule has {schedule.inflow.shape[1]} species, kinetics have {params.n_species}.'
        )

    state = init or initial_state(params)
    n_days = len(schedule.dates)
    mass = np.empty((n_days, params.n_species))
    aux = np.empty((n_days, len(params.auxiliary)))
    q = np.empty(n_days)

    logger.debug('Simulating %s kinetics over %d days', params.model_kind.value, n_days)
    for day, (date, inflow) in enumerate(zip(schedule.dates, schedule.inflow)):
        try:
            state, emitted = step(state, inflow, params, dt=1.0, substeps=substeps)
        except errors.NumericalBlowupError as error:
            raise errors.NumericalBlowupError(error.species, date.date()) from None
        mass[day] = state.mass
        aux[day] = state.aux
        q[day] = emitted

    return MechanisticTrajectory(schedule.dates, mass, aux, q)


def _realistic(mass: np.ndarray, aux: np.ndarray, q: float) -> bool:
    values = np.concatenate([mass, aux, [q]])
    return bool(np.all(np.isfinite(values)) and np.all(values >= 0))


def sanitize(traj: MechanisticTrajectory) -> Tuple[MechanisticTrajectory, int]:
    """Replaces every unrealistic day with a copy of the previous day's record.

    Raises:
        EmptyInputError: If the trajectory has no records.
        UnsanitizableError: If the first day itself is unrealistic.
    """

    if traj.n_days == 0:
        raise errors.EmptyInputError('trajectory')
    if not _realistic(traj.mass[0], traj.aux[0], traj.q[0]):
        raise errors.UnsanitizableError(traj.dates[0].date())

    mass, aux, q = traj.mass.copy(), traj.aux.copy(), traj.q.copy()
    replaced = 0
    for day in range(1, traj.n_days):
        if not _realistic(mass[day], aux[day], q[day]):
            mass[day], aux[day], q[day] = mass[day - 1], aux[day - 1], q[day - 1]
            replaced += 1

    if replaced:
        logger.info(
            'Replaced %d of %d simulated days (%.2f%%) with the previous day',
            replaced, traj.n_days, 100.0 * replaced / traj.n_days,
        )
    return MechanisticTrajectory(traj.dates, mass, aux, q), replaced


def read_monthly_report(
    path: Union[str, os.PathLike],
    species: Optional[Sequence[str]] = None,
) -> Tuple[Tuple[str, ...], list]:
    """Reads a monthly diluent report in long ``year,month,hydrocarbon,tonnes`` format.

    Returns:
        The species order and a list of ``(year, month, tonnes per species)``.
    """

    try:
        report = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except pd.errors.EmptyDataError:
        raise errors.EmptyInputError(f'diluent report "{path}"') from None
    return monthly_totals_from_frame(report, species, path)


def monthly_totals_from_frame(
    report: pd.DataFrame,
    species: Optional[Sequence[str]] = None,
    source: Union[str, os.PathLike, None] = None,
) -> Tuple[Tuple[str, ...], list]:
    missing = set(REPORT_COLUMNS).difference(report.columns)
    if missing:
        raise errors.FormatError(f'Diluent report lacks columns {sorted(missing)}', source)
    if report.empty:
        raise errors.EmptyInputError('diluent report')

    report = report.copy()
    report['hydrocarbon'] = report['hydrocarbon'].astype(str)
    known = tuple(species) if species else tuple(sorted(report['hydrocarbon'].unique()))
    unknown = set(report['hydrocarbon']).difference(known)
    if unknown:
        logger.warning('Ignoring diluent species not in the configuration: %s', sorted(unknown))

    table = (
        report.pivot_table(index=['year', 'month'], columns='hydrocarbon', values='tonnes', aggfunc='sum')
        .reindex(columns=list(known))
        .fillna(0.0)
        .sort_index()
    )
    rows = [(year, month, tuple(values)) for (year, month), values in zip(table.index, table.to_numpy())]
    return known, rows


def write_trajectory(traj: MechanisticTrajectory, path: Union[str, os.PathLike]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        traj.to_frame().to_csv(path, date_format='%Y-%m-%d', float_format='%.17g')
    except OSError:
        raise errors.WriteFileError(path) from None


def read_trajectory(path: Union[str, os.PathLike]) -> MechanisticTrajectory:
    try:
        frame = pd.read_csv(path, index_col='date', parse_dates=['date'], float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except (ValueError, pd.errors.EmptyDataError):
        raise errors.FormatError('Trajectory file has no "date" column', path) from None

    if EMISSION_COLUMN not in frame.columns:
        raise errors.FormatError(f'Trajectory file lacks "{EMISSION_COLUMN}"', path)
    mass = frame.filter(regex=r'^C_\d+$').to_numpy(dtype=float)
    aux = frame.filter(regex=r'^y_\d+$').to_numpy(dtype=float)
    return MechanisticTrajectory(
        pd.DatetimeIndex(frame.index), mass, aux, frame[EMISSION_COLUMN].to_numpy(dtype=float)
    )
