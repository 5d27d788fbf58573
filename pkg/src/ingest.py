import logging
import os

from pathlib import Path
from typing import NamedTuple, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from . import errors
from .mechanistic import MechanisticTrajectory


logger = logging.getLogger(__name__)

TIMESTAMP = 'timestamp'
WIND_DIR = 'wind_dir_deg'
WIND_SPEED = 'wind_speed_ms'
CH4 = 'ch4_ppm'
Q = 'q_tonnes_per_day'
T = 't'
STATION_COLUMNS = (TIMESTAMP, WIND_DIR, WIND_SPEED, 'temp_c', 'solar_wm2', CH4)
REQUIRED_COLUMNS = (TIMESTAMP, WIND_DIR)
DEFAULT_ATM_CHANNELS = (WIND_DIR, WIND_SPEED, 'temp_c', 'solar_wm2')
FILLED_SUFFIX = '_filled'

STATION_SECTORS = {
    'mannix': (300.0, 320.0),
    'lower_camp': (160.0, 180.0),
    'mildred_lake': (300.0, 340.0),
}
FULL_CIRCLE = (0.0, 0.0)


class StationData(NamedTuple):
    frame: pd.DataFrame  # one row per observation, in file order
    dropped: int


class DailySeries(NamedTuple):
    values: pd.DataFrame  # indexed by calendar day, NaN where missing
    filled: pd.DataFrame  # same shape, True where a value was interpolated


class Scaler(NamedTuple):
    """Per-column min-max scaling; constant columns map to 0."""

    columns: Tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    roles: Tuple[str, ...] = ()

    @property
    def constant(self) -> np.ndarray:
        return ~(self.maxs > self.mins)

    def _span(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.maxs - self.mins)

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        values = frame[list(self.columns)].to_numpy(dtype=float)
        scaled = (values - self.mins) / self._span()
        scaled[:, self.constant] = 0.0
        return pd.DataFrame(scaled, index=frame.index, columns=list(self.columns))

    def inverse_transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        values = frame[list(self.columns)].to_numpy(dtype=float)
        return pd.DataFrame(values * self._span() + self.mins, index=frame.index, columns=list(self.columns))

    def column(self, name: str) -> Tuple[float, float]:
        try:
            i = self.columns.index(name)
        except ValueError:
            raise errors.ArtifactError(f'scaler has no column "{name}"') from None
        return float(self.mins[i]), float(self._span()[i])

    def scale(self, name: str, values: np.ndarray) -> np.ndarray:
        low, span = self.column(name)
        return (np.asarray(values, dtype=float) - low) / span

    def unscale(self, name: str, values: np.ndarray) -> np.ndarray:
        low, span = self.column(name)
        return np.asarray(values, dtype=float) * span + low


class Dataset(NamedTuple):
    """Aligned daily rows ``[x_dil, x_atm, t]`` with scaled targets."""

    frame: pd.DataFrame  # scaled feature, target and flag columns, indexed by date
    dil_columns: Tuple[str, ...]
    atm_columns: Tuple[str, ...]
    scaler: Scaler

    @property
    def feature_columns(self) -> Tuple[str, ...]:
        return self.dil_columns + self.atm_columns + (T,)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.frame.index)

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def t_index(self) -> int:
        return len(self.feature_columns) - 1

    @property
    def x(self) -> np.ndarray:
        return self.frame[list(self.feature_columns)].to_numpy(dtype=float)

    @property
    def x_atm(self) -> np.ndarray:
        return self.frame[list(self.atm_columns)].to_numpy(dtype=float)

    @property
    def u(self) -> np.ndarray:
        return self.frame[CH4].to_numpy(dtype=float)

    @property
    def q(self) -> np.ndarray:
        return self.frame[Q].to_numpy(dtype=float)

    def raw(self, column: str) -> np.ndarray:
        return self.scaler.unscale(column, self.frame[column].to_numpy(dtype=float))

    def subset(self, rows: slice) -> 'Dataset':
        return self._replace(frame=self.frame.iloc[rows])

    def with_column(self, column: str, values: np.ndarray) -> 'Dataset':
        frame = self.frame.copy()
        frame[column] = values
        return self._replace(frame=frame)


def parse_station_csv(stream: Union[TextIO, str, os.PathLike]) -> StationData:
    """Reads hourly station observations.

    Rows whose timestamp or wind direction cannot be parsed are dropped and
    counted. Other channels may be missing. Wind directions are wrapped into
    [0, 360).

    Raises:
        OpenFileError: If the path does not exist.
        EmptyInputError: If the file has no rows.
        FormatError: If the header lacks a required column or timestamps
            are not strictly increasing.
    """

    try:
        raw = pd.read_csv(stream, dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise errors.OpenFileError(stream) from None
    except pd.errors.EmptyDataError:
        raise errors.EmptyInputError('station file') from None

    raw.columns = [str(c).strip() for c in raw.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in raw.columns]
    if missing:
        raise errors.FormatError(f'Station file header lacks {missing}')
    if raw.empty:
        raise errors.EmptyInputError('station file')

    frame = pd.DataFrame(index=raw.index)
    frame[TIMESTAMP] = pd.to_datetime(raw[TIMESTAMP], errors='coerce', utc=True)
    for column in raw.columns:
        if column != TIMESTAMP:
            frame[column] = pd.to_numeric(raw[column], errors='coerce')

    valid = frame[list(REQUIRED_COLUMNS)].notna().all(axis=1) & np.isfinite(frame[WIND_DIR])
    dropped = int((~valid).sum())
    frame = frame[valid].reset_index(drop=True)
    if dropped:
        logger.info('Dropped %d malformed station rows of %d', dropped, len(raw))
    if frame.empty:
        raise errors.EmptyInputError('station file (no parseable rows)')

    if not frame[TIMESTAMP].is_monotonic_increasing or frame[TIMESTAMP].duplicated().any():
        raise errors.FormatError('Station timestamps are not strictly increasing')

    frame[WIND_DIR] = np.mod(frame[WIND_DIR], 360.0)
    return StationData(frame, dropped)


def in_sector(direction: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Membership in the half-open sector [lo, hi); lo > hi wraps through north."""

    direction = np.asarray(direction, dtype=float)
    if lo == hi:
        return np.ones(direction.shape, dtype=bool)
    if lo < hi:
        return (direction >= lo) & (direction < hi)
    return (direction >= lo) | (direction < hi)


def filter_by_wind_sector(obs: pd.DataFrame, lo: float, hi: float) -> pd.DataFrame:
    for bound in (lo, hi):
        if not 0.0 <= bound < 360.0:
            raise errors.ValidationError(f'Sector bound {bound} is outside [0, 360).')
    return obs[in_sector(obs[WIND_DIR].to_numpy(), lo, hi)]


def _circular_mean(degrees: pd.Series) -> float:
    if degrees.empty:
        return np.nan
    radians = np.deg2rad(degrees.to_numpy(dtype=float))
    mean = np.rad2deg(np.arctan2(np.sin(radians).mean(), np.cos(radians).mean()))
    return float(np.mod(np.round(mean, 12), 360.0))


def daily_aggregate(
    obs: pd.DataFrame,
    start: Optional[pd.Timestamp] = None,
    end: Optional[pd.Timestamp] = None,
) -> DailySeries:
    """Averages observations per calendar day.

    Days without surviving observations are kept as missing (NaN) rows.
    Wind direction uses the circular mean so that days straddling north
    average correctly.
    """

    channels = [c for c in obs.columns if c != TIMESTAMP]
    stamped = obs.set_index(pd.DatetimeIndex(obs[TIMESTAMP]).tz_localize(None).normalize())[channels]
    grouped = stamped.groupby(level=0)

    values = grouped.mean()
    if WIND_DIR in channels:
        values[WIND_DIR] = grouped[WIND_DIR].agg(_circular_mean)

    first = pd.Timestamp(start) if start is not None else (values.index.min() if len(values) else None)
    last = pd.Timestamp(end) if end is not None else (values.index.max() if len(values) else None)
    if first is None or last is None:
        values = values.iloc[0:0]
    else:
        values = values.reindex(pd.date_range(first, last, freq='D'))
    values.index.name = 'date'
    return DailySeries(values, pd.DataFrame(False, index=values.index, columns=values.columns))


def interpolate_gaps(series: DailySeries, start: pd.Timestamp, end: pd.Timestamp) -> DailySeries:
    """Fills missing days linearly between known neighbours.

    Leading and trailing gaps take the nearest known value. Filled entries
    are flagged.

    Raises:
        UninterpolatableChannelError: If a channel has fewer than two known
            values inside the range.
    """

    index = pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq='D', name='date')
    values = series.values.reindex(index)
    previously = series.filled.reindex(index, fill_value=False).astype(bool)

    missing = values.isna()
    for column in values.columns:
        known = int((~missing[column]).sum())
        if known < 2:
            raise errors.UninterpolatableChannelError(column, known)

    filled_values = values.interpolate(method='linear', limit_direction='both').ffill().bfill()
    flags = previously | missing
    total = int(missing.to_numpy().sum())
    if total:
        logger.info('Interpolated %d missing daily values over %d days', total, len(index))
    return DailySeries(filled_values, flags)


def minmax_scale(frame: pd.DataFrame, roles: Sequence[str] = ()) -> Tuple[pd.DataFrame, Scaler]:
    """Scales every column to [0, 1]; constant columns become 0 and are flagged."""

    values = frame.to_numpy(dtype=float)
    scaler = Scaler(tuple(frame.columns), values.min(axis=0), values.max(axis=0), tuple(roles))
    for name, constant in zip(scaler.columns, scaler.constant):
        if constant:
            logger.warning('Column "%s" is constant; it is scaled to 0', name)
    return scaler.transform(frame), scaler


def assemble_dataset(
    weather: DailySeries,
    traj: MechanisticTrajectory,
    date_range: Tuple[pd.Timestamp, pd.Timestamp],
    atm_channels: Sequence[str] = DEFAULT_ATM_CHANNELS,
    scaler: Optional[Scaler] = None,
) -> Dataset:
    """Aligns weather and simulated pond data into scaled model rows.

    Row ``i`` is ``[x_dil(i), x_atm(i), t_i]`` with ``t_i = i / (N - 1)``.
    The scaler is fit on the whole range unless an existing one is given.

    Raises:
        AlignmentError: If either source misses a date of the range.
    """

    index = pd.date_range(pd.Timestamp(date_range[0]), pd.Timestamp(date_range[1]), freq='D', name='date')
    if len(index) == 0:
        raise errors.EmptyInputError('date range')

    channels = list(atm_channels) + [CH4]
    absent = [c for c in channels if c not in weather.values.columns]
    if absent:
        raise errors.FormatError(f'Weather data lacks channels {absent}')

    weather_values = weather.values.reindex(index)
    missing_weather = index[weather_values[channels].isna().any(axis=1)]
    if len(missing_weather):
        raise errors.AlignmentError('Weather data does not cover the range', missing_weather.date)

    pond = traj.to_frame().reindex(index)
    missing_pond = index[pond.isna().any(axis=1)]
    if len(missing_pond):
        raise errors.AlignmentError('Trajectory does not cover the range', missing_pond.date)

    dil_columns = tuple(c for c in pond.columns if c.startswith('C_'))
    n = len(index)
    rows = pd.concat([pond[list(dil_columns)], weather_values[list(atm_channels)]], axis=1)
    rows[T] = np.arange(n) / (n - 1) if n > 1 else 0.0
    rows[CH4] = weather_values[CH4]
    rows[Q] = pond[Q]

    roles = ('dil',) * len(dil_columns) + ('atm',) * len(atm_channels) + ('time', 'target', 'target')
    if scaler is None:
        scaled, scaler = minmax_scale(rows, roles)
    else:
        scaled = scaler.transform(rows)

    flags = weather.filled.reindex(index, fill_value=False)[channels].astype(int)
    flags.columns = [c + FILLED_SUFFIX for c in flags.columns]
    frame = pd.concat([scaled, flags], axis=1)
    frame.index.name = 'date'

    logger.info('Assembled %d daily rows (%s to %s)', n, index[0].date(), index[-1].date())
    return Dataset(frame, dil_columns, tuple(atm_channels), scaler)


def chronological_split(dataset: Dataset, train_fraction: float = 0.8) -> Tuple[Dataset, Dataset]:
    if dataset.n_rows < 5:
        raise errors.ValidationError(f'Dataset has {dataset.n_rows} rows; at least 5 are needed to split.')
    cut = int(np.floor(train_fraction * dataset.n_rows))
    return dataset.subset(slice(0, cut)), dataset.subset(slice(cut, None))


def write_dataset(dataset: Dataset, path: Union[str, os.PathLike]) -> Path:
    """Writes the scaled rows and a sidecar ``<name>.scaler.csv``."""

    path = Path(path)
    sidecar = scaler_path(path)
    scaler = dataset.scaler
    table = pd.DataFrame({
        'name': scaler.columns,
        'min': scaler.mins,
        'max': scaler.maxs,
        'role': scaler.roles or ('',) * len(scaler.columns),
    })
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        dataset.frame.to_csv(path, date_format='%Y-%m-%d', float_format='%.17g')
        table.to_csv(sidecar, index=False, float_format='%.17g')
    except OSError:
        raise errors.WriteFileError(path) from None
    return sidecar


def scaler_path(path: Union[str, os.PathLike]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + '.scaler.csv')


def read_scaler(path: Union[str, os.PathLike]) -> Scaler:
    try:
        table = pd.read_csv(path, keep_default_na=False, float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    if not {'name', 'min', 'max'}.issubset(table.columns):
        raise errors.FormatError('Scaler file needs "name,min,max" columns', path)
    roles = tuple(table['role'].astype(str)) if 'role' in table.columns else ()
    return Scaler(
        tuple(table['name'].astype(str)),
        table['min'].to_numpy(dtype=float),
        table['max'].to_numpy(dtype=float),
        roles,
    )


def read_dataset(path: Union[str, os.PathLike]) -> Dataset:
    scaler = read_scaler(scaler_path(path))
    try:
        frame = pd.read_csv(path, index_col='date', parse_dates=['date'], float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except ValueError:
        raise errors.FormatError('Dataset file has no "date" column', path) from None

    roles = dict(zip(scaler.columns, scaler.roles))
    dil = tuple(c for c in scaler.columns if roles.get(c) == 'dil')
    atm = tuple(c for c in scaler.columns if roles.get(c) == 'atm')
    absent = [c for c in dil + atm + (T, CH4, Q) if c not in frame.columns]
    if absent:
        raise errors.FormatError(f'Dataset lacks columns {absent}', path)
    return Dataset(frame, dil, atm, scaler)


def prepare_weather(
    station: StationData,
    sector: Tuple[float, float],
    date_range: Tuple[pd.Timestamp, pd.Timestamp],
) -> DailySeries:
    """Runs the filter, daily mean and gap filling steps for one station."""

    lo, hi = sector
    kept = filter_by_wind_sector(station.frame, lo, hi)
    logger.info('Kept %d of %d observations in sector [%g, %g)', len(kept), len(station.frame), lo, hi)
    daily = daily_aggregate(kept, *date_range)
    return interpolate_gaps(daily, *date_range)
