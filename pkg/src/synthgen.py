"""Synthetic station data from a known dispersion law.

When the wind blows from within ``BEARING_TOLERANCE`` degrees of the
source bearing, the station sees ``u_bg + gain * q(t) / (1 + wind_speed)``;
otherwise it sees only the background. All channels come from seeded
smooth processes so runs are reproducible.
"""

import logging
import os

from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd

from . import errors, mechanistic
from .analysis import relative_error
from .ingest import CH4, STATION_COLUMNS, TIMESTAMP, WIND_DIR, WIND_SPEED
from .mechanistic import KineticsParams, MechanisticTrajectory


logger = logging.getLogger(__name__)

BEARING_TOLERANCE = 10.0
STATION_FILE = 'station.csv'
DILUENT_FILE = 'diluent.csv'
TRUTH_FILE = 'truth_q.csv'


class SynthConfig(NamedTuple):
    seed: int = 0
    start: str = '2020-01-01'
    end: str = '2022-12-31'
    source_bearing: float = 310.0
    gain: float = 0.25  # ppm per tonne/day
    background: float = 1.9  # ppm
    noise: float = 0.02  # ppm std per hourly reading
    source_probability: float = 0.4  # share of days with wind from the source
    samples_per_day: int = 24
    temperature_mean: float = 2.0  # deg C
    temperature_amplitude: float = 18.0
    solar_mean: float = 150.0  # W/m2
    solar_amplitude: float = 120.0
    wind_speed_mean: float = 3.0  # m/s
    wind_speed_variability: float = 1.0
    monthly_diluent: float = 60.0  # tonnes, before the FFT fraction
    fft_fraction: float = 1.0


class SynthOutput(NamedTuple):
    station: pd.DataFrame
    diluent: pd.DataFrame
    truth: pd.DataFrame
    trajectory: MechanisticTrajectory


class OracleReport(NamedTuple):
    relative_error: float
    yearly_gap_pct: pd.Series


def validate(cfg: SynthConfig) -> None:
    if not cfg.gain > 0:
        raise errors.ValidationError(f'Dispersion gain must be positive, got {cfg.gain}.')
    if cfg.noise < 0:
        raise errors.ValidationError(f'Noise level must be non-negative, got {cfg.noise}.')
    if pd.Timestamp(cfg.end) < pd.Timestamp(cfg.start):
        raise errors.ValidationError(f'Empty date range {cfg.start}..{cfg.end}.')
    if not 0.0 <= cfg.source_probability <= 1.0:
        raise errors.ValidationError('Source probability must be in [0, 1].')
    if cfg.samples_per_day < 1:
        raise errors.ValidationError('At least one sample per day is required.')


def modulation(wind_speed: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.asarray(wind_speed, dtype=float))


def _smooth_noise(rng: np.random.Generator, n: int, scale: float, window: int = 7) -> np.ndarray:
    raw = rng.normal(0.0, scale, size=n + window - 1)
    return np.convolve(raw, np.ones(window) / np.sqrt(window), mode='valid')


def monthly_report(cfg: SynthConfig, params: KineticsParams, rng: np.random.Generator) -> pd.DataFrame:
    """Monthly diluent totals with a slow trend and month-to-month variation."""

    months = pd.period_range(pd.Timestamp(cfg.start), pd.Timestamp(cfg.end), freq='M')
    rows = []
    for i, month in enumerate(months):
        trend = 1.0 + 0.2 * np.sin(2 * np.pi * i / 12.0)
        for species in params.species:
            tonnes = cfg.monthly_diluent * trend * rng.uniform(0.8, 1.2)
            rows.append((month.year, month.month, species, round(float(tonnes), 6)))
    return pd.DataFrame(rows, columns=['year', 'month', 'hydrocarbon', 'tonnes'])


def _wind_directions(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    downwind = rng.random(n) < cfg.source_probability
    near = cfg.source_bearing + rng.uniform(-0.9, 0.9, size=n) * BEARING_TOLERANCE
    # other days sweep the full circle so every sector gets days every year
    sweep = np.mod(np.arange(n) * 137.507764 + rng.uniform(0.0, 20.0, size=n), 360.0)
    return np.mod(np.where(downwind, near, sweep), 360.0)


def from_source(direction: np.ndarray, bearing: float) -> np.ndarray:
    offset = np.abs(np.mod(np.asarray(direction, dtype=float) - bearing + 180.0, 360.0) - 180.0)
    return offset <= BEARING_TOLERANCE


def generate(
    cfg: SynthConfig = SynthConfig(),
    params: KineticsParams = mechanistic.DEMO_PARAMS,
    trajectory: Optional[MechanisticTrajectory] = None,
) -> SynthOutput:
    """Generates station observations, the diluent report and the true emissions.

    The true emission process is the mechanistic simulation of the
    generated monthly report unless a trajectory is given.
    """

    validate(cfg)
    rng = np.random.default_rng(cfg.seed)
    days = pd.date_range(pd.Timestamp(cfg.start), pd.Timestamp(cfg.end), freq='D')
    n = len(days)

    report = monthly_report(cfg, params, rng)
    if trajectory is None:
        _, totals = mechanistic.monthly_totals_from_frame(report, params.species)
        schedule = mechanistic.build_inflow_schedule(totals, cfg.fft_fraction)
        trajectory, _ = mechanistic.sanitize(mechanistic.simulate(params, schedule))
    q = pd.Series(trajectory.q, index=trajectory.dates).reindex(days)
    if q.isna().any():
        raise errors.AlignmentError('True emission process does not cover the range', days[q.isna()].date)
    q = q.to_numpy()

    season = 2 * np.pi * (days.dayofyear.to_numpy() - 1) / 365.25
    temperature = cfg.temperature_mean - cfg.temperature_amplitude * np.cos(season) + _smooth_noise(rng, n, 1.0)
    solar = np.clip(cfg.solar_mean - cfg.solar_amplitude * np.cos(season) + _smooth_noise(rng, n, 10.0), 0.0, None)
    wind_speed = np.clip(
        cfg.wind_speed_mean + 0.5 * np.sin(season) + _smooth_noise(rng, n, cfg.wind_speed_variability / 2.0),
        0.2, None,
    )
    wind_speed = np.round(wind_speed, 6)
    temperature = np.round(temperature, 6)
    solar = np.round(solar, 6)
    direction = np.round(_wind_directions(cfg, rng, n), 6)
    sourced = from_source(direction, cfg.source_bearing)
    plume = np.where(sourced, cfg.gain * q * modulation(wind_speed), 0.0)

    k = cfg.samples_per_day
    stamps = pd.date_range(days[0], periods=n * k, freq=pd.Timedelta(hours=24 / k))
    noise = rng.normal(0.0, cfg.noise, size=n * k) if cfg.noise > 0 else np.zeros(n * k)
    station = pd.DataFrame({
        TIMESTAMP: stamps.strftime('%Y-%m-%dT%H:%M:%SZ'),
        WIND_DIR: np.repeat(direction, k),
        WIND_SPEED: np.repeat(wind_speed, k),
        'temp_c': np.repeat(temperature, k),
        'solar_wm2': np.repeat(solar, k),
        CH4: np.repeat(cfg.background + plume, k) + noise,
    }, columns=list(STATION_COLUMNS))

    truth = pd.DataFrame({'date': days.strftime('%Y-%m-%d'), 'q_tonnes_per_day': q})
    logger.info(
        'Generated %d days (%d readings); %.1f%% of days downwind of the source at %g deg',
        n, len(station), 100.0 * sourced.mean(), cfg.source_bearing,
    )
    return SynthOutput(station, report, truth, trajectory)


def write(output: SynthOutput, directory: Union[str, os.PathLike]) -> Tuple[Path, Path, Path]:
    directory = Path(directory)
    paths = directory / STATION_FILE, directory / DILUENT_FILE, directory / TRUTH_FILE
    try:
        directory.mkdir(parents=True, exist_ok=True)
        output.station.to_csv(paths[0], index=False, float_format='%.10g')
        output.diluent.to_csv(paths[1], index=False, float_format='%.10g')
        output.truth.to_csv(paths[2], index=False, float_format='%.17g')
    except OSError:
        raise errors.WriteFileError(directory) from None
    return paths


def read_truth(path: Union[str, os.PathLike]) -> pd.Series:
    try:
        frame = pd.read_csv(path, parse_dates=['date'], float_precision='round_trip')
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except ValueError:
        raise errors.FormatError('Emission file needs a "date" column', path) from None
    if 'q_tonnes_per_day' not in frame.columns:
        raise errors.FormatError('Emission file needs a "q_tonnes_per_day" column', path)
    return frame.set_index('date')['q_tonnes_per_day']


def oracle_check(estimated: pd.Series, truth: pd.Series) -> OracleReport:
    """Relative error and per-year cumulative gap (%) of estimated vs true daily emissions.

    Raises:
        AlignmentError: If the two series are not indexed by the same dates.
    """

    estimated_index = pd.DatetimeIndex(estimated.index)
    truth_index = pd.DatetimeIndex(truth.index)
    if not estimated_index.equals(truth_index):
        missing = truth_index.symmetric_difference(estimated_index)
        raise errors.AlignmentError('Estimated and true emissions are not aligned', missing.date)

    re = relative_error(truth.to_numpy(), estimated.to_numpy())
    years = truth_index.year
    est_totals = pd.Series(estimated.to_numpy(dtype=float), index=truth_index).groupby(years).sum()
    true_totals = pd.Series(truth.to_numpy(dtype=float), index=truth_index).groupby(years).sum()
    gap = 100.0 * (est_totals - true_totals).abs() / true_totals
    return OracleReport(re, gap)
