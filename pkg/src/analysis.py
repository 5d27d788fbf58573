import logging

from typing import Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np
import pandas as pd

from . import errors


logger = logging.getLogger(__name__)

SECTOR_WIDTH = 20.0
TARGET_PPM = 1.75
SUMMARY_COLUMNS = ('year', 'sector_start_deg', 'sector_end_deg', 'tonnes', 'days', 'clamped_days')


class SectorEmissionSummary(NamedTuple):
    year: int
    sector: int
    tonnes: float
    days: int
    clamped_days: int = 0
    width: float = SECTOR_WIDTH

    @property
    def start_deg(self) -> float:
        return self.sector * self.width

    @property
    def end_deg(self) -> float:
        return (self.sector + 1) * self.width


class TargetScenario(NamedTuple):
    """Per-sector current vs target emissions.

    ``table`` columns: year, sector, sector_start_deg, sector_end_deg,
    tonnes, target_tonnes, reduction_pct, defined. Negative reductions are
    allowable increases; sectors with no current emission are undefined.
    """

    target_ppm: float
    table: pd.DataFrame

    @property
    def total_reduction_pct(self) -> float:
        defined = self.table[self.table['defined']]
        current = defined['tonnes'].sum()
        if current <= 0:
            return float('nan')
        return float(100.0 * (current - defined['target_tonnes'].sum()) / current)


def relative_error(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """``||y_true - y_pred||_2 / ||y_true||_2``."""

    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(y_true) == 0 or len(y_true) != len(y_pred):
        raise errors.ShapeError(f'Relative error needs equal non-zero lengths, got {len(y_true)} and {len(y_pred)}.')
    norm = np.linalg.norm(y_true)
    if norm == 0:
        raise errors.UndefinedMetricError('Relative error is undefined for an all-zero reference.')
    return float(np.linalg.norm(y_true - y_pred) / norm)


def n_sectors(width: float = SECTOR_WIDTH) -> int:
    return int(round(360.0 / width))


def sector_of(wind_direction, width: float = SECTOR_WIDTH):
    """Index of the ``width``-degree sector containing each direction."""

    index = np.floor(np.mod(np.asarray(wind_direction, dtype=float), 360.0) / width).astype(int)
    index = np.minimum(index, n_sectors(width) - 1)
    return int(index) if index.ndim == 0 else index


def yearly_sector_emissions(
    dates: pd.DatetimeIndex,
    wind_direction: np.ndarray,
    daily_q: np.ndarray,
    width: float = SECTOR_WIDTH,
) -> Tuple[List[SectorEmissionSummary], int]:
    """Sums daily emissions (tonnes/day) per year and wind sector.

    Negative daily estimates count as zero. Days without a finite wind
    direction or emission are left out. Every sector is reported for every
    year present, with zero totals where no day fell.

    Returns:
        The summaries ordered by year and sector, and the number of clamped days.
    """

    frame = pd.DataFrame({
        'date': pd.DatetimeIndex(dates),
        'direction': np.asarray(wind_direction, dtype=float),
        'q': np.asarray(daily_q, dtype=float),
    })
    frame = frame[np.isfinite(frame['direction']) & np.isfinite(frame['q'])]
    if frame.empty:
        return [], 0

    frame['clamped'] = frame['q'] < 0
    frame['q'] = frame['q'].clip(lower=0.0)
    frame['year'] = frame['date'].dt.year
    frame['sector'] = sector_of(frame['direction'].to_numpy(), width)

    grouped = frame.groupby(['year', 'sector']).agg(
        tonnes=('q', 'sum'), days=('q', 'size'), clamped_days=('clamped', 'sum'),
    )
    full = pd.MultiIndex.from_product(
        [sorted(frame['year'].unique()), range(n_sectors(width))], names=['year', 'sector']
    )
    grouped = grouped.reindex(full, fill_value=0)

    clamped = int(frame['clamped'].sum())
    if clamped:
        logger.info('Clamped %d negative daily emission estimates to zero', clamped)
    summaries = [
        SectorEmissionSummary(int(year), int(sector), float(row.tonnes), int(row.days), int(row.clamped_days), width)
        for (year, sector), row in grouped.iterrows()
    ]
    return summaries, clamped


def summaries_to_frame(summaries: Iterable[SectorEmissionSummary]) -> pd.DataFrame:
    rows = [
        (s.year, s.start_deg, s.end_deg, s.tonnes, s.days, s.clamped_days) for s in summaries
    ]
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def shift_to_target_mean(concentrations: np.ndarray, target: float = TARGET_PPM) -> np.ndarray:
    """Translates the series so that its mean equals ``target``."""

    values = np.asarray(concentrations, dtype=float)
    if values.size == 0:
        raise errors.EmptyInputError('concentration series')
    return values - (values.mean() - target)


def reduction_table(
    current: Sequence[SectorEmissionSummary],
    target: Sequence[SectorEmissionSummary],
    target_ppm: float = TARGET_PPM,
) -> TargetScenario:
    """Percent change from current to target emissions per (year, sector).

    Raises:
        AlignmentError: If the two summaries do not share (year, sector) keys.
    """

    now = {(s.year, s.sector): s for s in current}
    then = {(s.year, s.sector): s for s in target}
    if set(now) != set(then):
        keys = sorted(set(now).symmetric_difference(then))
        raise errors.AlignmentError(f'Sector summaries differ in (year, sector) keys {keys[:10]}')

    rows = []
    for key in sorted(now):
        base, goal = now[key], then[key]
        defined = base.tonnes > 0
        reduction = 100.0 * (base.tonnes - goal.tonnes) / base.tonnes if defined else float('nan')
        rows.append({
            'year': base.year,
            'sector': base.sector,
            'sector_start_deg': base.start_deg,
            'sector_end_deg': base.end_deg,
            'tonnes': base.tonnes,
            'target_tonnes': goal.tonnes,
            'reduction_pct': reduction,
            'defined': defined,
        })
    table = pd.DataFrame(rows, columns=[
        'year', 'sector', 'sector_start_deg', 'sector_end_deg', 'tonnes', 'target_tonnes', 'reduction_pct', 'defined',
    ])
    undefined = int((~table['defined']).sum()) if len(table) else 0
    if undefined:
        logger.info('%d sector(s) have no current emission; their reduction is undefined', undefined)
    return TargetScenario(target_ppm, table)


def sector_range_reduction(scenario: TargetScenario, lo: float, hi: float) -> float:
    """Aggregate percent reduction over sectors whose start lies in [lo, hi), wrapping through north."""

    start = scenario.table['sector_start_deg'].to_numpy()
    inside = (start >= lo) & (start < hi) if lo < hi else (start >= lo) | (start < hi)
    part = scenario.table[inside & scenario.table['defined'].to_numpy()]
    current = part['tonnes'].sum()
    if current <= 0:
        return float('nan')
    return float(100.0 * (current - part['target_tonnes'].sum()) / current)
