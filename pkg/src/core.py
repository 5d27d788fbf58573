"""One pipeline per command. Each reads its inputs, writes its outputs into
the run directory and finishes with ``config.ini`` and ``manifest.json``."""

import json
import logging
import os

from pathlib import Path
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import analysis, artifacts, config, errors, excel, ingest, mechanistic, plotting, synthgen, training
from .config import RunConfig
from .formulations import ModelKind, estimate_emissions_measured, evaluate
from .ingest import CH4, Q, T, WIND_DIR, Dataset, DailySeries
from .tables import SCENARIO_TABLES, SECTOR_TABLES


logger = logging.getLogger(__name__)

TRAJECTORY_FILE = 'trajectory.csv'
DATASET_FILE = 'dataset.csv'
MODEL_FILE = 'model.npz'
REPORT_STEM = 'report'
SEEDS_FILE = 'seeds.csv'
LAMBDA_FILE = 'lambda_residuals.csv'
COMPARISON_FILE = 'comparison.csv'
SECTORS_FILE = 'sectors.csv'
SCENARIO_FILE = 'scenario.csv'
PREDICTIONS_FILE = 'predictions.csv'
EVAL_FILE = 'eval.json'
REPORTED_FILE = 'reported_emissions.csv'


class Options(NamedTuple):
    plot: bool = False
    excel: bool = False


class RunResult(NamedTuple):
    directory: Path
    outputs: Dict[str, Path]


def validate_filepath(name: str, path: Union[str, os.PathLike]) -> Path:
    if not path:
        raise errors.ConfigError(f'"{name}" is required for this command.')
    if not Path(path).exists() or Path(path).is_dir():
        raise errors.OpenFileError(path)
    return Path(path)


def _output_dir(cfg: RunConfig) -> Path:
    directory = Path(cfg.output_dir)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError:
        raise errors.WriteFileError(directory) from None
    return directory


def _finish(cfg: RunConfig, command: str, directory: Path, outputs: Dict[str, Path], inputs: Dict[str, str]) -> RunResult:
    artifacts.write_manifest(directory, command, config.dump(cfg), inputs, outputs)
    logger.info('%s finished: %d output(s) in %s', command, len(outputs), directory)
    return RunResult(directory, outputs)


def _inputs(cfg: RunConfig, *names: str) -> Dict[str, str]:
    return {name: getattr(cfg, name) for name in names if getattr(cfg, name)}


def load_trajectory(cfg: RunConfig) -> mechanistic.MechanisticTrajectory:
    """Reads ``trajectory_csv`` or simulates ``diluent_csv`` when no trajectory is given."""

    if cfg.trajectory_csv:
        return mechanistic.read_trajectory(validate_filepath('trajectory_csv', cfg.trajectory_csv))
    if cfg.diluent_csv:
        return simulate_report(cfg)
    raise errors.ConfigError('Either "trajectory_csv" or "diluent_csv" is required.')


def simulate_report(cfg: RunConfig) -> mechanistic.MechanisticTrajectory:
    params = config.kinetics_params(cfg)
    path = validate_filepath('diluent_csv', cfg.diluent_csv)
    _, totals = mechanistic.read_monthly_report(path, params.species)
    schedule = mechanistic.build_inflow_schedule(totals, cfg.fft_fraction)
    init = mechanistic.initial_state(params, cfg.initial_mass or None, cfg.initial_biomass)
    traj = mechanistic.simulate(params, schedule, init, cfg.substeps)
    traj, _ = mechanistic.sanitize(traj)
    return traj


def _weather(cfg: RunConfig, sector: Tuple[float, float], date_range) -> DailySeries:
    station = ingest.parse_station_csv(validate_filepath('station_csv', cfg.station_csv))
    return ingest.prepare_weather(station, sector, date_range)


def run_simulate(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    traj = simulate_report(cfg)
    path = directory / TRAJECTORY_FILE
    mechanistic.write_trajectory(traj, path)
    logger.info('Simulated %d days, %.6g tonnes CH4 in total', traj.n_days, float(traj.q.sum()))
    return _finish(cfg, 'simulate', directory, {'trajectory': path}, _inputs(cfg, 'diluent_csv'))


def build_dataset(cfg: RunConfig) -> Dataset:
    date_range = config.date_range(cfg)
    weather = _weather(cfg, config.sector(cfg), date_range)
    traj = load_trajectory(cfg)
    return ingest.assemble_dataset(weather, traj, date_range, cfg.atm_channels)


def run_prepare(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    dataset = build_dataset(cfg)
    train_set, validation = ingest.chronological_split(dataset, cfg.train_fraction)
    logger.info('Split %d rows into %d training and %d validation rows', dataset.n_rows, train_set.n_rows, validation.n_rows)

    path = directory / DATASET_FILE
    sidecar = ingest.write_dataset(dataset, path)
    inputs = _inputs(cfg, 'station_csv', 'trajectory_csv', 'diluent_csv')
    return _finish(cfg, 'prepare', directory, {'dataset': path, 'scaler': sidecar}, inputs)


def _select(
    kind: ModelKind,
    candidates: Sequence[training.TrainedModel],
    dataset: Dataset,
    validation: Dataset,
    reported: Optional[Dict[int, float]],
) -> Tuple[training.TrainedModel, Dict[int, float]]:
    if reported and kind.constrained:
        return training.select_model(candidates, dataset, reported)
    if reported:
        logger.warning('The %s model has no emission head; selecting by validation loss instead', kind.value)
    return training.best_by_validation(candidates, validation), {}


def _seeds_table(candidates: Sequence[training.TrainedModel], scores: Dict[int, float], selected: int) -> pd.DataFrame:
    rows = []
    for candidate in sorted(candidates, key=lambda c: c.report.seed):
        summary = candidate.report.summary()
        rows.append({
            'seed': summary['seed'],
            'learning_rate': summary['learning_rate'],
            'final_data_loss': summary['final_data_loss'],
            'final_constraint_residual': summary['final_constraint_residual'],
            'selection_score': scores.get(candidate.report.seed, float('nan')),
            'selected': candidate.report.seed == selected,
        })
    return pd.DataFrame(rows)


def run_train(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    if cfg.dataset_csv:
        dataset = ingest.read_dataset(validate_filepath('dataset_csv', cfg.dataset_csv))
    else:
        dataset = build_dataset(cfg)
    train_set, validation = ingest.chronological_split(dataset, cfg.train_fraction)

    kind = ModelKind(cfg.model_kind)
    train_cfg = config.train_config(cfg)
    candidates = training.sweep(kind, train_set, validation, train_cfg)
    if not candidates:
        raise errors.NumericalError(f'Every seed of the {kind.value} sweep diverged.')

    reported = None
    if cfg.reported_emissions_csv:
        reported = training.read_reported_emissions(validate_filepath('reported_emissions_csv', cfg.reported_emissions_csv))
    best, scores = _select(kind, candidates, dataset, validation, reported)

    lambda_table = comparison = None
    if cfg.lambda_grid:
        lambda_table = training.lambda_sweep(kind, train_set, validation, train_cfg, cfg.lambda_grid)
    if cfg.compare_kinds:
        kinds = [ModelKind(k) for k in cfg.compare_kinds]
        comparison = training.compare_models(kinds, train_set, validation, train_cfg)

    outputs: Dict[str, Path] = {}
    meta = {
        'sector': list(config.sector(cfg)),
        'start_date': str(dataset.dates[0].date()),
        'end_date': str(dataset.dates[-1].date()),
        'atm_columns': list(dataset.atm_columns),
        'dil_columns': list(dataset.dil_columns),
        'seed': int(best.report.seed),
        'learning_rate': float(best.report.learning_rate),
        'lam': float(train_cfg.lam),
        'sparse': bool(train_cfg.sparse),
    }
    outputs['model'] = artifacts.save_model(directory / MODEL_FILE, best.params, dataset.scaler, meta)
    outputs['report'], outputs['summary'] = training.write_report(best.report, directory, REPORT_STEM)

    seeds_path = directory / SEEDS_FILE
    _write_csv(_seeds_table(candidates, scores, best.report.seed), seeds_path)
    outputs['seeds'] = seeds_path

    if lambda_table is not None:
        outputs['lambda'] = _write_csv(lambda_table, directory / LAMBDA_FILE)
    if comparison is not None:
        outputs['comparison'] = _write_csv(comparison, directory / COMPARISON_FILE)

    inputs = _inputs(cfg, 'dataset_csv', 'station_csv', 'trajectory_csv', 'diluent_csv', 'reported_emissions_csv')
    return _finish(cfg, 'train', directory, outputs, inputs)


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format='%.17g')
    except OSError:
        raise errors.WriteFileError(path) from None
    return path


class Replay(NamedTuple):
    """A trained model applied to every wind direction of a date range."""

    artifact: artifacts.ModelArtifact
    dataset: Dataset
    weather: DailySeries

    @property
    def wind_direction(self) -> np.ndarray:
        return self.weather.values[WIND_DIR].reindex(self.dataset.dates).to_numpy(dtype=float)

    def emissions(self, scaled_u: Optional[np.ndarray] = None) -> np.ndarray:
        u = self.dataset.u if scaled_u is None else scaled_u
        return estimate_emissions_measured(self.artifact.params, u, self.dataset.x_atm, self.artifact.scaler)


def replay(cfg: RunConfig) -> Replay:
    """Assembles the full-circle daily data with the model's own scaling."""

    artifact = artifacts.load_model(validate_filepath('model_path', cfg.model_path))
    atm = tuple(artifact.meta.get('atm_columns', cfg.atm_channels))
    date_range = config.date_range(cfg)
    weather = _weather(cfg, ingest.FULL_CIRCLE, date_range)
    traj = load_trajectory(cfg)
    dataset = ingest.assemble_dataset(weather, traj, date_range, atm, scaler=artifact.scaler)
    return Replay(artifact, dataset, weather)


def _warn_empty_years(cfg: RunConfig, summaries: Sequence[analysis.SectorEmissionSummary]) -> None:
    start, end = config.date_range(cfg)
    totals = {}
    for s in summaries:
        totals[s.year] = totals.get(s.year, 0.0) + s.tonnes
    for year in range(start.year, end.year + 1):
        if totals.get(year, 0.0) <= 0.0:
            logger.warning('No emissions attributed in %d', year)


def run_track(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    data = replay(cfg)
    daily = data.emissions()
    summaries, _ = analysis.yearly_sector_emissions(data.dataset.dates, data.wind_direction, daily, cfg.sector_width)
    _warn_empty_years(cfg, summaries)

    frame = analysis.summaries_to_frame(summaries)
    outputs = {'sectors': _write_csv(frame, directory / SECTORS_FILE)}
    for year in sorted({s.year for s in summaries}):
        part = [s for s in summaries if s.year == year]
        outputs[f'sectors_{year}'] = _write_csv(analysis.summaries_to_frame(part), directory / f'sectors_{year}.csv')
        if options.plot:
            outputs[f'rose_{year}'] = plotting.sector_rose(part, directory / f'sectors_{year}.svg')
    if options.excel and len(frame):
        outputs['excel'] = excel.write_report(frame, directory / 'sectors.xlsx', SECTOR_TABLES)

    if summaries:
        peak = max(summaries, key=lambda s: s.tonnes)
        logger.info('Peak sector %g-%g deg in %d with %.6g tonnes', peak.start_deg, peak.end_deg, peak.year, peak.tonnes)
    inputs = _inputs(cfg, 'model_path', 'station_csv', 'trajectory_csv', 'diluent_csv')
    return _finish(cfg, 'track', directory, outputs, inputs)


def target_scenario(cfg: RunConfig, data: Replay) -> analysis.TargetScenario:
    """Current sector emissions against those implied by a shifted concentration mean."""

    dates, direction = data.dataset.dates, data.wind_direction
    current, _ = analysis.yearly_sector_emissions(dates, direction, data.emissions(), cfg.sector_width)

    shifted = analysis.shift_to_target_mean(data.dataset.raw(CH4), cfg.target_ppm)
    scaled = data.artifact.scaler.scale(CH4, shifted)
    target, _ = analysis.yearly_sector_emissions(dates, direction, data.emissions(scaled), cfg.sector_width)
    return analysis.reduction_table(current, target, cfg.target_ppm)


def run_target(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    scenario = target_scenario(cfg, replay(cfg))
    outputs = {'scenario': _write_csv(scenario.table, directory / SCENARIO_FILE)}
    if options.excel and len(scenario.table):
        outputs['excel'] = excel.write_report(scenario.table, directory / 'scenario.xlsx', SCENARIO_TABLES)

    logger.info('Target %.4g ppm: %.2f%% total reduction', scenario.target_ppm, scenario.total_reduction_pct)
    if cfg.reduction_range:
        lo, hi = cfg.reduction_range
        logger.info('Sectors %g-%g deg: %.2f%% reduction', lo, hi, analysis.sector_range_reduction(scenario, lo, hi))
    inputs = _inputs(cfg, 'model_path', 'station_csv', 'trajectory_csv', 'diluent_csv')
    return _finish(cfg, 'target', directory, outputs, inputs)


def run_synth(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    output = synthgen.generate(config.synth_config(cfg), config.kinetics_params(cfg))
    station, diluent, truth = synthgen.write(output, directory)
    trajectory = directory / TRAJECTORY_FILE
    mechanistic.write_trajectory(output.trajectory, trajectory)

    dates = pd.DatetimeIndex(pd.to_datetime(output.truth['date']))
    yearly = training.yearly_totals(dates, output.truth['q_tonnes_per_day'].to_numpy())
    reported = pd.DataFrame({'year': yearly.index.astype(int), 'tonnes': yearly.to_numpy()})
    outputs = {
        'station': station,
        'diluent': diluent,
        'truth': truth,
        'trajectory': trajectory,
        'reported': _write_csv(reported, directory / REPORTED_FILE),
    }
    return _finish(cfg, 'synth', directory, outputs, {})


def holdout_time(dates: pd.DatetimeIndex, start: str, end: str) -> np.ndarray:
    """Time coordinate continuing the training range's ``[0, 1]`` beyond its end."""

    start, end = pd.Timestamp(start), pd.Timestamp(end)
    span = max((end - start).days, 1)
    return (dates - start).days.to_numpy(dtype=float) / span


def run_eval(cfg: RunConfig, options: Options = Options()) -> RunResult:
    directory = _output_dir(cfg)
    artifact = artifacts.load_model(validate_filepath('model_path', cfg.model_path))
    meta = artifact.meta
    sector = tuple(meta.get('sector', config.sector(cfg)))
    date_range = config.eval_range(cfg)

    weather = _weather(cfg, sector, date_range)
    traj = load_trajectory(cfg)
    atm = tuple(meta.get('atm_columns', cfg.atm_channels))
    dataset = ingest.assemble_dataset(weather, traj, date_range, atm, scaler=artifact.scaler)
    if 'start_date' in meta and 'end_date' in meta:
        dataset = dataset.with_column(T, holdout_time(dataset.dates, meta['start_date'], meta['end_date']))

    scaler = artifact.scaler
    out = evaluate(artifact.params, dataset.x, dataset.x_atm)
    predictions = pd.DataFrame({
        'date': dataset.dates.strftime('%Y-%m-%d'),
        'u_true': dataset.raw(CH4),
        'u_pred': scaler.unscale(CH4, out.u_hat),
        'q_true': dataset.raw(Q),
        'q_pred': scaler.unscale(Q, out.q_hat),
    })
    metrics = {
        'rows': int(dataset.n_rows),
        're_u': analysis.relative_error(predictions['u_true'], predictions['u_pred']),
        're_q': analysis.relative_error(predictions['q_true'], predictions['q_pred']),
    }
    if artifact.params.kind.constrained:
        measured = estimate_emissions_measured(artifact.params, dataset.u, dataset.x_atm, scaler)
        metrics['re_q_measured'] = analysis.relative_error(predictions['q_true'], measured)
    logger.info('Hold-out relative error: concentration %.4g, emission %.4g', metrics['re_u'], metrics['re_q'])

    outputs = {'predictions': _write_csv(predictions, directory / PREDICTIONS_FILE)}
    path = directory / EVAL_FILE
    try:
        path.write_text(json.dumps(metrics, indent=2, sort_keys=True))
    except OSError:
        raise errors.WriteFileError(path) from None
    outputs['metrics'] = path
    inputs = _inputs(cfg, 'model_path', 'station_csv', 'trajectory_csv', 'diluent_csv')
    return _finish(cfg, 'eval', directory, outputs, inputs)


COMMANDS = {
    'simulate': run_simulate,
    'prepare': run_prepare,
    'train': run_train,
    'track': run_track,
    'target': run_target,
    'synth': run_synth,
    'eval': run_eval,
}
