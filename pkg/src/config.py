"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Every key is declared once in ``KEYS`` with its default and a description,
which is also what ``--help`` prints. Values are parsed by the type of
their default: lists are comma separated, booleans accept yes/no/true/false.
"""

import configparser
import logging
import os

from typing import Any, Callable, Dict, Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd

from . import errors
from .formulations import Architecture, ModelKind
from .ingest import DEFAULT_ATM_CHANNELS, FULL_CIRCLE, STATION_SECTORS
from .mechanistic import KineticsModel, KineticsParams
from .netcore import Activation
from .synthgen import SynthConfig
from .training import TrainConfig


logger = logging.getLogger(__name__)

SECTION = 'run'


class Key(NamedTuple):
    name: str
    default: Any
    help: str
    parse: Callable[[str], Any]


def _text(value: str) -> str:
    return value.strip()


def _floats(value: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in value.split(',') if v.strip())


def _ints(value: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in value.split(',') if v.strip())


def _texts(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(',') if v.strip())


def _seeds(value: str) -> Tuple[int, ...]:
    """``0,1,2`` or a range ``0-9``."""

    value = value.strip()
    if '-' in value and ',' not in value:
        lo, hi = value.split('-', 1)
        return tuple(range(int(lo), int(hi) + 1))
    return _ints(value)


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'yes', 'true', 'on'):
        return True
    if lowered in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError(f'not a boolean: {value!r}')


KEYS = (
    # inputs and outputs
    Key('station_csv', '', 'hourly station observations CSV', _text),
    Key('diluent_csv', '', 'monthly diluent report CSV (year,month,hydrocarbon,tonnes)', _text),
    Key('trajectory_csv', '', 'simulated pond trajectory CSV; produced by "simulate"', _text),
    Key('dataset_csv', '', 'scaled daily dataset CSV; produced by "prepare"', _text),
    Key('model_path', '', 'trained model archive (.npz); produced by "train"', _text),
    Key('reported_emissions_csv', '', 'reported yearly emissions (year,tonnes) used for model selection', _text),
    Key('output_dir', 'runs/latest', 'run directory receiving all outputs, the manifest and config.ini', _text),
    # station and calendar
    Key('station', 'mannix', f'station preset for the wind sector: {", ".join(sorted(STATION_SECTORS))}', _text),
    Key('sector', (), 'explicit wind sector "lo,hi" in degrees; overrides the preset; equal bounds keep every direction', _floats),
    Key('start_date', '2020-01-01', 'first day of the modelled range', _text),
    Key('end_date', '2022-12-31', 'last day of the modelled range', _text),
    Key('eval_start_date', '2023-01-01', 'first day of the hold-out range used by "eval"', _text),
    Key('eval_end_date', '2023-12-31', 'last day of the hold-out range used by "eval"', _text),
    Key('atm_channels', DEFAULT_ATM_CHANNELS, 'atmospheric input channels', _texts),
    Key('train_fraction', 0.8, 'chronological share of rows used for training', float),
    # mechanistic model
    Key('species', ('diluent',), 'hydrocarbon species, in state order', _texts),
    Key('fft_fraction', 1.0, 'share of the company diluent total flowing into this pond', float),
    Key('kinetics', KineticsModel.FIRST_ORDER.value, 'kinetics family: first-order or monod', _text),
    Key('decay_rates', (0.05,), 'first-order decay rate per species (1/day)', _floats),
    Key('v_max', (0.0,), 'Monod maximum uptake per species', _floats),
    Key('half_saturation', (1.0,), 'Monod half-saturation per species (tonnes)', _floats),
    Key('biomass_yield', 0.0, 'biomass produced per tonne degraded', float),
    Key('biomass_death_rate', 0.0, 'biomass decay rate (1/day)', float),
    Key('methane_factors', (0.3,), 'tonnes CH4 per tonne degraded, per species', _floats),
    Key('initial_mass', (), 'initial hydrocarbon mass per species (tonnes); empty means zero', _floats),
    Key('initial_biomass', 0.0, 'initial biomass (tonnes), Monod only', float),
    Key('substeps', 10, 'Runge-Kutta sub-steps per simulated day', int),
    # model and training
    Key('model_kind', ModelKind.REVERSE.value, 'model: forward, reverse, poly, rnn_mod or nn', _text),
    Key('lam', 1.0, 'penalty weight of the constraint residual', float),
    Key('lambda_grid', (), 'penalty weights for the residual table written by "train"', _floats),
    Key('compare_kinds', (), 'model kinds for the comparison table written by "train"', _texts),
    Key('learning_rates', (1e-2, 1e-3), 'learning-rate grid tried per seed', _floats),
    Key('momentum', 0.9, 'heavy-ball momentum', float),
    Key('weight_decay', 1e-3, 'L2 weight decay', float),
    Key('iterations', 10000, 'training iterations per run', int),
    Key('batch_size', 0, 'rows per mini-batch; 0 trains full-batch', int),
    Key('seeds', tuple(range(10)), 'seeds of the sweep, as "0,1,2" or "0-9"', _seeds),
    Key('sparse', False, 'zero emission-head parameters below the threshold after each step', _bool),
    Key('threshold', 1e-4, 'hard threshold of the sparse mode', float),
    Key('workers', 1, 'processes used by the seed sweep', int),
    Key('u_hidden', (500, 500, 500), 'hidden widths of the concentration network (forward, poly, rnn_mod)', _ints),
    Key('reverse_u_hidden', (500, 500), 'hidden widths of the concentration network (reverse)', _ints),
    Key('phi_hidden', (200, 200), 'hidden widths of the emission network', _ints),
    Key('nn_hidden', (500, 500, 500, 500), 'hidden widths of the unconstrained baseline', _ints),
    Key('activation', Activation.TANH.value, 'hidden activation: tanh, sigmoid or relu', _text),
    Key('log_every', 1000, 'iterations between progress log lines', int),
    # analysis
    Key('sector_width', 20.0, 'width of the attribution sectors (degrees)', float),
    Key('target_ppm', 1.75, 'target mean concentration of the scenario (ppm)', float),
    Key('reduction_range', (), 'sector range "lo,hi" whose aggregate reduction is logged by "target"', _floats),
    # synthetic data
    Key('synth_seed', 0, 'seed of the synthetic generator', int),
    Key('synth_start', '2020-01-01', 'first synthetic day', _text),
    Key('synth_end', '2022-12-31', 'last synthetic day', _text),
    Key('synth_source_bearing', 310.0, 'bearing of the synthetic source (degrees)', float),
    Key('synth_gain', 0.25, 'dispersion gain (ppm per tonne/day)', float),
    Key('synth_background', 1.9, 'background concentration (ppm)', float),
    Key('synth_noise', 0.02, 'standard deviation of reading noise (ppm)', float),
    Key('synth_source_probability', 0.4, 'share of days with wind from the source', float),
    Key('synth_samples_per_day', 24, 'readings per synthetic day', int),
    Key('synth_monthly_diluent', 60.0, 'mean monthly diluent total (tonnes)', float),
)

_BY_NAME = {key.name: key for key in KEYS}

RunConfig = NamedTuple('RunConfig', [(key.name, type(key.default)) for key in KEYS])
RunConfig.__new__.__defaults__ = tuple(key.default for key in KEYS)
RunConfig.__doc__ = 'Every setting of a run; see ``KEYS`` for meanings.'


def parse_value(name: str, raw: str) -> Any:
    try:
        key = _BY_NAME[name]
    except KeyError:
        raise errors.ConfigError(f'Unknown configuration key "{name}".') from None
    try:
        return key.parse(raw)
    except ValueError as error:
        raise errors.ConfigError(f'Bad value for "{name}": {raw!r} ({error}).') from None


def parse_text(text: str, source: str = '<config>') -> Dict[str, Any]:
    """Parses flat ``key = value`` lines; ``#`` starts a comment."""

    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#', ';'), inline_comment_prefixes=('#',))
    parser.optionxform = str
    try:
        parser.read_string(f'[{SECTION}]\n' + text, source=source)
    except configparser.Error as error:
        raise errors.ConfigError(f'Cannot parse {source}: {error.message}') from None
    return {name: parse_value(name, raw) for name, raw in parser.items(SECTION)}


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    values = {}
    for pair in pairs:
        name, sep, raw = pair.partition('=')
        if not sep:
            raise errors.ConfigError(f'Override "{pair}" is not of the form key=value.')
        values[name.strip()] = parse_value(name.strip(), raw)
    return values


def load(path: Union[str, os.PathLike, None] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Merges defaults, the config file and overrides, later ones winning."""

    values: Dict[str, Any] = {}
    if path:
        try:
            with open(path, encoding='utf-8') as handle:
                text = handle.read()
        except FileNotFoundError:
            raise errors.OpenFileError(path) from None
        values.update(parse_text(text, str(path)))
    values.update(parse_overrides(overrides))
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ','.join(_format(v) for v in value)
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump(cfg: RunConfig) -> str:
    """Serializes every key, defaults included, so the file alone reproduces the run."""

    return ''.join(f'{name} = {_format(value)}\n' for name, value in cfg._asdict().items())


def describe() -> str:
    width = max(len(key.name) for key in KEYS)
    return '\n'.join(f'  {key.name:<{width}}  {key.help} (default: {_format(key.default) or "-"})' for key in KEYS)


def validate(cfg: RunConfig) -> None:
    for name, enum in (('kinetics', KineticsModel), ('model_kind', ModelKind), ('activation', Activation)):
        value = getattr(cfg, name)
        if value not in {member.value for member in enum}:
            raise errors.ConfigError(f'"{name}" must be one of {[m.value for m in enum]}, got "{value}".')
    for kind in cfg.compare_kinds:
        if kind not in {member.value for member in ModelKind}:
            raise errors.ConfigError(f'Unknown model kind "{kind}" in "compare_kinds".')
    if cfg.sector and len(cfg.sector) != 2:
        raise errors.ConfigError('"sector" needs exactly two bounds "lo,hi".')
    if cfg.reduction_range and len(cfg.reduction_range) != 2:
        raise errors.ConfigError('"reduction_range" needs exactly two bounds "lo,hi".')
    if not cfg.sector and cfg.station not in STATION_SECTORS:
        raise errors.ConfigError(f'Unknown station "{cfg.station}"; give "sector" explicitly.')
    if not 0.0 < cfg.train_fraction < 1.0:
        raise errors.ConfigError(f'"train_fraction" must be in (0, 1), got {cfg.train_fraction}.')
    if cfg.substeps < 1:
        raise errors.ConfigError('"substeps" must be at least 1.')
    if cfg.sector_width <= 0 or (360.0 / cfg.sector_width) % 1:
        raise errors.ConfigError(f'"sector_width" must divide 360, got {cfg.sector_width}.')
    try:
        for name in ('start_date', 'end_date', 'eval_start_date', 'eval_end_date', 'synth_start', 'synth_end'):
            pd.Timestamp(getattr(cfg, name))
    except ValueError:
        raise errors.ConfigError(f'"{name}" is not a date: "{getattr(cfg, name)}".') from None
    if pd.Timestamp(cfg.end_date) < pd.Timestamp(cfg.start_date):
        raise errors.ConfigError('"end_date" precedes "start_date".')


def sector(cfg: RunConfig) -> Tuple[float, float]:
    if cfg.sector:
        return float(cfg.sector[0]), float(cfg.sector[1])
    return STATION_SECTORS.get(cfg.station, FULL_CIRCLE)


def date_range(cfg: RunConfig) -> Tuple[pd.Timestamp, pd.Timestamp]:
    return pd.Timestamp(cfg.start_date), pd.Timestamp(cfg.end_date)


def eval_range(cfg: RunConfig) -> Tuple[pd.Timestamp, pd.Timestamp]:
    return pd.Timestamp(cfg.eval_start_date), pd.Timestamp(cfg.eval_end_date)


def kinetics_params(cfg: RunConfig) -> KineticsParams:
    return KineticsParams(
        model_kind=KineticsModel(cfg.kinetics),
        species=cfg.species,
        decay_rates=cfg.decay_rates,
        v_max=cfg.v_max,
        half_saturation=cfg.half_saturation,
        biomass_yield=cfg.biomass_yield,
        biomass_death_rate=cfg.biomass_death_rate,
        methane_factors=cfg.methane_factors,
    )


def architecture(cfg: RunConfig) -> Architecture:
    return Architecture(
        u_hidden=cfg.u_hidden,
        reverse_u_hidden=cfg.reverse_u_hidden,
        phi_hidden=cfg.phi_hidden,
        nn_hidden=cfg.nn_hidden,
        activation=Activation(cfg.activation),
    )


def train_config(cfg: RunConfig, lam: Optional[float] = None) -> TrainConfig:
    return TrainConfig(
        lam=cfg.lam if lam is None else lam,
        learning_rates=cfg.learning_rates,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        iterations=cfg.iterations,
        batch_size=cfg.batch_size or None,
        seeds=cfg.seeds,
        sparse=cfg.sparse,
        threshold=cfg.threshold,
        workers=cfg.workers,
        architecture=architecture(cfg),
        log_every=cfg.log_every,
    )


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(
        seed=cfg.synth_seed,
        start=cfg.synth_start,
        end=cfg.synth_end,
        source_bearing=cfg.synth_source_bearing,
        gain=cfg.synth_gain,
        background=cfg.synth_background,
        noise=cfg.synth_noise,
        source_probability=cfg.synth_source_probability,
        samples_per_day=cfg.synth_samples_per_day,
        monthly_diluent=cfg.synth_monthly_diluent,
        fft_fraction=cfg.fft_fraction,
    )
