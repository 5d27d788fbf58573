"""Command-line surface: ``simulate | prepare | train | track | target | synth | eval``.

Settings come from defaults, then ``--config FILE``, then each ``--set
key=value``; the merged settings are written into the run directory.
"""

import argparse
import logging
import sys

from typing import Callable, Optional, Sequence

from . import config, core, errors
from .config import RunConfig
from .core import Options, RunResult
from .version import __version__, format_version


logger = logging.getLogger(__name__)


def cmd_simulate(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Trajectory CSV from the monthly diluent report."""
    return core.run_simulate(cfg, options)


def cmd_prepare(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Scaled daily dataset and its scaler from station data and a trajectory."""
    return core.run_prepare(cfg, options)


def cmd_train(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Seed sweep, model selection, model archive and training report."""
    return core.run_train(cfg, options)


def cmd_track(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Yearly emissions per wind sector from a trained model."""
    return core.run_track(cfg, options)


def cmd_target(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Per-sector reductions needed to reach the target mean concentration."""
    return core.run_target(cfg, options)


def cmd_synth(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Synthetic station data, diluent report and true emissions."""
    return core.run_synth(cfg, options)


def cmd_eval(cfg: RunConfig, options: Options = Options()) -> RunResult:
    """Hold-out relative errors and predictions of a trained model."""
    return core.run_eval(cfg, options)


COMMANDS = {
    'simulate': cmd_simulate,
    'prepare': cmd_prepare,
    'train': cmd_train,
    'track': cmd_track,
    'target': cmd_target,
    'synth': cmd_synth,
    'eval': cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pondflux',
        description='Methane emission estimation for tailings ponds.',
        epilog='configuration keys:\n' + config.describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {format_version(__version__)}')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', metavar='FILE', help='flat key = value configuration file')
    common.add_argument(
        '-s', '--set', dest='overrides', metavar='KEY=VALUE', action='append', default=[],
        help='override one configuration key; may be repeated',
    )
    common.add_argument('--plot', action='store_true', help='also write SVG charts (track)')
    common.add_argument('--excel', action='store_true', help='also write pivot workbooks (track, target)')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='log warnings and errors only')

    commands = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)
    for name, fn in COMMANDS.items():
        commands.add_parser(
            name, parents=[common], help=fn.__doc__.strip(), description=fn.__doc__.strip(),
            epilog='configuration keys:\n' + config.describe(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    return parser


def _log_level(args: argparse.Namespace) -> int:
    if args.verbose:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    return logging.INFO


def run(command: Callable[[RunConfig, Options], RunResult], args: argparse.Namespace) -> int:
    """Runs one command and maps program errors to exit codes."""

    try:
        cfg = config.load(args.config, args.overrides)
        logger.debug('Running "%s" with %s', args.command, cfg)
        command(cfg, Options(plot=args.plot, excel=args.excel))
    except errors.BaseError as error:
        logger.error('%s: %s', error.name, error)
        return error.exit_code
    except Exception as error:
        wrapped = errors.InternalError(error)
        logger.exception('Uncaught error! "%s"', wrapped)
        return wrapped.exit_code
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(_log_level(args))
    return run(COMMANDS[args.command], args)


if __name__ == '__main__':
    sys.exit(main())
