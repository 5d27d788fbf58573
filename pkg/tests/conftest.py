import io

import pandas as pd
import pytest

from src import ingest, mechanistic, synthgen
from src.formulations import Architecture


TINY = Architecture(
    u_hidden=(8, 8),
    reverse_u_hidden=(8, 8),
    phi_hidden=(6,),
    nn_hidden=(8, 8),
)

SMALL_RANGE = (pd.Timestamp('2020-01-01'), pd.Timestamp('2020-06-30'))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the end-to-end recovery tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long end-to-end runs, skipped unless --runslow is given')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


def as_stream(frame: pd.DataFrame) -> io.StringIO:
    """CSV text of a frame, as a file-like object."""

    stream = io.StringIO()
    frame.to_csv(stream, index=False)
    stream.seek(0)
    return stream


def read_csv_text(text: str) -> io.StringIO:
    return io.StringIO('\n'.join(line.strip() for line in text.strip().splitlines()))


@pytest.fixture(scope='session')
def synth_small() -> synthgen.SynthOutput:
    cfg = synthgen.SynthConfig(start='2020-01-01', end='2020-06-30', samples_per_day=4)
    return synthgen.generate(cfg)


@pytest.fixture(scope='session')
def small_dataset(synth_small) -> ingest.Dataset:
    station = ingest.parse_station_csv(as_stream(synth_small.station))
    weather = ingest.prepare_weather(station, ingest.FULL_CIRCLE, SMALL_RANGE)
    return ingest.assemble_dataset(weather, synth_small.trajectory, SMALL_RANGE)


@pytest.fixture
def synth_dir(tmp_path, synth_small):
    directory = tmp_path / 'synth'
    synthgen.write(synth_small, directory)
    mechanistic.write_trajectory(synth_small.trajectory, directory / 'trajectory.csv')
    return directory
