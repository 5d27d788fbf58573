import numpy as np
import pandas as pd
import pytest

from conftest import as_stream, read_csv_text
from src import errors, ingest, mechanistic
from src.ingest import CH4, WIND_DIR, WIND_SPEED, DailySeries


def station_rows(days: int, per_day: int = 24, direction: float = 310.0, start: str = '2020-01-01') -> pd.DataFrame:
    stamps = pd.date_range(start, periods=days * per_day, freq=pd.Timedelta(hours=24 / per_day))
    n = len(stamps)
    return pd.DataFrame({
        'timestamp': stamps.strftime('%Y-%m-%dT%H:%M:%SZ'),
        WIND_DIR: np.full(n, direction),
        WIND_SPEED: np.linspace(1.0, 5.0, n),
        'temp_c': np.linspace(-10.0, 20.0, n),
        'solar_wm2': np.linspace(0.0, 300.0, n),
        CH4: np.linspace(1.9, 2.5, n),
    })


def test_parse_station_csv():
    stream = read_csv_text("""
        timestamp,wind_dir_deg,wind_speed_ms,temp_c,solar_wm2,ch4_ppm
        2020-01-01T00:00:00Z,370,2.0,1.0,0,1.95
        2020-01-01T01:00:00Z,,2.0,1.0,0,1.95
        not-a-date,100,2.0,1.0,0,1.95
        2020-01-01T02:00:00Z,-20,2.0,,0,1.95
    """)
    station = ingest.parse_station_csv(stream)
    assert station.dropped == 2
    assert len(station.frame) == 2
    np.testing.assert_allclose(station.frame[WIND_DIR], [10.0, 340.0])
    assert station.frame['temp_c'].isna().sum() == 1


def test_parse_station_csv_errors(tmp_path):
    test_cases = [
        ["""
            timestamp,ch4_ppm
            2020-01-01T00:00:00Z,1.9
        """, errors.FormatError],
        ["""
            timestamp,wind_dir_deg
        """, errors.EmptyInputError],
        ["""
            timestamp,wind_dir_deg
            2020-01-01T01:00:00Z,10
            2020-01-01T00:00:00Z,10
        """, errors.FormatError],
        ["""
            timestamp,wind_dir_deg
            2020-01-01T01:00:00Z,x
        """, errors.EmptyInputError],
    ]
    for text, error in test_cases:
        with pytest.raises(error):
            ingest.parse_station_csv(read_csv_text(text))
    with pytest.raises(errors.OpenFileError):
        ingest.parse_station_csv(tmp_path / 'missing.csv')


def test_in_sector():
    test_cases = [
        [(300, 320), [299.9, 300.0, 310.0, 319.99, 320.0], [False, True, True, True, False]],
        [(350, 10), [349.0, 350.0, 359.9, 0.0, 9.9, 10.0], [False, True, True, True, True, False]],
        [(0, 0), [0.0, 90.0, 359.0], [True, True, True]],
    ]
    for (lo, hi), directions, expected in test_cases:
        assert ingest.in_sector(np.array(directions), lo, hi).tolist() == expected


def test_filter_by_wind_sector_bounds():
    frame = pd.DataFrame({WIND_DIR: [10.0]})
    with pytest.raises(errors.ValidationError):
        ingest.filter_by_wind_sector(frame, 300.0, 360.0)


def test_filter_by_wind_sector_is_idempotent():
    rows = station_rows(2, per_day=12)
    rows[WIND_DIR] = np.linspace(0.0, 359.0, len(rows))
    station = ingest.parse_station_csv(as_stream(rows))

    test_cases = [(300.0, 320.0), (350.0, 10.0), (160.0, 180.0), (0.0, 0.0)]
    for lo, hi in test_cases:
        once = ingest.filter_by_wind_sector(station.frame, lo, hi)
        twice = ingest.filter_by_wind_sector(once, lo, hi)
        pd.testing.assert_frame_equal(once, twice)


def test_daily_aggregate():
    rows = station_rows(3, per_day=4)
    rows.loc[rows.index[:4], WIND_DIR] = [350.0, 10.0, 350.0, 10.0]
    station = ingest.parse_station_csv(as_stream(rows))
    daily = ingest.daily_aggregate(station.frame)

    assert len(daily.values) == 3
    assert daily.values[WIND_DIR].iloc[0] == pytest.approx(0.0, abs=1e-9)
    assert daily.values[CH4].iloc[0] == pytest.approx(rows[CH4].iloc[:4].mean())
    assert not daily.filled.to_numpy().any()


def test_sector_filter_changes_daily_means():
    rows = station_rows(2, per_day=4)
    rows[WIND_DIR] = [310.0, 100.0, 310.0, 100.0] * 2
    rows[CH4] = [3.0, 2.0, 3.0, 2.0] * 2
    station = ingest.parse_station_csv(as_stream(rows))

    kept = ingest.filter_by_wind_sector(station.frame, 300.0, 320.0)
    daily = ingest.daily_aggregate(kept)
    np.testing.assert_allclose(daily.values[CH4], [3.0, 3.0])


def test_interpolate_gaps():
    index = pd.date_range('2020-01-01', periods=5, name='date')
    values = pd.DataFrame({CH4: [np.nan, 2.0, np.nan, 4.0, np.nan]}, index=index)
    series = DailySeries(values, pd.DataFrame(False, index=index, columns=values.columns))

    filled = ingest.interpolate_gaps(series, index[0], index[-1])
    np.testing.assert_allclose(filled.values[CH4], [2.0, 2.0, 3.0, 4.0, 4.0])
    assert filled.filled[CH4].tolist() == [True, False, True, False, True]


def test_interpolate_gaps_needs_two_values():
    index = pd.date_range('2020-01-01', periods=4, name='date')
    values = pd.DataFrame({CH4: [np.nan, 2.0, np.nan, np.nan]}, index=index)
    series = DailySeries(values, pd.DataFrame(False, index=index, columns=values.columns))
    with pytest.raises(errors.UninterpolatableChannelError):
        ingest.interpolate_gaps(series, index[0], index[-1])


def test_minmax_scale_constant_column():
    frame = pd.DataFrame({'a': [1.0, 3.0, 5.0], 'b': [7.0, 7.0, 7.0]})
    scaled, scaler = ingest.minmax_scale(frame)
    np.testing.assert_allclose(scaled['a'], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(scaled['b'], 0.0)
    np.testing.assert_allclose(scaler.inverse_transform(scaled), frame)


def test_assemble_dataset(synth_small):
    date_range = (pd.Timestamp('2020-01-01'), pd.Timestamp('2020-01-31'))
    station = ingest.parse_station_csv(as_stream(synth_small.station))
    weather = ingest.prepare_weather(station, ingest.FULL_CIRCLE, date_range)
    dataset = ingest.assemble_dataset(weather, synth_small.trajectory, date_range)

    assert dataset.n_rows == 31
    assert dataset.feature_columns == ('C_1',) + ingest.DEFAULT_ATM_CHANNELS + ('t',)
    assert dataset.t_index == len(dataset.feature_columns) - 1
    np.testing.assert_allclose(dataset.frame['t'], np.arange(31) / 30)
    scaled = dataset.frame[list(dataset.scaler.columns)].to_numpy()
    assert scaled.min() >= 0.0 and scaled.max() <= 1.0
    np.testing.assert_allclose(dataset.raw(CH4), weather.values[CH4].to_numpy(), rtol=1e-12)
    assert CH4 + ingest.FILLED_SUFFIX in dataset.frame.columns


def test_assemble_dataset_alignment(synth_small):
    station = ingest.parse_station_csv(as_stream(synth_small.station))
    date_range = (pd.Timestamp('2020-01-01'), pd.Timestamp('2020-01-31'))
    weather = ingest.prepare_weather(station, ingest.FULL_CIRCLE, date_range)
    short = mechanistic.MechanisticTrajectory(*(
        part[:20] for part in synth_small.trajectory
    ))
    with pytest.raises(errors.AlignmentError) as excinfo:
        ingest.assemble_dataset(weather, short, date_range)
    assert '2020-01-21' in str(excinfo.value)


def test_prepared_gaps_are_flagged():
    rows = station_rows(10, per_day=2)
    # day 3 and 4 without in-sector wind
    rows.loc[4:7, WIND_DIR] = 100.0
    station = ingest.parse_station_csv(as_stream(rows))
    date_range = (pd.Timestamp('2020-01-01'), pd.Timestamp('2020-01-10'))
    weather = ingest.prepare_weather(station, (300.0, 320.0), date_range)
    assert weather.filled[CH4].tolist() == [False, False, True, True] + [False] * 6
    assert not weather.values.isna().any().any()


def test_calendar_split():
    rows = station_rows(1096, per_day=1)
    station = ingest.parse_station_csv(as_stream(rows))
    date_range = (pd.Timestamp('2020-01-01'), pd.Timestamp('2022-12-31'))
    months = [(y, m, (50.0,)) for y in range(2020, 2023) for m in range(1, 13)]
    traj = mechanistic.simulate(mechanistic.DEMO_PARAMS, mechanistic.build_inflow_schedule(months, 1.0))

    weather = ingest.prepare_weather(station, ingest.STATION_SECTORS['mannix'], date_range)
    dataset = ingest.assemble_dataset(weather, traj, date_range)
    train, validation = ingest.chronological_split(dataset, 0.8)
    assert dataset.n_rows == 1096
    assert (train.n_rows, validation.n_rows) == (876, 220)
    assert train.dates[-1] < validation.dates[0]


def test_chronological_split_too_small(small_dataset):
    with pytest.raises(errors.ValidationError):
        ingest.chronological_split(small_dataset.subset(slice(0, 4)))


def test_dataset_file(tmp_path, small_dataset):
    path = tmp_path / 'dataset.csv'
    sidecar = ingest.write_dataset(small_dataset, path)
    assert sidecar.name == 'dataset.scaler.csv'
    assert list(pd.read_csv(sidecar).columns) == ['name', 'min', 'max', 'role']

    loaded = ingest.read_dataset(path)
    assert loaded.dil_columns == small_dataset.dil_columns
    assert loaded.atm_columns == small_dataset.atm_columns
    np.testing.assert_array_equal(loaded.x, small_dataset.x)
    np.testing.assert_array_equal(loaded.scaler.maxs, small_dataset.scaler.maxs)


def test_scaler_unknown_column(small_dataset):
    with pytest.raises(errors.ArtifactError):
        small_dataset.scaler.scale('pressure', [1.0])
