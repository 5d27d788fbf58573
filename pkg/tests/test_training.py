import json

import numpy as np
import pandas as pd
import pytest

from conftest import TINY
from src import errors, ingest, training
from src.formulations import ModelKind, init_model
from src.training import SGDState, TrainConfig, TrainReport, TrainedModel


FAST = TrainConfig(
    lam=1.0,
    learning_rates=(1e-2,),
    weight_decay=0.0,
    iterations=40,
    seeds=(0,),
    architecture=TINY,
    log_every=0,
)


@pytest.fixture(scope='module')
def split(small_dataset):
    return ingest.chronological_split(small_dataset, 0.8)


def background_model(dataset: ingest.Dataset, seed: int, bias: float) -> TrainedModel:
    """A reverse model whose scaled emission is ``bias`` on every day."""

    params = init_model(
        ModelKind.REVERSE, len(dataset.feature_columns), len(dataset.atm_columns), dataset.t_index, TINY, seed,
    )
    for array in params.phi_net.parameters():
        array[...] = 0.0
    params.phi_net.layers[-1].bias[...] = bias
    empty = np.zeros(0)
    return TrainedModel(params, TrainReport(ModelKind.REVERSE, seed, 1e-2, empty, empty, empty, {}))


def test_sgd_step_examples():
    cfg = TrainConfig(learning_rates=(0.1,), momentum=0.9, weight_decay=0.0)

    params = [np.array([1.0, -2.0])]
    training.sgd_step(params, [np.zeros(2)], training.init_state(params), cfg)
    np.testing.assert_array_equal(params[0], [1.0, -2.0])

    params = [np.array([0.0])]
    training.sgd_step(params, [np.array([2.0])], training.init_state(params), cfg)
    np.testing.assert_allclose(params[0], [-0.2])


def test_sgd_quadratic_bowl():
    cfg = TrainConfig(learning_rates=(0.01,), momentum=0.9, weight_decay=0.0)
    w = [np.array([1.0])]
    state = training.init_state(w)
    for _ in range(300):
        training.sgd_step(w, [2.0 * w[0]], state, cfg)
    assert abs(w[0][0]) < 1e-3


def test_sgd_pure_decay_is_geometric():
    cfg = TrainConfig(learning_rates=(0.1,), momentum=0.0, weight_decay=0.5)
    w = [np.array([4.0])]
    state = training.init_state(w)
    for _ in range(5):
        training.sgd_step(w, [np.zeros(1)], state, cfg)
    assert w[0][0] == pytest.approx(4.0 * 0.95 ** 5, rel=1e-12)


def test_sgd_step_errors():
    cfg = TrainConfig()
    params = [np.array([1.0])]
    with pytest.raises(errors.DivergenceError):
        training.sgd_step(params, [np.array([np.nan])], training.init_state(params), cfg)
    with pytest.raises(errors.ShapeError):
        training.sgd_step(params, [np.zeros(2)], training.init_state(params), cfg)
    with pytest.raises(errors.ShapeError):
        training.sgd_step(params, [], SGDState([]), cfg)


def test_validate_config():
    test_cases = [
        FAST._replace(lam=-1.0),
        FAST._replace(momentum=1.0),
        FAST._replace(iterations=0),
        FAST._replace(learning_rates=()),
        FAST._replace(learning_rates=(0.1, -0.1)),
        FAST._replace(weight_decay=-1.0),
        FAST._replace(batch_size=0),
    ]
    for cfg in test_cases:
        with pytest.raises(errors.ConfigError):
            training.validate_config(cfg)


def test_train_is_deterministic(split):
    train_set, validation = split
    first = training.train(ModelKind.REVERSE, train_set, validation, FAST, seed=3)
    second = training.train(ModelKind.REVERSE, train_set, validation, FAST, seed=3)
    np.testing.assert_array_equal(first.report.total_loss, second.report.total_loss)
    for a, b in zip(first.params.parameters(), second.params.parameters()):
        np.testing.assert_array_equal(a, b)


def test_train_reduces_loss(split):
    train_set, validation = split
    for kind in ModelKind:
        report = training.train(kind, train_set, validation, FAST).report
        assert len(report.total_loss) == FAST.iterations
        assert np.all(np.isfinite(report.total_loss))
        assert report.total_loss[-1] <= report.total_loss[0]
        assert {'re_u_train', 're_u_val'}.issubset(report.metrics)


def test_train_minibatch(split):
    train_set, validation = split
    cfg = FAST._replace(batch_size=16, iterations=10)
    report = training.train(ModelKind.FORWARD, train_set, validation, cfg).report
    assert len(report.total_loss) == 10


def test_sparse_poly_has_no_small_coefficients(split):
    train_set, validation = split
    cfg = FAST._replace(sparse=True)
    model = training.train(ModelKind.POLY, train_set, validation, cfg)
    small = (np.abs(model.params.coeffs) > 0) & (np.abs(model.params.coeffs) < 1e-4)
    assert not small.any()


def test_sweep_inline(split):
    train_set, validation = split
    cfg = FAST._replace(iterations=5, seeds=(0, 1), workers=1)
    candidates = training.sweep(ModelKind.RNN_MOD, train_set, validation, cfg)
    assert [c.report.seed for c in candidates] == [0, 1]


def test_select_model(small_dataset):
    biases = {0: 0.2, 1: 0.5, 2: 0.9}
    candidates = [background_model(small_dataset, seed, b) for seed, b in biases.items()]
    low, span = small_dataset.scaler.column(ingest.Q)
    days = small_dataset.n_rows
    reported = {2020: days * (low + span * 0.5)}

    best, scores = training.select_model(candidates, small_dataset, reported)
    assert best.report.seed == 1
    for seed, bias in biases.items():
        assert scores[seed] == pytest.approx(days * span * abs(bias - 0.5), rel=1e-9, abs=1e-8)

    best, _ = training.select_model(candidates[2:], small_dataset, reported)
    assert best.report.seed == 2


def test_select_model_ties_go_to_lowest_seed(small_dataset):
    candidates = [background_model(small_dataset, seed, 0.4) for seed in (5, 2, 7)]
    best, _ = training.select_model(candidates, small_dataset, {2020: 0.0})
    assert best.report.seed == 2


def test_select_model_errors(small_dataset):
    candidate = background_model(small_dataset, 0, 0.1)
    with pytest.raises(errors.EmptyInputError):
        training.select_model([], small_dataset, {2020: 1.0})
    with pytest.raises(errors.EmptyInputError):
        training.select_model([candidate], small_dataset, {})
    with pytest.raises(errors.AlignmentError):
        training.select_model([candidate], small_dataset, {2019: 1.0})


def test_best_by_validation(split):
    train_set, validation = split
    truth_bias = float(np.mean(validation.u))
    near = background_model(validation, 4, 0.0)
    far = background_model(validation, 1, 0.0)
    # only u_net matters for the validation loss
    for net, value in ((near.params.u_net, truth_bias), (far.params.u_net, truth_bias + 5.0)):
        for array in net.parameters():
            array[...] = 0.0
        net.layers[-1].bias[...] = value
    assert training.best_by_validation([far, near], validation).report.seed == 4
    assert training.best_by_validation([far, near], None).report.seed == 1


def test_yearly_totals():
    dates = pd.date_range('2020-12-30', periods=4)
    totals = training.yearly_totals(dates, [1.0, 2.0, 3.0, 4.0])
    assert totals.to_dict() == {2020: 3.0, 2021: 7.0}


def test_read_reported_emissions(tmp_path):
    path = tmp_path / 'reported.csv'
    path.write_text('year,tonnes\n2020,120.5\n2021,99\n')
    assert training.read_reported_emissions(path) == {2020: 120.5, 2021: 99.0}

    test_cases = [
        ['year,amount\n2020,1\n', errors.FormatError],
        ['year,tonnes\n2020,1\n2020,2\n', errors.FormatError],
        ['', errors.EmptyInputError],
    ]
    for text, error in test_cases:
        path.write_text(text)
        with pytest.raises(error):
            training.read_reported_emissions(path)
    with pytest.raises(errors.OpenFileError):
        training.read_reported_emissions(tmp_path / 'missing.csv')


def test_write_report(tmp_path, split):
    train_set, validation = split
    report = training.train(ModelKind.REVERSE, train_set, validation, FAST._replace(iterations=3)).report
    history, summary = training.write_report(report, tmp_path / 'out')

    frame = pd.read_csv(history)
    assert tuple(frame.columns) == training.REPORT_COLUMNS
    assert frame['epoch'].tolist() == [1, 2, 3]
    content = json.loads(summary.read_text())
    assert content['kind'] == 'reverse'
    assert content['epochs'] == 3
    assert content['final_total_loss'] == pytest.approx(report.total_loss[-1])


def test_lambda_sweep_and_compare(split):
    train_set, validation = split
    cfg = FAST._replace(iterations=5)
    table = training.lambda_sweep(ModelKind.FORWARD, train_set, validation, cfg, (0.1, 1.0))
    assert list(table.columns) == ['lambda', 'learning_rate', 'data_loss', 'constraint_residual', 'total_loss']
    assert table['lambda'].tolist() == [0.1, 1.0]
    assert table['learning_rate'].tolist() == [1e-2, 1e-2]

    table = training.compare_models((ModelKind.REVERSE, ModelKind.NN), train_set, validation, cfg)
    assert table['model'].tolist() == ['reverse', 'nn']
    assert {'re_u_avg', 're_q_avg', 're_u_train', 're_q_val'}.issubset(table.columns)


def test_lambda_sweep_falls_back_on_divergence(split, monkeypatch):
    train_set, validation = split
    real_train = training.train
    attempts = []

    def unstable_train(kind, train_set, validation, cfg, seed, lr):
        attempts.append((cfg.lam, lr))
        if cfg.lam >= 100.0 and (lr > training.FALLBACK_LEARNING_RATE or cfg.lam > 100.0):
            raise errors.DivergenceError(3)
        return real_train(kind, train_set, validation, cfg, seed, lr)

    monkeypatch.setattr(training, 'train', unstable_train)
    cfg = FAST._replace(iterations=5)
    table = training.lambda_sweep(ModelKind.FORWARD, train_set, validation, cfg, (1.0, 100.0, 1000.0))

    assert attempts == [(1.0, 1e-2), (100.0, 1e-2), (100.0, 1e-3), (1000.0, 1e-2), (1000.0, 1e-3)]
    assert table['lambda'].tolist() == [1.0, 100.0, 1000.0]
    test_cases = [
        [0, 1e-2],
        [1, 1e-3],
    ]
    for row, rate in test_cases:
        assert table['learning_rate'].iloc[row] == rate
        assert np.isfinite(table['constraint_residual'].iloc[row])
    assert table.iloc[2][['learning_rate', 'data_loss', 'constraint_residual', 'total_loss']].isna().all()


def test_lambda_sweep_keeps_rate_grid_order(split):
    train_set, validation = split
    cfg = FAST._replace(iterations=5, learning_rates=(1e-3, 5e-3))
    table = training.lambda_sweep(ModelKind.REVERSE, train_set, validation, cfg, (1.0,))
    assert table['learning_rate'].tolist() == [1e-3]
