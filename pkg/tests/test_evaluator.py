import numpy as np
import pytest

from colstsm.cells import Model, SequencePair, init_params, param_shapes
from colstsm.evaluator import (Metrics, confusion_matrix, evaluate, observation_curve, predict,
                               predict_batch, prefix_length)
from colstsm.numkernel import Prng
from colstsm.synthdata import GenConfig, generate_dataset


@pytest.fixture(scope="module")
def data():
    return generate_dataset(GenConfig(train_per_class=2, test_per_class=5, seq_len=10, input_dim=2))


def _constant_model(family="colstsm", bias=(0.0, 0.0, 0.0, 0.0)):
    dims = {"n": 2, "m": 3, "k": 4}
    params = {k: np.zeros(s) for k, s in param_shapes(family, dims).items()}
    params["b_z"] = np.array(bias)
    return Model(family, dims, params)


def test_prefix_lengths():
    assert [prefix_length(t, 30) for t in range(1, 11)] == [3, 6, 9, 12, 15, 18, 21, 24, 27, 30]
    assert prefix_length(1, 4) == 1            # 0.4 rounds to 0, clamped to 1
    assert prefix_length(5, 5) == 3            # 2.5 rounds half up
    assert prefix_length(10, 7) == 7


def test_zero_model_predicts_lowest_tied_class(data):
    assert predict(_constant_model(), data.test[0]) == 0
    assert predict(_constant_model(bias=(0, 0, 1, 0)), data.test[0]) == 2


def test_full_prefix_is_default(data):
    model = init_params("colstsm", {"n": 2, "m": 3, "k": 4}, Prng(1))
    p = data.test[3]
    assert predict(model, p, p.T) == predict(model, p)


def test_prefix_bounds(data):
    model = _constant_model()
    with pytest.raises(ValueError):
        predict(model, data.test[0], 0)
    with pytest.raises(ValueError):
        predict(model, data.test[0], 11)


def test_predict_is_pure(data):
    model = init_params("two-lstm", {"n": 2, "m": 3, "k": 4}, Prng(2))
    assert [predict(model, p, 4) for p in data.test] == [predict(model, p, 4) for p in data.test]


def test_batch_predictions_match_single(data):
    for fam in ("colstsm", "two-lstm", "pooled"):
        model = init_params(fam, {"n": 2, "m": 3, "k": 4}, Prng(5))
        batch = predict_batch(model, data.test, prefix_len=6)
        assert batch.tolist() == [predict(model, p, 6) for p in data.test]


def test_constant_predictor_on_balanced_data(data):
    metrics = evaluate(_constant_model(bias=(0, 0, 0, 1)), data.test)
    assert metrics.accuracy == 0.25
    assert metrics.total == len(data.test)
    assert metrics.confusion[:, 3].tolist() == [5, 5, 5, 5]


def test_oracle_predictor_metrics():
    labels = [0, 1, 2, 3, 1, 2]
    m = Metrics(confusion_matrix(labels, labels, 4))
    assert m.accuracy == 1.0
    assert np.array_equal(m.confusion, np.diag(np.bincount(labels, minlength=4)))


def test_metrics_identities():
    labels = np.array([0, 0, 1, 1, 1, 2, 2, 3])
    preds = np.array([0, 1, 1, 1, 0, 2, 3, 3])
    m = Metrics(confusion_matrix(labels, preds, 4))
    assert m.confusion.sum(axis=1).tolist() == np.bincount(labels).tolist()
    assert m.accuracy == np.trace(m.confusion) / 8
    weights = m.confusion.sum(axis=1) / 8
    assert m.accuracy == pytest.approx(float(np.sum(weights * m.per_class)), abs=1e-15)


def test_curve_shape_and_consistency(data):
    model = init_params("colstsm", {"n": 2, "m": 3, "k": 4}, Prng(7))
    curve = observation_curve(model, data.test)
    assert len(curve.ratios) == 10
    assert curve.ratios == tuple(t / 10 for t in range(1, 11))
    assert curve.accuracy[-1] == evaluate(model, data.test).accuracy


def test_empty_sets_rejected():
    with pytest.raises(ValueError):
        evaluate(_constant_model(), [])
    with pytest.raises(ValueError):
        observation_curve(_constant_model(), [])


def test_exports(data, tmp_path):
    model = init_params("colstsm", {"n": 2, "m": 3, "k": 4}, Prng(7))
    metrics = evaluate(model, data.test)
    metrics.write_csv(tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "true_class,accuracy,pred_0,pred_1,pred_2,pred_3"
    assert len(rows) == 6
    assert "accuracy:" in metrics.to_text()
    curve = observation_curve(model, data.test)
    curve.write_csv(tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "ratio,accuracy" and len(rows) == 11
