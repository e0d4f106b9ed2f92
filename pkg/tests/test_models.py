import numpy as np
import pytest

from failcast.features import EncodedDataset
from failcast.models import (InstanceWeights, ModelSpec, TrainedModel,
                             gradient_check, train)
from failcast.models.gbdt import train_gbdt
from failcast.models.nets import (CNN1D, LSTM, MLP, loss_gradient, sigmoid,
                                  weighted_squared_loss)


def make_blobs(n=300, l=12, m=6, seed=0):
    """Two separable blobs as (N, l, m) sequences."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(np.float64)
    x = rng.normal(0.3, 0.08, (n, l, m))
    x[y == 1] += 0.25
    return np.clip(x, 0.0, 1.0), y


def as_dataset(x, y):
    return EncodedDataset(x=x, y=y.astype(np.int8),
                          ids=[f"i{k:05d}" for k in range(len(y))],
                          end_timestamp=np.arange(len(y), dtype=np.int64))


def test_sigmoid_stable():
    z = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    assert s[0] == 0.0 and s[-1] == 1.0 and s[2] == 0.5


def test_weighted_loss_and_gradient():
    scores = np.array([0.2, 0.9])
    y = np.array([0.0, 1.0])
    w = np.array([3.0, 1.0])
    expected = np.mean((w * (scores - y)) ** 2)
    assert weighted_squared_loss(scores, y, w) == pytest.approx(expected)
    grad = loss_gradient(scores, y, w)
    np.testing.assert_allclose(grad, 2 * w ** 2 * (scores - y) / 2)


def test_spec_validation():
    with pytest.raises(ValueError) as err:
        ModelSpec(kind="RandomForest")
    assert "GBDT" in str(err.value)  # error names the valid kinds
    spec = ModelSpec(kind="GBDT", hyperparameters={"n_trees": 5})
    assert spec.resolved_hyperparameters()["n_trees"] == 5
    assert spec.resolved_hyperparameters()["depth"] == 4


def test_instance_weights_positive():
    with pytest.raises(ValueError):
        InstanceWeights(np.array([1.0, 0.0]))


@pytest.mark.parametrize("kind", ["MLP", "CNN1D", "LSTM", "GBDT"])
def test_models_learn_blobs(kind):
    x, y = make_blobs()
    data = as_dataset(x, y)
    hp = {"epochs": 15} if kind != "GBDT" else {"n_trees": 60}
    model = train(ModelSpec(kind=kind, seed=3, hyperparameters=hp), data)
    scores = model.predict_scores(x)
    assert np.all((scores >= 0) & (scores <= 1))
    predicted = (scores > 0.5).astype(np.float64)
    assert np.mean(predicted == y) >= 0.95
    assert model.loss_curve[-1] < model.loss_curve[0]


@pytest.mark.parametrize("kind", ["MLP", "CNN1D", "LSTM", "GBDT"])
def test_training_deterministic(kind):
    x, y = make_blobs(n=120)
    data = as_dataset(x, y)
    hp = {"epochs": 3} if kind != "GBDT" else {"n_trees": 10}
    spec = ModelSpec(kind=kind, seed=5, hyperparameters=hp)
    a = train(spec, data).predict_scores(x)
    b = train(spec, data).predict_scores(x)
    np.testing.assert_array_equal(a, b)


def test_untrained_shape_check():
    x, y = make_blobs(n=60)
    model = train(ModelSpec(kind="MLP", hyperparameters={"epochs": 1}),
                  as_dataset(x, y))
    with pytest.raises(ValueError):
        model.predict_scores(x[:, :5, :])


@pytest.mark.parametrize("kind", ["MLP", "CNN1D", "LSTM", "GBDT"])
def test_save_load_roundtrip(tmp_path, kind):
    x, y = make_blobs(n=100)
    hp = {"epochs": 2} if kind != "GBDT" else {"n_trees": 8}
    model = train(ModelSpec(kind=kind, seed=1, hyperparameters=hp),
                  as_dataset(x, y))
    path = tmp_path / "model.npz"
    model.save(path)
    loaded = TrainedModel.load(path)
    np.testing.assert_array_equal(loaded.predict_scores(x), model.predict_scores(x))
    assert loaded.data_fingerprint == model.data_fingerprint


@pytest.mark.parametrize("kind", ["MLP", "CNN1D", "LSTM"])
def test_gradient_check_unweighted(kind):
    x, y = make_blobs(n=24, l=12, m=5, seed=11)
    err = gradient_check(ModelSpec(kind=kind, seed=2), x, y)
    assert err <= 1e-4


def test_gradient_check_weighted():
    x, y = make_blobs(n=24, l=10, m=4, seed=13)
    w = np.where(y == 1, 10.0, 1.0)
    err = gradient_check(ModelSpec(kind="MLP", seed=2), x, y, w)
    assert err <= 1e-4


def test_cnn_rejects_short_sequences():
    with pytest.raises(ValueError):
        CNN1D(l=8, m=4)  # four kernel-3 convolutions need l >= 9
    CNN1D(l=9, m=4)


def test_weighted_training_shifts_scores_up():
    """Heavier positive weights push the operating point toward recall."""
    rng = np.random.default_rng(0)
    n = 400
    y = (rng.random(n) < 0.2).astype(np.float64)
    x = rng.normal(0.4, 0.15, (n, 6, 4))
    x[y == 1] += 0.1  # weak signal: overlapping classes
    x = np.clip(x, 0, 1)
    data = as_dataset(x, y)
    spec = ModelSpec(kind="MLP", seed=1, hyperparameters={"epochs": 20})
    plain = train(spec, data).predict_scores(x)
    weighted = train(spec, data,
                     InstanceWeights(np.where(y == 1, 10.0, 1.0))).predict_scores(x)
    assert weighted.mean() > plain.mean()


def test_gbdt_monotone_loss():
    x, y = make_blobs(n=250)
    model = train_gbdt(x.reshape(len(x), -1), y, n_trees=50)
    curve = np.asarray(model.loss_curve)
    assert np.all(np.diff(curve) <= 1e-12)


def test_gbdt_weighted_monotone_loss():
    x, y = make_blobs(n=250, seed=4)
    w = np.where(y == 1, 5.0, 1.0)
    model = train_gbdt(x.reshape(len(x), -1), y, w, n_trees=50)
    curve = np.asarray(model.loss_curve)
    assert np.all(np.diff(curve) <= 1e-12)


def test_train_rejects_bad_input():
    x, y = make_blobs(n=30)
    data = as_dataset(x, y)
    with pytest.raises(ValueError):
        train(ModelSpec(kind="MLP"), as_dataset(x[:0], y[:0]))
    with pytest.raises(ValueError):
        train(ModelSpec(kind="MLP"), data, InstanceWeights(np.ones(5)))
