import numpy as np
import pytest

from failcast.dataset import WindowingParams, build_dataset
from failcast.features import (CATEGORICAL_FEATURES, Encoder,
                               MissingFieldError, bucketize, fit_encoder,
                               one_hot)
from failcast.collection import static_by_serial


def test_bucketize_spec_example():
    boundaries = np.array([10.0, 20.0, 30.0])
    assert bucketize(5, boundaries) == 0
    assert bucketize(10, boundaries) == 1
    assert bucketize(20, boundaries) == 2  # boundary values count as passed
    assert bucketize(25, boundaries) == 2
    assert bucketize(1000, boundaries) == 3  # extreme values clamp to the top


def test_bucketize_rejects_non_finite():
    with pytest.raises(ValueError):
        bucketize(float("nan"), np.array([1.0]))


def test_one_hot():
    vocab = ["a", "b", "c"]
    np.testing.assert_array_equal(one_hot("b", vocab), [0, 1, 0, 0])
    np.testing.assert_array_equal(one_hot("zzz", vocab), [0, 0, 0, 1])  # OOV slot
    with pytest.raises(ValueError):
        one_hot("a", [])


@pytest.fixture(scope="module")
def fitted(small_fleet):
    _, fleet = small_fleet
    params = WindowingParams(l=6, p=20, slide_step=3)
    start = int(min(s.timestamp[0] for s in fleet.streams.values()))
    train = build_dataset(fleet.streams, params, (start, start + 4 * 1440))
    test = build_dataset(fleet.streams, params, (start + 4 * 1440, start + 7 * 1440))
    statics = static_by_serial(fleet.inventory)
    encoder = fit_encoder(train, statics, n_bucket=20)
    return encoder, train, test, statics


def test_encoder_shape_and_range(fitted):
    encoder, train, test, statics = fitted
    for split in (train, test):
        encoded = encoder.encode(split, statics)
        assert encoded.x.shape == (len(split), split.l, encoder.m)
        assert np.all(np.isfinite(encoded.x))
        assert np.all((encoded.x >= 0) & (encoded.x <= 1))
        np.testing.assert_array_equal(encoded.y, split.label)
        assert encoded.ids == split.instance_ids()


def test_boundaries_fit_on_train_only(fitted):
    encoder, train, _, statics = fitted
    for feature, boundaries in encoder.bucket_boundaries.items():
        assert np.all(np.diff(boundaries) > 0)  # strictly increasing
        assert len(boundaries) <= encoder.n_bucket - 1
    # Refitting on the same training data reproduces the encoder exactly.
    again = fit_encoder(train, statics, n_bucket=20)
    for feature in encoder.bucket_boundaries:
        np.testing.assert_array_equal(encoder.bucket_boundaries[feature],
                                      again.bucket_boundaries[feature])
    assert encoder.vocabularies == again.vocabularies


def test_vocabularies_sorted_from_train(fitted):
    encoder, train, _, statics = fitted
    seen = {str(s) for s in train.serials}
    for feature in CATEGORICAL_FEATURES:
        expected = sorted({getattr(statics[s], feature) for s in seen})
        assert encoder.vocabularies[feature] == expected


def test_constant_feature_single_bucket(fitted):
    encoder, train, _, statics = fitted
    clone = Encoder(n_bucket=encoder.n_bucket,
                    bucket_boundaries=dict(encoder.bucket_boundaries),
                    vocabularies=encoder.vocabularies)
    clone.bucket_boundaries["power"] = np.empty(0)
    encoded = clone.encode(train, statics)
    assert encoded.x.shape[2] == clone.m  # everything still lands in bucket 0


def test_unknown_serial_raises(fitted):
    encoder, train, _, statics = fitted
    broken = {k: v for k, v in statics.items() if k != str(train.serials[0])}
    with pytest.raises(MissingFieldError) as err:
        encoder.encode(train, broken)
    assert str(train.serials[0]) in str(err.value)


def test_encoder_roundtrip(tmp_path, fitted):
    encoder, train, _, statics = fitted
    path = tmp_path / "encoder.json"
    encoder.save(path)
    loaded = Encoder.load(path)
    a = encoder.encode(train, statics)
    b = loaded.encode(train, statics)
    np.testing.assert_array_equal(a.x, b.x)


def test_bucket_one_hot_mode(fitted):
    encoder, train, _, statics = fitted
    hot = Encoder(n_bucket=encoder.n_bucket,
                  bucket_boundaries=encoder.bucket_boundaries,
                  vocabularies=encoder.vocabularies, bucket_one_hot=True)
    encoded = hot.encode(train.subset(np.arange(5)), statics)
    assert encoded.x.shape[2] == hot.m > encoder.m
    assert set(np.unique(encoded.x)) <= {0.0, 1.0}


def test_fit_encoder_validation(fitted):
    _, train, _, statics = fitted
    from failcast.dataset import InstanceSet
    with pytest.raises(ValueError):
        fit_encoder(InstanceSet.empty(6), statics)
    with pytest.raises(ValueError):
        fit_encoder(train, statics, n_bucket=0)
