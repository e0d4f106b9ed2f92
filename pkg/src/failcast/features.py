"""Fixed-length numeric encoding of raw instances.

Float features are discretized into quantile buckets fitted on the training
split only (never on test data) and emitted as a normalized bucket index in
[0, 1]; categorical features are one-hot encoded with an out-of-vocabulary
slot. Static features repeat identically across the l rows of an instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dataset import InstanceSet
from .telemetry import StaticConfig

ENCODER_FORMAT_VERSION = 1

#: Float features, in encoding order. days_to_expiration is derived from the
#: row timestamp and the GPU's expiration date.
FLOAT_FEATURES = ("temperature", "power", "sm_util", "mem_util", "uptime",
                  "days_to_expiration")
#: Categorical features, in encoding order.
CATEGORICAL_FEATURES = ("datacenter", "gpu_type", "driver_version")


class MissingFieldError(KeyError):
    pass


def one_hot(category: str, vocabulary: list[str]) -> np.ndarray:
    """One-hot over vocabulary plus a trailing out-of-vocabulary slot."""
    if not vocabulary:
        raise ValueError("vocabulary must be non-empty")
    vec = np.zeros(len(vocabulary) + 1)
    try:
        vec[vocabulary.index(category)] = 1.0
    except ValueError:
        vec[-1] = 1.0
    return vec


def bucketize(value: float, boundaries: np.ndarray) -> int:
    """Bucket index: the number of boundaries <= value.

    Values below the first boundary map to 0; values above the last clamp to
    the top bucket, which is what blunts extreme readings.
    """
    if not np.isfinite(value):
        raise ValueError(f"cannot bucketize non-finite value {value!r}")
    return int(np.searchsorted(boundaries, value, side="right"))


def _expiration_minutes(static: StaticConfig) -> int:
    dt = datetime(static.expiration_date.year, static.expiration_date.month,
                  static.expiration_date.day, tzinfo=timezone.utc)
    return int(dt.timestamp()) // 60


@dataclass
class Encoder:
    """Immutable after fitting; encodes raw instances to l x m matrices."""

    n_bucket: int
    bucket_boundaries: dict[str, np.ndarray]  # float feature -> sorted, strictly increasing
    vocabularies: dict[str, list[str]]  # categorical feature -> ordered categories
    bucket_one_hot: bool = False

    @property
    def m(self) -> int:
        floats = len(FLOAT_FEATURES) * (self.n_bucket if self.bucket_one_hot else 1)
        cats = sum(len(v) + 1 for v in self.vocabularies.values())
        return floats + cats

    def _bucket_indices(self, feature: str, values: np.ndarray) -> np.ndarray:
        if np.any(~np.isfinite(values)):
            raise ValueError(f"non-finite values in feature {feature!r}")
        return np.searchsorted(self.bucket_boundaries[feature], values, side="right")

    def _float_columns(self, feature: str, values: np.ndarray) -> np.ndarray:
        """(..., k) encoded columns for one float feature; k=1 unless bucket_one_hot."""
        idx = self._bucket_indices(feature, values)
        if self.bucket_one_hot:
            out = np.zeros(values.shape + (self.n_bucket,))
            np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
            return out
        if self.n_bucket < 2:
            return np.zeros(values.shape + (1,))
        return (idx / (self.n_bucket - 1))[..., None]

    def encode(self, instances: InstanceSet,
               statics: dict[str, StaticConfig]) -> "EncodedDataset":
        n, l = len(instances), instances.l
        columns: list[np.ndarray] = []
        exp_minutes = np.empty(n)
        cat_values: dict[str, list[str]] = {c: [] for c in CATEGORICAL_FEATURES}
        for i, serial in enumerate(instances.serials):
            static = statics.get(str(serial))
            if static is None:
                ts = int(instances.end_timestamp[i])
                raise MissingFieldError(
                    f"({serial}, {ts}): no static configuration for serial")
            exp_minutes[i] = _expiration_minutes(static)
            for c in CATEGORICAL_FEATURES:
                cat_values[c].append(getattr(static, c))
        for feature in FLOAT_FEATURES:
            if feature == "days_to_expiration":
                values = (exp_minutes[:, None] - instances.windows["timestamp"]) / 1440.0
            else:
                values = instances.windows[feature].astype(np.float64)
            columns.append(self._float_columns(feature, values))
        for feature in CATEGORICAL_FEATURES:
            vocab = self.vocabularies[feature]
            hot = np.stack([one_hot(v, vocab) for v in cat_values[feature]])  # (N, V+1)
            columns.append(np.broadcast_to(hot[:, None, :], (n, l, hot.shape[1])))
        x = np.concatenate(columns, axis=2) if n else np.empty((0, l, self.m))
        assert x.shape == (n, l, self.m)
        return EncodedDataset(
            x=x,
            y=instances.label.astype(np.int8),
            ids=instances.instance_ids(),
            end_timestamp=instances.end_timestamp.copy(),
        )

    def to_json(self) -> dict:
        return {
            "format": "failcast-encoder",
            "version": ENCODER_FORMAT_VERSION,
            "n_bucket": self.n_bucket,
            "bucket_one_hot": self.bucket_one_hot,
            "bucket_boundaries": {k: [float(b) for b in v]
                                  for k, v in self.bucket_boundaries.items()},
            "vocabularies": {k: list(v) for k, v in self.vocabularies.items()},
        }

    @staticmethod
    def from_json(obj: dict) -> "Encoder":
        if obj.get("format") != "failcast-encoder":
            raise ValueError("not an encoder file")
        return Encoder(
            n_bucket=obj["n_bucket"],
            bucket_one_hot=obj.get("bucket_one_hot", False),
            bucket_boundaries={k: np.asarray(v, dtype=np.float64)
                               for k, v in obj["bucket_boundaries"].items()},
            vocabularies={k: list(v) for k, v in obj["vocabularies"].items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @staticmethod
    def load(path: str | Path) -> "Encoder":
        return Encoder.from_json(json.loads(Path(path).read_text()))


@dataclass
class EncodedDataset:
    """Encoded instances: x is (N, l, m) with every entry finite and in [0, 1]."""

    x: np.ndarray
    y: np.ndarray
    ids: list[str]
    end_timestamp: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(
            x=self.x[idx],
            y=self.y[idx],
            ids=[self.ids[int(i)] for i in np.atleast_1d(idx)],
            end_timestamp=self.end_timestamp[idx],
        )


def fit_encoder(train: InstanceSet, statics: dict[str, StaticConfig],
                n_bucket: int = 50, bucket_one_hot: bool = False) -> Encoder:
    """Fit bucket boundaries and vocabularies on the training split only.

    Boundaries are empirical quantiles of each float feature over all training
    rows, deduplicated to stay strictly increasing; a constant feature ends up
    with no boundaries, so every value maps to bucket 0.
    """
    if len(train) == 0:
        raise ValueError("cannot fit an encoder on an empty dataset")
    if n_bucket < 1:
        raise ValueError(f"n_bucket must be >= 1, got {n_bucket}")
    exp_by_serial = {s: _expiration_minutes(cfg) for s, cfg in statics.items()}
    try:
        exp = np.array([exp_by_serial[str(s)] for s in train.serials])
    except KeyError as exc:
        raise MissingFieldError(f"no static configuration for serial {exc}") from exc
    boundaries: dict[str, np.ndarray] = {}
    qs = np.arange(1, n_bucket) / n_bucket
    for feature in FLOAT_FEATURES:
        if feature == "days_to_expiration":
            values = (exp[:, None] - train.windows["timestamp"]) / 1440.0
        else:
            values = train.windows[feature].astype(np.float64)
        quantiles = np.quantile(values.ravel(), qs) if len(qs) else np.empty(0)
        uniq = np.unique(quantiles)
        if len(uniq) == 1 and np.all(values == uniq[0]):
            uniq = np.empty(0)  # constant feature: everything in bucket 0
        boundaries[feature] = uniq
    vocabularies: dict[str, list[str]] = {}
    seen_serials = sorted({str(s) for s in train.serials})
    for feature in CATEGORICAL_FEATURES:
        values = {getattr(statics[s], feature) for s in seen_serials}
        vocabularies[feature] = sorted(values)
    return Encoder(n_bucket=n_bucket, bucket_boundaries=boundaries,
                   vocabularies=vocabularies, bucket_one_hot=bucket_one_hot)
