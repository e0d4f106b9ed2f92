"""Uniform training/scoring interface over the four baseline model kinds."""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..features import EncodedDataset
from . import nets
from .gbdt import GBDTModel, _Tree, train_gbdt

MODEL_KINDS = ("GBDT", "MLP", "LSTM", "CNN1D")
NEURAL_KINDS = ("MLP", "LSTM", "CNN1D")

_NEURAL_DEFAULTS = {"epochs": 30, "batch_size": 256, "learning_rate": 0.2,
                    "momentum": 0.9}
_GBDT_DEFAULTS = {"n_trees": 200, "depth": 4, "shrinkage": 0.1,
                  "min_samples_leaf": 20}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    seed: int = 0
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; "
                             f"valid kinds: {', '.join(MODEL_KINDS)}")

    def resolved_hyperparameters(self) -> dict:
        defaults = _GBDT_DEFAULTS if self.kind == "GBDT" else _NEURAL_DEFAULTS
        return {**defaults, **self.hyperparameters}


@dataclass(frozen=True)
class InstanceWeights:
    w: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.w) <= 0):
            raise ValueError("instance weights must all be positive")


@dataclass
class TrainedModel:
    """Immutable trained scorer; predict is a pure function of (params, x)."""

    spec: ModelSpec
    l: int
    m: int
    loss_curve: list[float]
    data_fingerprint: str
    _net: nets.Net | None = None
    _gbdt: GBDTModel | None = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        """Scores in [0, 1], one per row of x (N, l, m); order preserved."""
        if x.ndim != 3 or x.shape[1] != self.l or x.shape[2] != self.m:
            raise ValueError(f"expected instances of shape (N, {self.l}, {self.m}), "
                             f"got {x.shape}")
        if self._gbdt is not None:
            return self._gbdt.predict(x.reshape(len(x), -1))
        return np.clip(self._net.predict(x), 0.0, 1.0)

    def predict(self, data: EncodedDataset) -> list["ScoredInstance"]:
        scores = self.predict_scores(data.x)
        return [ScoredInstance(instance_id=i, score=float(s))
                for i, s in zip(data.ids, scores)]

    def save(self, path) -> None:
        meta = {"spec": {"kind": self.spec.kind, "seed": self.spec.seed,
                         "hyperparameters": self.spec.hyperparameters},
                "l": self.l, "m": self.m, "loss_curve": self.loss_curve,
                "data_fingerprint": self.data_fingerprint}
        arrays = {}
        if self._gbdt is not None:
            meta["base_score"] = self._gbdt.base_score
            meta["n_trees"] = len(self._gbdt.trees)
            meta["tree_depth"] = self._gbdt.trees[0].depth if self._gbdt.trees else 0
            for i, tree in enumerate(self._gbdt.trees):
                arrays[f"t{i}_feature"] = tree.feature
                arrays[f"t{i}_threshold"] = tree.threshold
                arrays[f"t{i}_value"] = tree.value
        else:
            for i, p in enumerate(self._net.params):
                arrays[f"p{i}"] = p
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)

    @staticmethod
    def load(path) -> "TrainedModel":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            spec = ModelSpec(**meta["spec"])
            model = TrainedModel(spec=spec, l=meta["l"], m=meta["m"],
                                 loss_curve=meta["loss_curve"],
                                 data_fingerprint=meta["data_fingerprint"])
            if spec.kind == "GBDT":
                gbdt = GBDTModel(base_score=meta["base_score"])
                for i in range(meta["n_trees"]):
                    gbdt.trees.append(_Tree(depth=meta["tree_depth"],
                                            feature=data[f"t{i}_feature"],
                                            threshold=data[f"t{i}_threshold"],
                                            value=data[f"t{i}_value"]))
                model._gbdt = gbdt
            else:
                hp = spec.resolved_hyperparameters()
                net = nets.build_net(spec.kind, meta["l"], meta["m"], hp,
                                     np.random.default_rng(spec.seed))
                for i, p in enumerate(net.params):
                    p[...] = data[f"p{i}"]
                model._net = net
        return model

    def serialized_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class ScoredInstance:
    instance_id: str
    score: float


def _fingerprint(x: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x).tobytes())
    h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()[:16]


def train(spec: ModelSpec, data: EncodedDataset,
          weights: InstanceWeights | None = None) -> TrainedModel:
    """Fit one model; deterministic given (spec, data, seed)."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    x = np.asarray(data.x, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    w = None if weights is None else np.asarray(weights.w, dtype=np.float64)
    if w is not None and len(w) != len(y):
        raise ValueError(f"got {len(w)} weights for {len(y)} instances")
    n, l, m = x.shape
    hp = spec.resolved_hyperparameters()
    model = TrainedModel(spec=spec, l=l, m=m, loss_curve=[],
                         data_fingerprint=_fingerprint(x, y))
    if spec.kind == "GBDT":
        gbdt = train_gbdt(x.reshape(n, -1), y, w,
                          n_trees=hp["n_trees"], depth=hp["depth"],
                          shrinkage=hp["shrinkage"],
                          min_samples_leaf=hp["min_samples_leaf"])
        model._gbdt = gbdt
        model.loss_curve = gbdt.loss_curve
    else:
        rng = np.random.default_rng(spec.seed)
        net = nets.build_net(spec.kind, l, m, hp, rng)
        model.loss_curve = nets.sgd_train(
            net, x, y, w, epochs=hp["epochs"], batch_size=hp["batch_size"],
            learning_rate=hp["learning_rate"], momentum=hp["momentum"], rng=rng)
        model._net = net
    return model


def gradient_check(spec: ModelSpec, x: np.ndarray, y: np.ndarray,
                   w: np.ndarray | None = None, n_samples: int = 50,
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters are jittered away from their (partly zero) initialization
    first, so gradients actually flow through every layer.
    """
    if spec.kind not in NEURAL_KINDS:
        raise ValueError(f"gradient_check applies to neural kinds, not {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    _, l, m = x.shape
    net = nets.build_net(spec.kind, l, m, spec.resolved_hyperparameters(), rng)
    for p in net.params:
        p += rng.normal(0.0, 0.1, p.shape)
    return nets.gradient_check(net, np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64), w,
                               n_samples=n_samples, step=step, rng=rng)
