"""Sliding-training experiment driver.

Three entry points over a shared per-window train/score core:

- run_static: train once, evaluate in fixed-size groups over the horizon
  (exhibits precision decay under drift);
- run_sliding: retrain every T_retrain days on the previous L_train days;
- run_variable_length: per retrain point, train one model set per candidate
  L_train and report the candidate that scored the highest precision on the
  previous test window.

All day arithmetic is relative to an origin at a UTC midnight (the stream
start); day d covers [origin + d*1440, origin + (d+1)*1440) epoch minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import InstanceSet, WindowingParams, build_dataset
from .ensemble import cascade_predict, parallel_predict, top_k
from .evalmetrics import (DEFAULT_K, DEFAULT_THRESHOLD, MINUTES_PER_DAY,
                          BalanceConfig, balance, confusion, accuracy)
from .features import Encoder, EncodedDataset, fit_encoder
from .models import InstanceWeights, ModelSpec, ScoredInstance, TrainedModel, train
from .telemetry import GpuStream, StaticConfig, TICK_MINUTES
from .util import derive_seed


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class ReportSpec:
    """How to turn per-model scores into one prediction worth reporting.

    kind 'single' reads one member; 'parallel' intersects the members'
    top-K sets; 'cascade' filters by the first member (top k1) and re-ranks
    survivors by the second (top k2 of the original test size).
    """

    name: str
    kind: str  # single | parallel | cascade
    members: tuple[str, ...]
    k: float = DEFAULT_K
    k1: float = 0.05
    k2: float = DEFAULT_K

    def __post_init__(self):
        if self.kind not in ("single", "parallel", "cascade"):
            raise ValueError(f"unknown report kind {self.kind!r}")
        if self.kind == "single" and len(self.members) != 1:
            raise ValueError("single report takes exactly one member")
        if self.kind == "cascade" and len(self.members) != 2:
            raise ValueError("cascade report takes (stage1, stage2)")
        if self.kind == "parallel" and len(self.members) < 2:
            raise ValueError("parallel report takes at least two members")


@dataclass(frozen=True)
class ModelSet:
    """Named model specs trained each window; `weighted` marks specs trained
    with per-class instance weights (cascade stage 1)."""

    specs: dict[str, ModelSpec]
    weighted: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.weighted) - set(self.specs)
        if unknown:
            raise ValueError(f"weighted entries without specs: {sorted(unknown)}")


@dataclass(frozen=True)
class SlidingConfig:
    t_retrain_days: int = 3
    l_train_days: float = 15
    l_candidates: tuple[float, ...] = (9, 12, 15)
    k: float = DEFAULT_K
    threshold: float = DEFAULT_THRESHOLD
    horizon_days: tuple[float, float] = (30, 60)
    selection_report: str | None = None  # variable-length: which report drives L
    eval_window_days: float | None = None  # sub-tile each retrain window; None
    # evaluates the whole retrain window at once. A fixed tiling makes runs
    # with different t_retrain_days comparable (precision@K depends on the
    # evaluation window size, so per-retrain-window numbers are not).

    def __post_init__(self):
        if self.t_retrain_days < 1:
            raise ValueError("t_retrain_days must be >= 1")
        if self.eval_window_days is not None and self.eval_window_days <= 0:
            raise ValueError("eval_window_days must be positive")
        if self.l_train_days < 1 or any(c < 1 for c in self.l_candidates):
            raise ValueError("training lengths must be >= 1 day")
        if self.horizon_days[1] <= self.horizon_days[0]:
            raise ValueError("empty horizon")


@dataclass
class WindowReport:
    window_index: int
    report: str
    test_start_day: float
    test_end_day: float
    chosen_l_days: float
    precision_at_k: float | None
    recall_at_k: float | None
    accuracy: float | None
    tp: int
    fp: int
    fn: int
    tn: int
    n_test: int
    n_positive: int


@dataclass
class VariableLengthResult:
    reports: list[WindowReport]  # the chosen candidate, per window and report
    candidates: list[WindowReport]  # every candidate, tagged via chosen_l_days
    chosen_l: list[float]  # per window


@dataclass
class ExperimentContext:
    """Everything the runs share: data, windowing, encoding, balancing."""

    streams: dict[str, GpuStream]
    statics: dict[str, StaticConfig]
    origin_minutes: int
    windowing: WindowingParams = WindowingParams()
    n_bucket: int = 50
    seed: int = 0
    mode: str = "slide"

    def minutes(self, day: float) -> int:
        return self.origin_minutes + int(round(day * MINUTES_PER_DAY))

    def streams_start(self) -> int:
        return min(int(s.timestamp[0]) for s in self.streams.values())

    def dataset(self, start_day: float, end_day: float) -> InstanceSet:
        """Training view: observation windows AND label lookahead both stay
        inside [start_day, end_day), so no future information leaks in."""
        return build_dataset(self.streams, self.windowing,
                             (self.minutes(start_day), self.minutes(end_day)),
                             mode=self.mode)

    def test_dataset(self, start_day: float, end_day: float) -> InstanceSet:
        """Evaluation view: instances ENDING in [start_day, end_day), with
        observation history and label lookahead allowed to extend past the
        window edges (labels are ground truth, not model input)."""
        w = self.windowing
        lo = self.minutes(start_day) - w.l * TICK_MINUTES
        hi = self.minutes(end_day) + w.p * TICK_MINUTES
        data = build_dataset(self.streams, w, (lo, hi), mode=self.mode)
        keep = np.flatnonzero((data.end_timestamp >= self.minutes(start_day))
                              & (data.end_timestamp < self.minutes(end_day)))
        return data.subset(keep)


@dataclass
class TrainedWindow:
    encoder: Encoder
    models: dict[str, TrainedModel]
    train_start_day: float
    train_end_day: float
    n_train: int


def train_models(ctx: ExperimentContext, models: ModelSet,
                 train_range: tuple[float, float]) -> TrainedWindow:
    """Build, encode, balance and fit every named model on one train range."""
    a, b = train_range
    if ctx.minutes(a) < ctx.streams_start():
        raise InsufficientHistoryError(
            f"train range starts at day {a}, before the stream begins")
    train_set = ctx.dataset(a, b)
    if len(train_set) == 0 or train_set.n_positive == 0 or train_set.n_negative == 0:
        raise InsufficientHistoryError(
            f"train range [{a}, {b}) yields {len(train_set)} instances "
            f"({train_set.n_positive} positive)")
    encoder = fit_encoder(train_set, ctx.statics, n_bucket=ctx.n_bucket)
    encoded = encoder.encode(train_set, ctx.statics)
    balanced = balance(encoded, BalanceConfig(
        seed=derive_seed(ctx.seed, f"balance:{a}:{b}")))
    trained = {}
    for name in sorted(models.specs):
        spec = models.specs[name]
        weights = None
        if name in models.weighted:
            w_pos, w_neg = models.weighted[name]
            weights = InstanceWeights(np.where(balanced.y == 1, w_pos, w_neg))
        trained[name] = train(spec, balanced, weights)
    return TrainedWindow(encoder=encoder, models=trained,
                         train_start_day=a, train_end_day=b, n_train=len(balanced))


def _score(window: TrainedWindow, ctx: ExperimentContext,
           test_set: InstanceSet) -> tuple[dict[str, list[ScoredInstance]],
                                           dict[str, int], dict[str, int]]:
    if len(test_set) == 0:
        return {name: [] for name in window.models}, {}, {}
    encoded = window.encoder.encode(test_set, ctx.statics)
    scores = {name: model.predict(encoded)
              for name, model in window.models.items()}
    labels = {i: int(y) for i, y in zip(encoded.ids, encoded.y)}
    end_ts = {i: int(t) for i, t in zip(encoded.ids, encoded.end_timestamp)}
    return scores, labels, end_ts


def _report_selection(report: ReportSpec,
                      scores: dict[str, list[ScoredInstance]],
                      ) -> tuple[frozenset[str], dict[str, float]]:
    """(positive_set, combined score per instance) for one report spec."""
    if report.kind == "single":
        member = scores[report.members[0]]
        return top_k(member, report.k).id_set, {s.instance_id: s.score for s in member}
    if report.kind == "parallel":
        pred = parallel_predict({m: scores[m] for m in report.members}, report.k)
        return pred.positive_set, pred.combined_score
    pred = cascade_predict(scores[report.members[0]], scores[report.members[1]],
                           report.k1, report.k2)
    return pred.positive_set, pred.combined_score


def evaluate_reports(reports: list[ReportSpec],
                     scores: dict[str, list[ScoredInstance]],
                     labels: dict[str, int], *, window_index: int,
                     test_start_day: float, test_end_day: float,
                     chosen_l_days: float,
                     threshold: float = DEFAULT_THRESHOLD) -> list[WindowReport]:
    out = []
    n_positive = sum(labels.values())
    for report in reports:
        if not labels:
            out.append(WindowReport(
                window_index=window_index, report=report.name,
                test_start_day=test_start_day, test_end_day=test_end_day,
                chosen_l_days=chosen_l_days, precision_at_k=None,
                recall_at_k=None, accuracy=None, tp=0, fp=0, fn=0, tn=0,
                n_test=0, n_positive=0))
            continue
        positive_set, combined = _report_selection(report, scores)
        tp, fp, fn, tn = confusion(set(positive_set), labels)
        out.append(WindowReport(
            window_index=window_index, report=report.name,
            test_start_day=test_start_day, test_end_day=test_end_day,
            chosen_l_days=chosen_l_days,
            precision_at_k=(tp / len(positive_set)) if positive_set else None,
            recall_at_k=(tp / n_positive) if n_positive else None,
            accuracy=accuracy(combined, labels, threshold),
            tp=tp, fp=fp, fn=fn, tn=tn,
            n_test=len(labels), n_positive=n_positive))
    return out


def run_static(ctx: ExperimentContext, models: ModelSet, reports: list[ReportSpec],
               train_range: tuple[float, float],
               horizon: tuple[float, float], *, eval_window_days: float = 1,
               threshold: float = DEFAULT_THRESHOLD) -> list[WindowReport]:
    """Train once on train_range, evaluate per eval window over the horizon."""
    if horizon[0] < train_range[1]:
        raise ValueError(f"horizon starts at day {horizon[0]} inside the "
                         f"train range ending at day {train_range[1]}")
    window = train_models(ctx, models, train_range)
    out = []
    l_days = train_range[1] - train_range[0]
    index = 0
    start = horizon[0]
    while start < horizon[1] - 1e-9:
        end = min(start + eval_window_days, horizon[1])
        test_set = ctx.test_dataset(start, end)
        scores, labels, _ = _score(window, ctx, test_set)
        out.extend(evaluate_reports(
            reports, scores, labels, window_index=index,
            test_start_day=start, test_end_day=end, chosen_l_days=l_days,
            threshold=threshold))
        index += 1
        start = end
    return out


def sliding_windows(config: SlidingConfig) -> list[tuple[int, float, float]]:
    """(index, test_start_day, test_end_day) tiling of the horizon."""
    h0, h1 = config.horizon_days
    out = []
    index = 0
    start = h0
    while start < h1 - 1e-9:
        end = min(start + config.t_retrain_days, h1)
        out.append((index, start, end))
        index += 1
        start = end
    return out


def run_sliding(ctx: ExperimentContext, models: ModelSet,
                reports: list[ReportSpec], config: SlidingConfig,
                ) -> list[WindowReport]:
    """Retrain every T_retrain days on the trailing L_train days."""
    out = []
    for index, start, end in sliding_windows(config):
        window = train_models(ctx, models, (start - config.l_train_days, start))
        sub = config.eval_window_days or (end - start)
        s = start
        while s < end - 1e-9:
            e = min(s + sub, end)
            test_set = ctx.test_dataset(s, e)
            scores, labels, _ = _score(window, ctx, test_set)
            out.extend(evaluate_reports(
                reports, scores, labels, window_index=index, test_start_day=s,
                test_end_day=e, chosen_l_days=config.l_train_days,
                threshold=config.threshold))
            s = e
    return out


def select_l(previous: dict[float, float | None], candidates: tuple[float, ...],
             ) -> float:
    """Argmax of previous-window precision over candidates; ties (and missing
    precisions) resolve toward the longer candidate."""
    best = max(candidates)
    best_precision = -1.0
    for l in sorted(candidates, reverse=True):
        p = previous.get(l)
        if p is not None and p > best_precision + 1e-12:
            best, best_precision = l, p
    return best


def run_variable_length(ctx: ExperimentContext, models: ModelSet,
                        reports: list[ReportSpec], config: SlidingConfig,
                        ) -> VariableLengthResult:
    """Per window, train one model set per candidate L_train; report the
    candidate that scored the highest precision on the previous test window.

    The first window uses the longest candidate (no previous evidence).
    Every candidate's result is logged for the selection audit.
    """
    if len(config.l_candidates) < 2:
        raise ValueError("variable-length selection needs >= 2 candidates")
    selection_report = config.selection_report or reports[0].name
    if selection_report not in {r.name for r in reports}:
        raise ValueError(f"unknown selection report {selection_report!r}")
    chosen: list[float] = []
    out: list[WindowReport] = []
    audit: list[WindowReport] = []
    previous: dict[float, float | None] = {}
    for index, start, end in sliding_windows(config):
        test_set = ctx.test_dataset(start, end)
        per_candidate: dict[float, list[WindowReport]] = {}
        for l in config.l_candidates:
            window = train_models(ctx, models, (start - l, start))
            scores, labels, _ = _score(window, ctx, test_set)
            per_candidate[l] = evaluate_reports(
                reports, scores, labels, window_index=index,
                test_start_day=start, test_end_day=end, chosen_l_days=l,
                threshold=config.threshold)
            audit.extend(per_candidate[l])
        l_now = (max(config.l_candidates) if index == 0
                 else select_l(previous, config.l_candidates))
        chosen.append(l_now)
        out.extend(per_candidate[l_now])
        previous = {
            l: next(r.precision_at_k for r in rs if r.report == selection_report)
            for l, rs in per_candidate.items()
        }
    return VariableLengthResult(reports=out, candidates=audit, chosen_l=chosen)


def mean_precision(reports: list[WindowReport], name: str) -> float:
    values = [r.precision_at_k for r in reports
              if r.report == name and r.precision_at_k is not None]
    if not values:
        raise ValueError(f"no precision values for report {name!r}")
    return float(np.mean(values))


def precision_variance(reports: list[WindowReport], name: str) -> float:
    values = [r.precision_at_k for r in reports
              if r.report == name and r.precision_at_k is not None]
    return float(np.var(values))
