"""Ranking metrics, thresholded accuracy, training-set balancing, and
per-window metric reports.

Precision@K / Recall@K are defined over the top floor(K*N) instances ranked
by score (ties broken by ascending id), or over an explicit predicted-positive
set when evaluating an ensemble. Undefined metrics (empty positive set, no
positive labels) are reported as None rather than 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ensemble import top_k
from .features import EncodedDataset
from .models import ScoredInstance

DEFAULT_THRESHOLD = 0.7
DEFAULT_K = 0.02

MINUTES_PER_DAY = 1440


@dataclass
class MetricReport:
    window: str
    precision_at_k: float | None
    recall_at_k: float | None
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_instances: int
    n_positive: int
    k: float
    threshold: float


@dataclass(frozen=True)
class BalanceConfig:
    """Target positive:negative ratio after resampling (1:1 by default)."""

    ratio_pos: int = 1
    ratio_neg: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.ratio_pos <= 0 or self.ratio_neg <= 0:
            raise ValueError("ratio components must be positive")


def _selection(scores: list[ScoredInstance], labels: dict[str, int],
               k: float | None, positive_set: frozenset[str] | None) -> set[str]:
    if (k is None) == (positive_set is None):
        raise ValueError("provide exactly one of k or positive_set")
    if positive_set is not None:
        return set(positive_set)
    return set(top_k(scores, k).id_set)


def _check_aligned(scores: list[ScoredInstance], labels: dict[str, int]) -> None:
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores vs {len(labels)} labels")
    for s in scores:
        if s.instance_id not in labels:
            raise ValueError(f"no label for instance {s.instance_id!r}")


def precision_at_k(scores: list[ScoredInstance], labels: dict[str, int],
                   k: float | None = None,
                   positive_set: frozenset[str] | None = None) -> float | None:
    """True positives within the selection / selection size; None when the
    selection is empty."""
    _check_aligned(scores, labels)
    selected = _selection(scores, labels, k, positive_set)
    if not selected:
        return None
    tp = sum(labels[i] for i in selected)
    return tp / len(selected)


def recall_at_k(scores: list[ScoredInstance], labels: dict[str, int],
                k: float | None = None,
                positive_set: frozenset[str] | None = None) -> float | None:
    """True positives within the selection / total positives; None when there
    are no positive labels at all."""
    _check_aligned(scores, labels)
    total = sum(labels.values())
    if total == 0:
        return None
    selected = _selection(scores, labels, k, positive_set)
    tp = sum(labels[i] for i in selected)
    return tp / total


def accuracy(scores: dict[str, float], labels: dict[str, int],
             threshold: float = DEFAULT_THRESHOLD) -> float:
    """Fraction of instances where (score > threshold) matches the label.

    The comparison is strictly greater-than: a score exactly at the threshold
    is predicted negative.
    """
    if set(scores) != set(labels):
        raise ValueError("scores and labels must cover the same instances")
    if not scores:
        raise ValueError("cannot compute accuracy of an empty set")
    correct = sum(1 for i, s in scores.items() if (s > threshold) == bool(labels[i]))
    return correct / len(scores)


def confusion(selected: set[str], labels: dict[str, int]) -> tuple[int, int, int, int]:
    tp = sum(labels[i] for i in selected)
    fp = len(selected) - tp
    fn = sum(labels.values()) - tp
    tn = len(labels) - tp - fp - fn
    return tp, fp, fn, tn


def balance(data: EncodedDataset, config: BalanceConfig) -> EncodedDataset:
    """Under-sample the majority class and over-sample the minority class to
    the target ratio; per-class target T = round(sqrt(P * N)) scaled by ratio.

    Deterministic given the seed. Output order is shuffled.
    """
    y = np.asarray(data.y)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("balancing needs both classes present")
    rng = np.random.default_rng(config.seed)
    t = int(round(float(np.sqrt(len(pos) * len(neg)))))
    t_pos = max(1, round(t * config.ratio_pos / max(config.ratio_pos, config.ratio_neg)))
    t_neg = max(1, round(t * config.ratio_neg / max(config.ratio_pos, config.ratio_neg)))
    take_pos = rng.choice(pos, size=t_pos, replace=t_pos > len(pos))
    take_neg = rng.choice(neg, size=t_neg, replace=t_neg > len(neg))
    idx = np.concatenate([take_pos, take_neg])
    rng.shuffle(idx)
    return data.subset(idx)


def window_report(window: str, scores: list[ScoredInstance],
                  labels: dict[str, int], k: float = DEFAULT_K,
                  threshold: float = DEFAULT_THRESHOLD,
                  positive_set: frozenset[str] | None = None,
                  combined_score: dict[str, float] | None = None) -> MetricReport:
    if positive_set is None:
        selected = set(top_k(scores, k).id_set)
    else:
        selected = set(positive_set)
    tp, fp, fn, tn = confusion(selected, labels)
    score_map = combined_score or {s.instance_id: s.score for s in scores}
    return MetricReport(
        window=window,
        precision_at_k=(tp / len(selected)) if selected else None,
        recall_at_k=(tp / (tp + fn)) if (tp + fn) > 0 else None,
        accuracy=accuracy(score_map, labels, threshold),
        tp=tp, fp=fp, fn=fn, tn=tn,
        n_instances=len(labels),
        n_positive=tp + fn,
        k=k, threshold=threshold,
    )


@dataclass
class WindowedMetrics:
    reports: list[MetricReport]
    precision_variance: float | None
    skipped_groups: list[str] = field(default_factory=list)

    def mean_precision(self) -> float | None:
        values = [r.precision_at_k for r in self.reports if r.precision_at_k is not None]
        return float(np.mean(values)) if values else None


def windowed_metrics(scores: list[ScoredInstance], labels: dict[str, int],
                     end_timestamps: dict[str, int],
                     grouping: str = "daily", window_days: int = 1,
                     k: float = DEFAULT_K,
                     threshold: float = DEFAULT_THRESHOLD) -> WindowedMetrics:
    """Group instances by UTC day (or window_days-sized window) of their
    end_timestamp and compute metrics within each group.

    Also reports the population variance of per-group precision.
    """
    if grouping not in ("daily", "window"):
        raise ValueError(f"grouping must be 'daily' or 'window', got {grouping!r}")
    days = 1 if grouping == "daily" else window_days
    groups: dict[int, list[ScoredInstance]] = {}
    for s in scores:
        day = end_timestamps[s.instance_id] // (MINUTES_PER_DAY * days)
        groups.setdefault(day, []).append(s)
    reports = []
    skipped = []
    for day in sorted(groups):
        members = groups[day]
        group_labels = {s.instance_id: labels[s.instance_id] for s in members}
        if not members:
            skipped.append(str(day))
            continue
        reports.append(window_report(window=str(day), scores=members,
                                     labels=group_labels, k=k, threshold=threshold))
    values = [r.precision_at_k for r in reports if r.precision_at_k is not None]
    variance = float(np.var(values)) if values else None
    return WindowedMetrics(reports=reports, precision_variance=variance,
                           skipped_groups=skipped)


def write_reports_csv(path: str | Path, reports: list[MetricReport]) -> None:
    names = [f.name for f in fields(MetricReport)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in reports:
            writer.writerow(["" if getattr(r, n) is None else
                             (f"{getattr(r, n):.10g}" if isinstance(getattr(r, n), float)
                              else getattr(r, n)) for n in names])
