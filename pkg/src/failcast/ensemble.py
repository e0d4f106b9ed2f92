"""Parallel (top-K intersection) and cascade (filter-then-rerank) ensembles.

Both operate on already-scored instances; set operations are pure and the
deterministic tie-break (score descending, then id ascending) makes every
selection total.
"""

from __future__ import annotations

from dataclasses import dataclass

from .models import ScoredInstance


@dataclass(frozen=True)
class TopKSelection:
    k: float
    selected: tuple[str, ...]  # ordered by (score desc, id asc)
    cutoff_count: int

    @property
    def id_set(self) -> frozenset[str]:
        return frozenset(self.selected)


@dataclass(frozen=True)
class EnsemblePrediction:
    positive_set: frozenset[str]
    per_model_scores: dict[str, dict[str, float]]  # model name -> id -> score
    combined_score: dict[str, float]  # id -> score used for thresholded accuracy


def _ranked_ids(scores: list[ScoredInstance]) -> list[str]:
    return [s.instance_id
            for s in sorted(scores, key=lambda s: (-s.score, s.instance_id))]


def top_k(scores: list[ScoredInstance], k: float) -> TopKSelection:
    """The floor(k*N) highest-scored ids (at least one), ties by ascending id."""
    if not scores:
        raise ValueError("cannot select top-K of an empty score list")
    if not 0 < k <= 1:
        raise ValueError(f"K must be a fraction in (0, 1], got {k}")
    cutoff = max(1, int(k * len(scores)))
    return TopKSelection(k=k, selected=tuple(_ranked_ids(scores)[:cutoff]),
                         cutoff_count=cutoff)


def parallel_predict(model_scores: dict[str, list[ScoredInstance]],
                     k: float) -> EnsemblePrediction:
    """Intersection of each model's top-K set; combined score is the
    per-instance minimum over models."""
    if not model_scores:
        raise ValueError("parallel ensemble needs at least one model")
    ids = None
    for name, scores in model_scores.items():
        current = {s.instance_id for s in scores}
        if ids is None:
            ids = current
        elif current != ids:
            raise ValueError(f"model {name!r} scored a different instance set")
    positive = None
    for scores in model_scores.values():
        selection = top_k(scores, k).id_set
        positive = selection if positive is None else (positive & selection)
    per_model = {name: {s.instance_id: s.score for s in scores}
                 for name, scores in model_scores.items()}
    combined = {i: min(per_model[name][i] for name in per_model) for i in ids}
    return EnsemblePrediction(positive_set=frozenset(positive),
                              per_model_scores=per_model,
                              combined_score=combined)


def cascade_predict(stage1_scores: list[ScoredInstance],
                    stage2_scores: list[ScoredInstance],
                    k1: float, k2: float) -> EnsemblePrediction:
    """Stage 1 keeps its top k1 of the full test set; stage 2 re-ranks only
    the survivors and the top k2 (of the original test size) become positive.

    Non-survivors get a combined score scaled below the survivor minimum so a
    single threshold ranks survivors first.
    """
    if k2 > k1:
        raise ValueError(f"k2 ({k2}) must not exceed k1 ({k1})")
    n = len(stage1_scores)
    stage1_by_id = {s.instance_id: s.score for s in stage1_scores}
    stage2_by_id = {s.instance_id: s.score for s in stage2_scores}
    survivors = top_k(stage1_scores, k1).id_set
    missing = survivors - set(stage2_by_id)
    if missing:
        raise ValueError(f"stage-2 scores missing for {len(missing)} survivors")
    survivor_scores = [ScoredInstance(i, stage2_by_id[i]) for i in sorted(survivors)]
    cutoff = min(max(1, int(k2 * n)), len(survivor_scores))
    ranked = _ranked_ids(survivor_scores)
    positive = frozenset(ranked[:cutoff])
    floor = min(stage2_by_id[i] for i in survivors)
    combined = {}
    for i in stage1_by_id:
        if i in survivors:
            combined[i] = stage2_by_id[i]
        else:
            combined[i] = floor * stage1_by_id[i] * 0.99
    return EnsemblePrediction(positive_set=positive,
                              per_model_scores={"stage1": stage1_by_id,
                                                "stage2": stage2_by_id},
                              combined_score=combined)
