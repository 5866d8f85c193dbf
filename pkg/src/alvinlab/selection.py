"""Shared selection machinery: the batch type, entropy ranking, exact KNN.

Both the anchor strategy and the baselines build on these helpers, so e.g.
plain uncertainty selection and the anchor strategy's uncertainty fallback are
literally the same code path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import DatasetSplit, PoolState
from .errors import UsageError
from .model import ModelParams, proba_matrix
from .numkit import entropy_rows


@dataclass
class AcquisitionBatch:
    """Ordered ids chosen in one round, with per-id scores and wall time."""

    ids: list[int]
    scores: dict[int, float]
    strategy: str = ""
    attraction: dict[int, int] = field(default_factory=dict)  # id -> #attracting anchors
    seconds: float | None = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise UsageError("acquisition batch contains duplicate ids")


def pool_entropies(params: ModelParams, dataset: DatasetSplit, ids: list[int]) -> np.ndarray:
    if not ids:
        return np.zeros(0)
    probs = proba_matrix(params, dataset.features_for(ids))
    return entropy_rows(probs)


def rank_ids_by_entropy(
    params: ModelParams, dataset: DatasetSplit, ids: list[int]
) -> tuple[list[int], dict[int, float]]:
    """ids sorted by descending predictive entropy, ties by ascending id."""
    ent = pool_entropies(params, dataset, ids)
    order = sorted(range(len(ids)), key=lambda i: (-ent[i], ids[i]))
    ranked = [ids[i] for i in order]
    return ranked, {ids[i]: float(ent[i]) for i in range(len(ids))}


def top_b_by_entropy(
    params: ModelParams,
    dataset: DatasetSplit,
    pool: PoolState,
    b: int,
    strategy: str,
) -> AcquisitionBatch:
    """Plain uncertainty selection over the whole unlabeled pool."""
    unlabeled = list(pool.unlabeled_ids)
    if not unlabeled:
        raise UsageError("unlabeled pool is empty")
    if b < 1:
        raise UsageError("b must be >= 1")
    if b > len(unlabeled):
        raise UsageError(f"b={b} exceeds unlabeled pool size {len(unlabeled)}")
    ranked, scores = rank_ids_by_entropy(params, dataset, unlabeled)
    chosen = ranked[:b]
    return AcquisitionBatch(ids=chosen, scores={i: scores[i] for i in chosen}, strategy=strategy)


def knn_ids(
    query: np.ndarray,
    ids: list[int],
    reprs: np.ndarray,
    k: int,
) -> list[int]:
    """k nearest ids to `query` by squared Euclidean distance, ties by id."""
    diffs = reprs - query
    d2 = np.sum(diffs * diffs, axis=1)
    order = sorted(range(len(ids)), key=lambda i: (d2[i], ids[i]))
    return [ids[i] for i in order[: min(k, len(ids))]]


def kmeans_representatives(
    ids: list[int],
    reprs: np.ndarray,
    k: int,
    rng,
    max_iters: int = 100,
) -> list[int]:
    """k-means (k-means++ init) over `reprs`, then one id per cluster: the
    member nearest its centroid, ties by id. An empty cluster is served the
    globally nearest not-yet-picked id instead."""
    from .numkit import kmeans_pp_init, lloyd_kmeans

    if k < 1:
        raise UsageError("k must be >= 1")
    if k > len(ids):
        raise UsageError(f"k={k} exceeds {len(ids)} points")
    init = kmeans_pp_init(reprs, k, rng)
    centroids, assignment = lloyd_kmeans(reprs, k, init, max_iters=max_iters)
    picked: list[int] = []
    picked_rows: set[int] = set()
    n = len(ids)
    for c in range(k):
        diffs = reprs - centroids[c]
        d2 = np.sum(diffs * diffs, axis=1)
        members = [i for i in range(n) if assignment[i] == c and i not in picked_rows]
        if not members:
            members = [i for i in range(n) if i not in picked_rows]
        best = min(members, key=lambda i: (d2[i], ids[i]))
        picked_rows.add(best)
        picked.append(ids[best])
    return picked


def export_batch_csv(rows: list[tuple[int, AcquisitionBatch]], path: str | Path) -> None:
    """Write `round,id,entropy,attracting_anchor_count` rows."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "id", "entropy", "attracting_anchor_count"])
        for round_idx, batch in rows:
            for ex_id in batch.ids:
                writer.writerow(
                    [
                        round_idx,
                        ex_id,
                        repr(batch.scores.get(ex_id, 0.0)),
                        batch.attraction.get(ex_id, 0),
                    ]
                )
