"""Batch-quality metrics: uncertainty, diversity, representativeness.

All three are measured against a reference model (by convention one trained on
the full train split) so scores are comparable across strategies and rounds.
Diversity is the inverse of the mean distance from each pool point to its
nearest batch member; representativeness of an instance is the mean cosine
similarity to its k nearest pool neighbors (neighbors found by Euclidean
distance, the package-wide convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import Example
from .errors import UsageError
from .model import ModelParams, encode, encode_matrix, proba_matrix
from .numkit import cosine_similarity, entropy_rows


@dataclass(frozen=True)
class BatchReport:
    """One selected batch's quality scores for a single round."""

    uncertainty: float
    diversity: float  # math.inf when the batch covers the whole pool
    representativeness: float
    batch_size: int
    round_index: int

    @property
    def diversity_degenerate(self) -> bool:
        return math.isinf(self.diversity)


def batch_uncertainty(ref_params: ModelParams, batch: list[Example]) -> float:
    """Mean predictive entropy of the batch under the reference model.

    Entropies are summed in sorted order so the result is exactly invariant to
    batch ordering.
    """
    if not batch:
        raise UsageError("batch is empty")
    feats = np.stack([ex.features for ex in batch])
    ent = entropy_rows(proba_matrix(ref_params, feats))
    return float(np.sort(ent).sum() / len(batch))


def diversity_from_representations(batch_z: np.ndarray, pool_z: np.ndarray) -> float:
    """Inverse of the mean over pool points of distance to the nearest batch
    member; +inf when that mean is exactly zero (batch covers the pool)."""
    if batch_z.shape[0] == 0 or pool_z.shape[0] == 0:
        raise UsageError("batch and pool must be non-empty")
    mins = np.full(pool_z.shape[0], np.inf)
    for row in range(batch_z.shape[0]):
        diffs = pool_z - batch_z[row]
        d = np.sqrt(np.sum(diffs * diffs, axis=1))
        mins = np.minimum(mins, d)
    mean_min = float(np.mean(mins))
    if mean_min == 0.0:
        return math.inf
    return 1.0 / mean_min


def batch_diversity(params: ModelParams, batch: list[Example], pool: list[Example]) -> float:
    if not batch or not pool:
        raise UsageError("batch and pool must be non-empty")
    batch_z = encode_matrix(params, np.stack([ex.features for ex in batch]))
    pool_z = encode_matrix(params, np.stack([ex.features for ex in pool]))
    return diversity_from_representations(batch_z, pool_z)


def representativeness_from_representations(z_x: np.ndarray, pool_z: np.ndarray, k: int) -> float:
    """Mean cosine similarity between z_x and its k nearest pool rows
    (nearest by Euclidean distance, ties by row index); k clamped to pool."""
    if pool_z.shape[0] == 0:
        raise UsageError("pool must be non-empty")
    diffs = pool_z - z_x
    d2 = np.sum(diffs * diffs, axis=1)
    order = np.argsort(d2, kind="stable")[: min(k, pool_z.shape[0])]
    sims = [cosine_similarity(z_x, pool_z[i]) for i in order]
    return float(sum(sorted(sims)) / len(sims))


def representativeness(
    params: ModelParams,
    x: Example,
    pool: list[Example],
    k: int = 10,
) -> float:
    """Neighborhood density score of x against the unlabeled pool.

    Pool entries with x's own id are excluded, so an instance still in the
    pool is scored against its neighbors, not itself.
    """
    others = [ex for ex in pool if ex.id != x.id]
    if not others:
        raise UsageError("pool holds no examples besides x")
    z_x = encode(params, x)
    pool_z = encode_matrix(params, np.stack([ex.features for ex in others]))
    return representativeness_from_representations(z_x, pool_z, k)


def build_batch_report(
    ref_params: ModelParams,
    batch: list[Example],
    pool: list[Example],
    round_index: int,
    k: int = 10,
) -> BatchReport:
    """Assemble all three scores for one selected batch."""
    rep_scores = [representativeness(ref_params, ex, pool, k=k) for ex in batch]
    return BatchReport(
        uncertainty=batch_uncertainty(ref_params, batch),
        diversity=batch_diversity(ref_params, batch, pool),
        representativeness=float(sum(sorted(rep_scores)) / len(rep_scores)),
        batch_size=len(batch),
        round_index=round_index,
    )
