"""Anchor-interpolation acquisition (ALVIN) and its variant engine.

One round: infer minority/majority membership from training dynamics, build
anchors by Beta-weighted interpolation of minority and majority
representations within each class, gather the unlabeled nearest neighbors of
every anchor, and keep the top-b of those candidates by predictive entropy.
The variant knobs (random pairing, all-pairs interpolation, uniform or k-means
candidate ranking) exist for the ablation strategies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import GROUP_MAJORITY, GROUP_MINORITY, DatasetSplit, Example, PoolState
from .dynamics import Verdict, infer_min_maj
from .errors import UsageError
from .model import ModelParams, encode_matrix
from .numkit import RngState, sample_beta
from .selection import (
    AcquisitionBatch,
    kmeans_representatives,
    knn_ids,
    rank_ids_by_entropy,
    top_b_by_entropy,
)


@dataclass(frozen=True)
class AlvinConfig:
    """Knobs of the anchor strategy (defaults follow the reference setup)."""

    anchors_per_pair: int = 15
    beta_alpha: float = 2.0
    beta_beta: float = 2.0
    pair_sample_size: int = 25  # per-class cap on sampled examples per group
    knn_k: int = 5
    batch_size: int = 50
    int_all_uncapped: bool = False  # lift the sample cap for the all-pairs variant

    def __post_init__(self):
        if min(self.anchors_per_pair, self.pair_sample_size, self.knn_k, self.batch_size) < 1:
            raise UsageError("all AlvinConfig counts must be >= 1")
        if not (self.beta_alpha > 0 and self.beta_beta > 0):
            raise UsageError("Beta shape parameters must be positive")


@dataclass(frozen=True)
class Anchor:
    """Interpolated representation-space point with its provenance."""

    z: np.ndarray
    minority_id: int
    majority_id: int
    lam: float
    label: int

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise UsageError(f"interpolation weight {self.lam} outside [0, 1]")


@dataclass
class CandidateSet:
    """Ordered candidate ids with, per id, the indices of attracting anchors."""

    ids: list[int]
    attraction: dict[int, list[int]] = field(default_factory=dict)


def interpolate_representations(z_min: np.ndarray, z_maj: np.ndarray, lam: float) -> np.ndarray:
    """lam * z_min + (1 - lam) * z_maj; exact at the endpoints lam in {0, 1}."""
    return lam * z_min + (1.0 - lam) * z_maj


def _groups_from_verdict(
    labeled: list[Example], verdict: Verdict
) -> dict[int, tuple[list[int], list[int]]]:
    """Per class: (minority ids, majority ids), skipping one-sided classes."""
    ordered = sorted(labeled, key=lambda ex: ex.id)
    groups: dict[int, tuple[list[int], list[int]]] = {}
    for label in sorted({ex.label for ex in ordered}):
        minority = [ex.id for ex in ordered if ex.label == label and verdict.get(ex.id) == GROUP_MINORITY]
        majority = [ex.id for ex in ordered if ex.label == label and verdict.get(ex.id) == GROUP_MAJORITY]
        if minority and majority:
            groups[label] = (minority, majority)
    return groups


def _groups_random(labeled: list[Example]) -> dict[int, tuple[list[int], list[int]]]:
    """Verdict-free pairing pools: both sides are simply the class members."""
    ordered = sorted(labeled, key=lambda ex: ex.id)
    groups = {}
    for label in sorted({ex.label for ex in ordered}):
        ids = [ex.id for ex in ordered if ex.label == label]
        if len(ids) >= 2:
            groups[label] = (ids, ids)
    return groups


def _make_anchors(
    params: ModelParams,
    features_by_id: dict[int, np.ndarray],
    groups: dict[int, tuple[list[int], list[int]]],
    cfg: AlvinConfig,
    rng: RngState,
    all_pairs: bool = False,
) -> list[Anchor]:
    anchors: list[Anchor] = []
    for label in sorted(groups):
        side_a, side_b = groups[label]
        if all_pairs and cfg.int_all_uncapped:
            sample_a, sample_b = list(side_a), list(side_b)
        else:
            n_a = min(cfg.pair_sample_size, len(side_a))
            n_b = min(cfg.pair_sample_size, len(side_b))
            sample_a = [side_a[i] for i in rng.sample(len(side_a), n_a)]
            sample_b = [side_b[i] for i in rng.sample(len(side_b), n_b)]

        z_a = encode_matrix(params, np.stack([features_by_id[i] for i in sample_a]))
        z_b = encode_matrix(params, np.stack([features_by_id[i] for i in sample_b]))
        if all_pairs:
            pairs = [(i, j) for i in range(len(sample_a)) for j in range(len(sample_b))]
        else:
            pairs = [(i, rng.below(len(sample_b))) for i in range(len(sample_a))]
        for i, j in pairs:
            for _ in range(cfg.anchors_per_pair):
                lam = sample_beta(rng, cfg.beta_alpha, cfg.beta_beta)
                anchors.append(
                    Anchor(
                        z=interpolate_representations(z_a[i], z_b[j], lam),
                        minority_id=sample_a[i],
                        majority_id=sample_b[j],
                        lam=lam,
                        label=label,
                    )
                )
    return anchors


def create_anchors(
    params: ModelParams,
    labeled: list[Example],
    verdict: Verdict,
    cfg: AlvinConfig,
    rng: RngState,
) -> list[Anchor]:
    """Beta-interpolated anchors for every class holding both groups.

    Per class: sample up to `pair_sample_size` ids from each group without
    replacement, pair each sampled minority example with one uniform draw from
    the majority sample (with replacement), and emit `anchors_per_pair`
    anchors per pair, each with an independent Beta(alpha, beta) weight on the
    minority side. Classes lacking one group are skipped; an empty result
    signals the caller to fall back to plain uncertainty selection.
    """
    features_by_id = {ex.id: ex.features for ex in labeled}
    groups = _groups_from_verdict(labeled, verdict)
    return _make_anchors(params, features_by_id, groups, cfg, rng, all_pairs=False)


def gather_candidates(
    anchors: list[Anchor],
    pool_ids: list[int],
    pool_reprs: np.ndarray,
    knn_k: int,
) -> CandidateSet:
    """Union of each anchor's knn_k nearest unlabeled representations.

    Exact search, squared Euclidean distance, distance ties broken by id;
    knn_k is clamped to the pool size. Candidate order is first-attraction
    order (anchors in creation order, then neighbor rank), and every
    attracting anchor is recorded per id.
    """
    if not pool_ids:
        raise UsageError("unlabeled pool is empty")
    k = min(knn_k, len(pool_ids))
    ids: list[int] = []
    attraction: dict[int, list[int]] = {}
    for anchor_idx, anchor in enumerate(anchors):
        for ex_id in knn_ids(anchor.z, pool_ids, pool_reprs, k):
            if ex_id not in attraction:
                ids.append(ex_id)
                attraction[ex_id] = []
            attraction[ex_id].append(anchor_idx)
    return CandidateSet(ids=ids, attraction=attraction)


def select_batch(
    params: ModelParams,
    candidates: CandidateSet,
    dataset: DatasetSplit,
    pool: PoolState,
    b: int,
) -> AcquisitionBatch:
    """Top-b candidates by predictive entropy, topped up from the rest of the
    pool when the candidate set is smaller than b; ties break by ascending id.
    """
    unlabeled = list(pool.unlabeled_ids)
    if not unlabeled:
        raise UsageError("unlabeled pool is empty")
    if b < 1:
        raise UsageError("b must be >= 1")
    unl_set = pool.unlabeled_set
    for ex_id in candidates.ids:
        if ex_id not in unl_set:
            raise UsageError(f"candidate {ex_id} is not unlabeled")

    ranked, scores = rank_ids_by_entropy(params, dataset, candidates.ids)
    chosen = ranked[: min(b, len(ranked))]
    all_scores = dict(scores)
    want = min(b, len(unlabeled))
    if len(chosen) < want:
        cand_set = set(candidates.ids)
        rest = [i for i in unlabeled if i not in cand_set]
        ranked_rest, scores_rest = rank_ids_by_entropy(params, dataset, rest)
        all_scores.update(scores_rest)
        chosen = chosen + ranked_rest[: want - len(chosen)]
    return AcquisitionBatch(
        ids=chosen,
        scores={i: all_scores[i] for i in chosen},
        strategy="alvin",
        attraction={i: len(candidates.attraction.get(i, ())) for i in chosen},
    )


def _finish_with_topup(
    picked: list[int],
    candidates: CandidateSet,
    params: ModelParams,
    dataset: DatasetSplit,
    pool: PoolState,
    b: int,
    strategy: str,
) -> AcquisitionBatch:
    unlabeled = list(pool.unlabeled_ids)
    want = min(b, len(unlabeled))
    if len(picked) < want:
        exclude = set(picked) | set(candidates.ids)
        rest = [i for i in unlabeled if i not in exclude]
        ranked_rest, _ = rank_ids_by_entropy(params, dataset, rest)
        picked = picked + ranked_rest[: want - len(picked)]
    _, scores = rank_ids_by_entropy(params, dataset, picked)
    return AcquisitionBatch(
        ids=picked,
        scores={i: scores[i] for i in picked},
        strategy=strategy,
        attraction={i: len(candidates.attraction.get(i, ())) for i in picked},
    )


def alvin_engine(
    params: ModelParams,
    labeled: list[Example],
    trace,
    pool: PoolState,
    dataset: DatasetSplit,
    cfg: AlvinConfig,
    rng: RngState,
    pairing: str = "verdict",
    all_pairs: bool = False,
    ranking: str = "entropy",
    strategy_name: str = "alvin",
) -> AcquisitionBatch:
    """Shared round implementation for the standard strategy and its variants."""
    if pairing == "verdict":
        verdict = infer_min_maj(trace)
        groups = _groups_from_verdict(labeled, verdict)
    elif pairing == "random":
        groups = _groups_random(labeled)
    else:
        raise UsageError(f"unknown pairing mode {pairing!r}")

    features_by_id = {ex.id: ex.features for ex in labeled}
    anchors = _make_anchors(params, features_by_id, groups, cfg, rng, all_pairs=all_pairs)
    if not anchors:
        b = min(cfg.batch_size, len(pool.unlabeled_ids))
        batch = top_b_by_entropy(params, dataset, pool, b, strategy_name)
        return batch

    pool_ids = list(pool.unlabeled_ids)
    pool_reprs = encode_matrix(params, dataset.features_for(pool_ids))
    candidates = gather_candidates(anchors, pool_ids, pool_reprs, cfg.knn_k)

    if ranking == "entropy":
        batch = select_batch(params, candidates, dataset, pool, cfg.batch_size)
    elif ranking == "uniform":
        take = min(cfg.batch_size, len(candidates.ids))
        picked = [candidates.ids[i] for i in rng.sample(len(candidates.ids), take)]
        batch = _finish_with_topup(picked, candidates, params, dataset, pool, cfg.batch_size, strategy_name)
    elif ranking == "kmeans":
        reprs = encode_matrix(params, dataset.features_for(candidates.ids))
        k = min(cfg.batch_size, len(candidates.ids))
        picked = kmeans_representatives(candidates.ids, reprs, k, rng)
        batch = _finish_with_topup(picked, candidates, params, dataset, pool, cfg.batch_size, strategy_name)
    else:
        raise UsageError(f"unknown ranking mode {ranking!r}")
    batch.strategy = strategy_name
    return batch


def alvin_select(
    params: ModelParams,
    labeled: list[Example],
    trace,
    pool: PoolState,
    dataset: DatasetSplit,
    cfg: AlvinConfig,
    rng: RngState,
) -> AcquisitionBatch:
    """One standard acquisition round: dynamics verdict, anchors, KNN
    gathering, entropy top-b. Falls back to plain uncertainty when no class
    holds both a minority and a majority example."""
    return alvin_engine(params, labeled, trace, pool, dataset, cfg, rng)
