"""Baseline acquisition strategies and the uniform selection interface.

Every strategy consumes a SelectionContext and returns an AcquisitionBatch of
exactly b distinct unlabeled ids, deterministically given the context's rng.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .alvin import AlvinConfig, alvin_engine
from .datasets import DatasetSplit, PoolState
from .errors import UsageError
from .model import ModelParams, encode_matrix, proba_matrix
from .numkit import RngState
from .selection import (
    AcquisitionBatch,
    kmeans_representatives,
    rank_ids_by_entropy,
    top_b_by_entropy,
)

DEFAULT_CAL_NEIGHBORS = 10
DEFAULT_MIX_GRID = (0.1, 0.2, 0.3)


class StrategyId(str, Enum):
    RANDOM = "random"
    UNCERTAINTY = "uncertainty"
    BADGE = "badge"
    EMBED_KMEANS = "embed_kmeans"
    CAL = "cal"
    ALFA_MIX = "alfa_mix"
    ALVIN = "alvin"
    ALVIN_RAN = "alvin_ran"
    ALVIN_INT_ALL = "alvin_int_all"
    ALVIN_UNI = "alvin_uni"
    ALVIN_KMEAN = "alvin_kmean"


def _check_b(b: int, pool: PoolState) -> None:
    if b < 1:
        raise UsageError("b must be >= 1")
    if not pool.unlabeled_ids:
        raise UsageError("unlabeled pool is empty")
    if b > len(pool.unlabeled_ids):
        raise UsageError(f"b={b} exceeds unlabeled pool size {len(pool.unlabeled_ids)}")


def select_random(pool: PoolState, b: int, rng: RngState) -> AcquisitionBatch:
    """Uniform sample of b unlabeled ids, without replacement."""
    _check_b(b, pool)
    unlabeled = list(pool.unlabeled_ids)
    ids = [unlabeled[i] for i in rng.sample(len(unlabeled), b)]
    return AcquisitionBatch(ids=ids, scores={i: 0.0 for i in ids}, strategy=StrategyId.RANDOM.value)


def select_uncertainty(params: ModelParams, dataset: DatasetSplit, pool: PoolState, b: int) -> AcquisitionBatch:
    """Top-b unlabeled ids by predictive entropy, ties by ascending id."""
    _check_b(b, pool)
    return top_b_by_entropy(params, dataset, pool, b, StrategyId.UNCERTAINTY.value)


def gradient_embeddings_matrix(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Row-stacked last-layer gradients under each row's predicted label."""
    z = encode_matrix(params, features)
    p = proba_matrix(params, features)
    diff = p.copy()
    diff[np.arange(p.shape[0]), np.argmax(p, axis=1)] -= 1.0
    return np.einsum("nc,nh->nch", diff, z).reshape(p.shape[0], -1)


def select_badge(
    params: ModelParams, dataset: DatasetSplit, pool: PoolState, b: int, rng: RngState
) -> AcquisitionBatch:
    """k-means++ seeding over gradient embeddings; the b seeds are the batch."""
    _check_b(b, pool)
    unlabeled = list(pool.unlabeled_ids)
    emb = gradient_embeddings_matrix(params, dataset.features_for(unlabeled))
    from .numkit import kmeans_pp_init

    rows = kmeans_pp_init(emb, b, rng)
    ids = [unlabeled[r] for r in rows]
    return AcquisitionBatch(ids=ids, scores={i: 0.0 for i in ids}, strategy=StrategyId.BADGE.value)


def select_embed_kmeans(
    params: ModelParams, dataset: DatasetSplit, pool: PoolState, b: int, rng: RngState
) -> AcquisitionBatch:
    """b-means clustering of unlabeled representations; one id per cluster,
    the member closest to its centroid."""
    _check_b(b, pool)
    unlabeled = list(pool.unlabeled_ids)
    reprs = encode_matrix(params, dataset.features_for(unlabeled))
    ids = kmeans_representatives(unlabeled, reprs, b, rng)
    return AcquisitionBatch(ids=ids, scores={i: 0.0 for i in ids}, strategy=StrategyId.EMBED_KMEANS.value)


def cal_scores(
    params: ModelParams,
    dataset: DatasetSplit,
    labeled_ids: list[int],
    unlabeled_ids: list[int],
    neighbor_k: int = DEFAULT_CAL_NEIGHBORS,
) -> dict[int, float]:
    """Per-unlabeled-id mean KL(neighbor || candidate) over the neighbor_k
    nearest labeled examples in representation space."""
    if not labeled_ids:
        raise UsageError("CAL needs a non-empty labeled set")
    k = min(neighbor_k, len(labeled_ids))
    z_lab = encode_matrix(params, dataset.features_for(labeled_ids))
    z_unl = encode_matrix(params, dataset.features_for(unlabeled_ids))
    logits_lab = z_lab @ params.w_cls.T + params.b_cls
    logits_unl = z_unl @ params.w_cls.T + params.b_cls
    log_p_lab = logits_lab - np.max(logits_lab, axis=1, keepdims=True)
    log_p_lab -= np.log(np.sum(np.exp(log_p_lab), axis=1, keepdims=True))
    log_p_unl = logits_unl - np.max(logits_unl, axis=1, keepdims=True)
    log_p_unl -= np.log(np.sum(np.exp(log_p_unl), axis=1, keepdims=True))
    p_lab = np.exp(log_p_lab)

    lab_id_arr = np.array(labeled_ids)
    scores: dict[int, float] = {}
    block = 256
    for start in range(0, len(unlabeled_ids), block):
        chunk = z_unl[start : start + block]
        diffs = chunk[:, None, :] - z_lab[None, :, :]
        d2 = np.sum(diffs * diffs, axis=2)
        for row in range(chunk.shape[0]):
            u = start + row
            order = np.lexsort((lab_id_arr, d2[row]))[:k]
            kl = np.sum(p_lab[order] * (log_p_lab[order] - log_p_unl[u][None, :]), axis=1)
            scores[unlabeled_ids[u]] = float(np.mean(kl))
    return scores


def select_cal(
    params: ModelParams,
    dataset: DatasetSplit,
    pool: PoolState,
    b: int,
    neighbor_k: int = DEFAULT_CAL_NEIGHBORS,
) -> AcquisitionBatch:
    """Top-b unlabeled ids whose predictions diverge most (mean KL) from their
    nearest labeled neighbors."""
    _check_b(b, pool)
    labeled_ids = list(pool.labeled_ids)
    unlabeled_ids = list(pool.unlabeled_ids)
    scores = cal_scores(params, dataset, labeled_ids, unlabeled_ids, neighbor_k)
    ranked = sorted(unlabeled_ids, key=lambda i: (-scores[i], i))
    chosen = ranked[:b]
    return AcquisitionBatch(
        ids=chosen, scores={i: scores[i] for i in chosen}, strategy=StrategyId.CAL.value
    )


def alfa_mix_candidates(
    params: ModelParams,
    dataset: DatasetSplit,
    labeled_ids: list[int],
    unlabeled_ids: list[int],
    eps_grid: tuple[float, ...] = DEFAULT_MIX_GRID,
) -> list[int]:
    """Unlabeled ids whose mix with some class-mean anchor flips the anchor's
    predicted label for some grid weight."""
    labels = dataset.labels_for(labeled_ids)
    z_lab = encode_matrix(params, dataset.features_for(labeled_ids))
    classes = sorted(set(int(c) for c in labels))
    if len(classes) < dataset.num_classes:
        raise UsageError("ALFA-Mix needs at least one labeled example per class")
    z_unl = encode_matrix(params, dataset.features_for(unlabeled_ids))
    flagged = np.zeros(len(unlabeled_ids), dtype=bool)
    for c in classes:
        anchor = z_lab[labels == c].mean(axis=0)
        anchor_pred = int(np.argmax(anchor @ params.w_cls.T + params.b_cls))
        for lam in eps_grid:
            mixed = lam * z_unl + (1.0 - lam) * anchor
            preds = np.argmax(mixed @ params.w_cls.T + params.b_cls, axis=1)
            flagged |= preds != anchor_pred
    return [unlabeled_ids[i] for i in range(len(unlabeled_ids)) if flagged[i]]


def select_alfa_mix(
    params: ModelParams,
    dataset: DatasetSplit,
    pool: PoolState,
    b: int,
    eps_grid: tuple[float, ...] = DEFAULT_MIX_GRID,
    rng: RngState | None = None,
) -> AcquisitionBatch:
    """Cluster the prediction-flipping candidates and pick one per cluster;
    top up with plain uncertainty when candidates run short."""
    _check_b(b, pool)
    if rng is None:
        rng = RngState(0)
    labeled_ids = list(pool.labeled_ids)
    unlabeled_ids = list(pool.unlabeled_ids)
    candidates = alfa_mix_candidates(params, dataset, labeled_ids, unlabeled_ids, eps_grid)
    picked: list[int] = []
    if candidates:
        reprs = encode_matrix(params, dataset.features_for(candidates))
        picked = kmeans_representatives(candidates, reprs, min(b, len(candidates)), rng)
    if len(picked) < b:
        exclude = set(picked)
        rest = [i for i in unlabeled_ids if i not in exclude]
        ranked_rest, _ = rank_ids_by_entropy(params, dataset, rest)
        picked = picked + ranked_rest[: b - len(picked)]
    _, scores = rank_ids_by_entropy(params, dataset, picked)
    return AcquisitionBatch(
        ids=picked, scores={i: scores[i] for i in picked}, strategy=StrategyId.ALFA_MIX.value
    )


_VARIANT_MODES = {
    StrategyId.ALVIN: dict(pairing="verdict", all_pairs=False, ranking="entropy"),
    StrategyId.ALVIN_RAN: dict(pairing="random", all_pairs=False, ranking="entropy"),
    StrategyId.ALVIN_INT_ALL: dict(pairing="verdict", all_pairs=True, ranking="entropy"),
    StrategyId.ALVIN_UNI: dict(pairing="verdict", all_pairs=False, ranking="uniform"),
    StrategyId.ALVIN_KMEAN: dict(pairing="verdict", all_pairs=False, ranking="kmeans"),
}


def select_alvin_variant(
    variant: StrategyId,
    params: ModelParams,
    labeled,
    trace,
    pool: PoolState,
    dataset: DatasetSplit,
    cfg: AlvinConfig,
    rng: RngState,
) -> AcquisitionBatch:
    if variant not in _VARIANT_MODES:
        raise UsageError(f"{variant} is not an anchor-strategy variant")
    modes = _VARIANT_MODES[variant]
    return alvin_engine(
        params,
        labeled,
        trace,
        pool,
        dataset,
        cfg,
        rng,
        strategy_name=variant.value,
        **modes,
    )


@dataclass
class SelectionContext:
    """Everything a strategy may need for one round."""

    params: ModelParams
    dataset: DatasetSplit
    pool: PoolState
    trace: object | None
    b: int
    alvin_cfg: AlvinConfig
    rng: RngState

    @property
    def labeled_examples(self):
        return [self.dataset.by_id(i) for i in self.pool.labeled_ids]


def select(strategy: StrategyId, ctx: SelectionContext) -> AcquisitionBatch:
    """Uniform dispatch: swap strategies without touching any other config."""
    strategy = StrategyId(strategy)
    if strategy == StrategyId.RANDOM:
        return select_random(ctx.pool, ctx.b, ctx.rng)
    if strategy == StrategyId.UNCERTAINTY:
        return select_uncertainty(ctx.params, ctx.dataset, ctx.pool, ctx.b)
    if strategy == StrategyId.BADGE:
        return select_badge(ctx.params, ctx.dataset, ctx.pool, ctx.b, ctx.rng)
    if strategy == StrategyId.EMBED_KMEANS:
        return select_embed_kmeans(ctx.params, ctx.dataset, ctx.pool, ctx.b, ctx.rng)
    if strategy == StrategyId.CAL:
        return select_cal(ctx.params, ctx.dataset, ctx.pool, ctx.b)
    if strategy == StrategyId.ALFA_MIX:
        return select_alfa_mix(ctx.params, ctx.dataset, ctx.pool, ctx.b, rng=ctx.rng)
    _check_b(ctx.b, ctx.pool)
    cfg = replace(ctx.alvin_cfg, batch_size=ctx.b)
    return select_alvin_variant(
        strategy,
        ctx.params,
        ctx.labeled_examples,
        ctx.trace,
        ctx.pool,
        ctx.dataset,
        cfg,
        ctx.rng,
    )
