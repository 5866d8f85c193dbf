"""Multi-round active-learning experiments: train, evaluate, select, annotate.

A run holds one or more seeds. Per seed, every piece of randomness is derived
from the seed through tagged child generators, so a rerun with the same config
produces byte-identical canonical outputs. Selection wall time is inherently
non-deterministic and therefore lives in a sidecar CSV, never in the canonical
JSON-lines results.

Round bookkeeping: row 0 evaluates the model trained on the seed labeled set;
row r >= 1 evaluates the model trained after the r-th annotation batch, and
carries that batch plus its quality report. The loop stops once the labeled
count reaches budget_fraction * |train|.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .alvin import AlvinConfig
from .baselines import SelectionContext, StrategyId, select
from .datasets import (
    DatasetSplit,
    PoolState,
    ShortcutConfig,
    annotate,
    audit_pool,
    generate_shortcut_dataset,
    init_pool,
    load_embedding_dataset,
)
from .dynamics import export_verdict_csv, infer_min_maj, minority_recall
from .errors import ConfigError, UsageError
from .metrics import BatchReport, build_batch_report
from .model import ModelParams, TrainConfig, init_params, proba_matrix, train
from .numkit import RngState
from .selection import AcquisitionBatch, export_batch_csv

CHECKPOINT_PERCENTS = (1, 5, 10)

# Child-generator tags (documented so streams can be reproduced externally).
TAG_DATA = 10
TAG_POOL = 11
TAG_REF_INIT = 12
TAG_REF_TRAIN = 13
TAG_ROUND_INIT = 20
TAG_ROUND_TRAIN = 21
TAG_SELECT = 22


@dataclass(frozen=True)
class FileDatasetConfig:
    """Paths of pre-computed embedding CSVs plus their schema sidecars."""

    train_csv: str
    train_schema: str
    id_csv: str
    id_schema: str
    ood_csv: str
    ood_schema: str


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: ShortcutConfig | FileDatasetConfig
    strategy: StrategyId = StrategyId.ALVIN
    train: TrainConfig = TrainConfig()
    alvin: AlvinConfig = AlvinConfig()
    budget_fraction: float = 0.10
    seed_fraction: float = 0.001
    b: int = 50
    seeds: tuple[int, ...] = (1, 2, 3)
    out_dir: str | None = None

    def __post_init__(self):
        if not (0.0 < self.seed_fraction < self.budget_fraction <= 1.0):
            raise ConfigError("need 0 < seed_fraction < budget_fraction <= 1")
        if self.b < 1:
            raise ConfigError("b must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed required")


@dataclass(frozen=True)
class RoundResult:
    round_index: int
    labeled_count: int
    id_accuracy: float
    ood_accuracy: float
    minority_recall: float | None
    batch_ids: list[int] | None
    report: BatchReport | None
    selection_seconds: float | None


def evaluate(params: ModelParams, split: DatasetSplit) -> float:
    """Fraction of split examples whose argmax probability matches the label;
    argmax ties resolve to the lowest class index."""
    feats = np.stack([ex.features for ex in split])
    labels = np.array([ex.label for ex in split])
    preds = np.argmax(proba_matrix(params, feats), axis=1)
    return float(np.mean(preds == labels))


def _round_to_canonical(row: RoundResult) -> dict:
    rep = row.report
    return {
        "round": row.round_index,
        "labeled_count": row.labeled_count,
        "id_accuracy": row.id_accuracy,
        "ood_accuracy": row.ood_accuracy,
        "minority_recall": row.minority_recall,
        "batch_ids": row.batch_ids,
        "batch_uncertainty": None if rep is None else rep.uncertainty,
        "batch_diversity": None if rep is None or rep.diversity_degenerate else rep.diversity,
        "batch_diversity_degenerate": None if rep is None else rep.diversity_degenerate,
        "batch_representativeness": None if rep is None else rep.representativeness,
    }


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def build_splits(cfg: ExperimentConfig, rng: RngState) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    if isinstance(cfg.dataset, ShortcutConfig):
        return generate_shortcut_dataset(cfg.dataset, rng)
    fd = cfg.dataset
    return (
        load_embedding_dataset(fd.train_csv, fd.train_schema),
        load_embedding_dataset(fd.id_csv, fd.id_schema),
        load_embedding_dataset(fd.ood_csv, fd.ood_schema),
    )


def _run_seed(
    cfg: ExperimentConfig,
    seed: int,
    seed_dir: Path | None,
) -> list[RoundResult]:
    root = RngState(seed)
    train_split, id_split, ood_split = build_splits(cfg, root.child(TAG_DATA))
    pool = init_pool(train_split, cfg.seed_fraction, root.child(TAG_POOL))
    threshold = cfg.budget_fraction * len(train_split)

    truth = {ex.id: ex.group for ex in train_split}
    truth_available = all(g is not None for g in truth.values())

    ref_init = init_params(train_split.dimension, train_split.num_classes, root.child(TAG_REF_INIT))
    ref_params, _ = train(ref_init, list(train_split.examples), cfg.train, root.child(TAG_REF_TRAIN))

    results_fh = None
    timing_fh = None
    batch_rows: list[tuple[int, AcquisitionBatch]] = []
    if seed_dir is not None:
        seed_dir.mkdir(parents=True, exist_ok=True)
        meta = {"seed": seed, "strategy": cfg.strategy.value, "train_size": len(train_split)}
        (seed_dir / "meta.json").write_text(_canonical_json(meta) + "\n")
        results_fh = (seed_dir / "results.jsonl").open("w")
        timing_fh = (seed_dir / "timing.csv").open("w")
        timing_fh.write("round,seconds\n")

    rows: list[RoundResult] = []
    pending_batch: AcquisitionBatch | None = None
    pending_report: BatchReport | None = None
    verdict = {}
    try:
        round_index = 0
        while True:
            labeled = [train_split.by_id(i) for i in pool.labeled_ids]
            params0 = init_params(
                train_split.dimension, train_split.num_classes, root.child(TAG_ROUND_INIT, round_index)
            )
            params, trace = train(params0, labeled, cfg.train, root.child(TAG_ROUND_TRAIN, round_index))
            verdict = infer_min_maj(trace)
            recall = minority_recall(verdict, truth) if truth_available else None
            row = RoundResult(
                round_index=round_index,
                labeled_count=len(pool.labeled_ids),
                id_accuracy=evaluate(params, id_split),
                ood_accuracy=evaluate(params, ood_split),
                minority_recall=recall,
                batch_ids=None if pending_batch is None else list(pending_batch.ids),
                report=pending_report,
                selection_seconds=None if pending_batch is None else pending_batch.seconds,
            )
            rows.append(row)
            if results_fh is not None:
                results_fh.write(_canonical_json(_round_to_canonical(row)) + "\n")
                results_fh.flush()
                if timing_fh is not None and row.selection_seconds is not None:
                    timing_fh.write(f"{row.round_index},{row.selection_seconds!r}\n")
                    timing_fh.flush()

            if len(pool.labeled_ids) >= threshold:
                break

            b_round = min(cfg.b, len(pool.unlabeled_ids))
            ctx = SelectionContext(
                params=params,
                dataset=train_split,
                pool=pool,
                trace=trace,
                b=b_round,
                alvin_cfg=cfg.alvin,
                rng=root.child(TAG_SELECT, round_index),
            )
            t0 = time.perf_counter()
            batch = select(cfg.strategy, ctx)
            batch.seconds = time.perf_counter() - t0

            pool_examples = [train_split.by_id(i) for i in pool.unlabeled_ids]
            batch_examples = [train_split.by_id(i) for i in batch.ids]
            pending_report = build_batch_report(
                ref_params, batch_examples, pool_examples, round_index + 1
            )
            pending_batch = batch
            batch_rows.append((round_index + 1, batch))

            pool = annotate(pool, batch.ids)
            audit_pool(pool, train_split.ids)
            round_index += 1
    finally:
        if results_fh is not None:
            results_fh.close()
        if timing_fh is not None:
            timing_fh.close()

    if seed_dir is not None:
        export_batch_csv(batch_rows, seed_dir / "batches.csv")
        if verdict:
            export_verdict_csv(verdict, seed_dir / "verdict_final.csv")
    return rows


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path | None = None
) -> dict[int, list[RoundResult]]:
    """Run every seed sequentially; persist incrementally when out_dir given.

    Raises RuntimeError (after writing a failure marker) if any round fails,
    so there are no partial-silent results.
    """
    out = Path(out_dir) if out_dir is not None else (Path(cfg.out_dir) if cfg.out_dir else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(_canonical_json(config_to_dict(cfg)) + "\n")
    results: dict[int, list[RoundResult]] = {}
    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}" if out is not None else None
        try:
            results[seed] = _run_seed(cfg, seed, seed_dir)
        except Exception as e:
            if out is not None:
                (out / "FAILED").write_text(f"seed {seed}: {e}\n")
            raise RuntimeError(f"experiment failed at seed {seed}: {e}") from e
    if out is not None:
        (out / "SUCCESS").write_text("ok\n")
    return results


def time_selection(strategy: StrategyId, ctx: SelectionContext, n: int = 100) -> float:
    """Wall-clock seconds for one selection call with batch size n."""
    timed_ctx = replace(ctx, b=n)
    t0 = time.perf_counter()
    select(strategy, timed_ctx)
    return time.perf_counter() - t0


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and population standard deviation (ddof=0)."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def checkpoint_rows(rows: list[RoundResult], train_size: int) -> dict[int, RoundResult]:
    """The round nearest each checkpoint labeled fraction (1/5/10%)."""
    out = {}
    for pct in CHECKPOINT_PERCENTS:
        target = pct / 100.0 * train_size
        out[pct] = min(rows, key=lambda r: (abs(r.labeled_count - target), r.round_index))
    return out


def _load_run(run_dir: Path) -> tuple[str, dict[int, dict]]:
    cfg = json.loads((run_dir / "config.json").read_text())
    strategy = cfg["strategy"]
    seeds = {}
    for seed_dir in sorted(run_dir.glob("seed_*")):
        meta = json.loads((seed_dir / "meta.json").read_text())
        rounds = []
        for line in (seed_dir / "results.jsonl").read_text().splitlines():
            obj = json.loads(line)
            rounds.append(
                RoundResult(
                    round_index=obj["round"],
                    labeled_count=obj["labeled_count"],
                    id_accuracy=obj["id_accuracy"],
                    ood_accuracy=obj["ood_accuracy"],
                    minority_recall=obj["minority_recall"],
                    batch_ids=obj["batch_ids"],
                    report=None,
                    selection_seconds=None,
                )
            )
        timings = []
        timing_path = seed_dir / "timing.csv"
        if timing_path.exists():
            for line in timing_path.read_text().splitlines()[1:]:
                _, seconds = line.split(",")
                timings.append(float(seconds))
        seeds[meta["seed"]] = {
            "rounds": rounds,
            "train_size": meta["train_size"],
            "timings": timings,
        }
    return strategy, seeds


def summarize(run_dirs: list[str | Path], out_dir: str | Path) -> None:
    """Aggregate one or more run directories into report CSVs.

    Writes summary.csv (final-round accuracy), learning_curve.csv (1/5/10%
    checkpoints), minority_recall.csv and timing.csv. Stds are population
    standard deviations over seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [_load_run(Path(d)) for d in run_dirs]
    if not runs or not any(seeds for _, seeds in runs):
        raise UsageError("no completed seeds found in the given run directories")

    note = "# std is the population standard deviation (ddof=0) over seeds\n"

    with (out / "summary.csv").open("w") as fh:
        fh.write(note)
        fh.write("strategy,seeds,final_labeled,id_mean,id_std,ood_mean,ood_std\n")
        for strategy, seeds in runs:
            finals = [data["rounds"][-1] for data in seeds.values()]
            id_m, id_s = mean_std([r.id_accuracy for r in finals])
            ood_m, ood_s = mean_std([r.ood_accuracy for r in finals])
            labeled = finals[0].labeled_count if finals else 0
            fh.write(
                f"{strategy},{len(seeds)},{labeled},{id_m!r},{id_s!r},{ood_m!r},{ood_s!r}\n"
            )

    with (out / "learning_curve.csv").open("w") as fh:
        fh.write(note)
        fh.write("strategy,checkpoint_pct,labeled,id_mean,id_std,ood_mean,ood_std\n")
        for strategy, seeds in runs:
            for pct in CHECKPOINT_PERCENTS:
                picks = [
                    checkpoint_rows(data["rounds"], data["train_size"])[pct]
                    for data in seeds.values()
                ]
                id_m, id_s = mean_std([r.id_accuracy for r in picks])
                ood_m, ood_s = mean_std([r.ood_accuracy for r in picks])
                labeled = picks[0].labeled_count
                fh.write(
                    f"{strategy},{pct},{labeled},{id_m!r},{id_s!r},{ood_m!r},{ood_s!r}\n"
                )

    with (out / "minority_recall.csv").open("w") as fh:
        fh.write(note)
        fh.write("strategy,checkpoint_pct,recall_mean,recall_std\n")
        for strategy, seeds in runs:
            for pct in CHECKPOINT_PERCENTS:
                picks = [
                    checkpoint_rows(data["rounds"], data["train_size"])[pct]
                    for data in seeds.values()
                ]
                recalls = [r.minority_recall for r in picks]
                if any(r is None for r in recalls):
                    continue
                m, s = mean_std(recalls)
                fh.write(f"{strategy},{pct},{m!r},{s!r}\n")

    with (out / "timing.csv").open("w") as fh:
        fh.write("strategy,mean_selection_seconds\n")
        for strategy, seeds in runs:
            all_timings = [t for data in seeds.values() for t in data["timings"]]
            if not all_timings:
                continue
            fh.write(f"{strategy},{float(np.mean(all_timings))!r}\n")


# ---------------------------------------------------------------------------
# Config (de)serialization: strict field checking, JSON-friendly
# ---------------------------------------------------------------------------


def _take(d: dict, allowed: set[str], what: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


def dataset_from_dict(d: dict) -> ShortcutConfig | FileDatasetConfig:
    if "kind" not in d:
        raise ConfigError("dataset config needs a 'kind' of 'synthetic' or 'files'")
    kind = d["kind"]
    body = {k: v for k, v in d.items() if k != "kind"}
    if kind == "synthetic":
        _take(body, {f for f in ShortcutConfig.__dataclass_fields__}, "synthetic dataset")
        return ShortcutConfig(**body)
    if kind == "files":
        _take(body, {f for f in FileDatasetConfig.__dataclass_fields__}, "file dataset")
        try:
            return FileDatasetConfig(**body)
        except TypeError as e:
            raise ConfigError(f"file dataset config: {e}") from e
    raise ConfigError(f"unknown dataset kind {kind!r}")


def config_from_dict(d: dict) -> ExperimentConfig:
    _take(
        d,
        {"dataset", "strategy", "train", "alvin", "budget_fraction", "seed_fraction", "b", "seeds", "out_dir"},
        "experiment",
    )
    if "dataset" not in d:
        raise ConfigError("experiment config needs a 'dataset' section")
    kwargs: dict = {"dataset": dataset_from_dict(dict(d["dataset"]))}
    if "strategy" in d:
        try:
            kwargs["strategy"] = StrategyId(d["strategy"])
        except ValueError:
            raise ConfigError(f"unknown strategy {d['strategy']!r}") from None
    if "train" in d:
        body = dict(d["train"])
        _take(body, {f for f in TrainConfig.__dataclass_fields__}, "train")
        kwargs["train"] = TrainConfig(**body)
    if "alvin" in d:
        body = dict(d["alvin"])
        _take(body, {f for f in AlvinConfig.__dataclass_fields__}, "alvin")
        kwargs["alvin"] = AlvinConfig(**body)
    for key in ("budget_fraction", "seed_fraction", "b", "out_dir"):
        if key in d:
            kwargs[key] = d[key]
    if "seeds" in d:
        kwargs["seeds"] = tuple(int(s) for s in d["seeds"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.dataset, ShortcutConfig):
        dataset = {"kind": "synthetic", **{
            f: getattr(cfg.dataset, f) for f in ShortcutConfig.__dataclass_fields__
        }}
    else:
        dataset = {"kind": "files", **{
            f: getattr(cfg.dataset, f) for f in FileDatasetConfig.__dataclass_fields__
        }}
    return {
        "dataset": dataset,
        "strategy": cfg.strategy.value,
        "train": {f: getattr(cfg.train, f) for f in TrainConfig.__dataclass_fields__},
        "alvin": {f: getattr(cfg.alvin, f) for f in AlvinConfig.__dataclass_fields__},
        "budget_fraction": cfg.budget_fraction,
        "seed_fraction": cfg.seed_fraction,
        "b": cfg.b,
        "seeds": list(cfg.seeds),
        "out_dir": cfg.out_dir,
    }
