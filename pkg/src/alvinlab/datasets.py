"""Synthetic shortcut datasets, embedding-file ingestion, and pool state.

The synthetic generator plants two feature blocks per example: a noisy "core"
block whose class-conditional means genuinely identify the label, and a crisp
"shortcut" block that encodes the label for majority-group examples but a
different class for minority-group ones. The shortcut block has a much larger
value scale than the core block, so gradient training latches onto it first;
that ordering is what the training-dynamics detector and the anchor strategy
rely on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, UsageError
from .numkit import RngState

GROUP_MINORITY = "min"
GROUP_MAJORITY = "maj"
GROUP_UNKNOWN = "_"

ROLE_TRAIN = "train"
ROLE_ID_TEST = "id_test"
ROLE_OOD_TEST = "ood_test"

# Core block geometry. Dims [0, C) carry one-hot class means with a small
# value scale: the Mahalanobis separation (~3.5) makes an optimal linear model
# on the core block alone ~96% accurate, and keeps the class signal visible to
# raw-feature / representation distances, while the small value scale keeps
# the core's gradient far below the shortcut block's (unit scale, jitter
# cfg.noise_std), so gradient training fits the shortcut first. Dims [C, ..)
# are near-inert filler noise. See ShortcutConfig for the group semantics.
CORE_SEPARATION = 0.1
CORE_STD = 0.04
CORE_FILLER_STD = 0.03
SHORTCUT_SCALE = 1.0


@dataclass(frozen=True)
class Example:
    """One labeled point: stable id, dense features, class, optional group tag."""

    id: int
    features: np.ndarray
    label: int
    group: str | None = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1 or f.size == 0 or not np.all(np.isfinite(f)):
            raise UsageError(f"example {self.id}: features must be finite and 1-D")
        object.__setattr__(self, "features", f)
        if self.group is not None and self.group not in (GROUP_MINORITY, GROUP_MAJORITY):
            raise UsageError(f"example {self.id}: bad group tag {self.group!r}")


class DatasetSplit:
    """Immutable collection of examples with a class count and a role."""

    def __init__(self, examples: list[Example], num_classes: int, role: str):
        if not examples:
            raise UsageError("a dataset split cannot be empty")
        ids = [ex.id for ex in examples]
        if len(set(ids)) != len(ids):
            raise UsageError("duplicate example ids in split")
        dim = examples[0].features.shape[0]
        for ex in examples:
            if ex.label >= num_classes or ex.label < 0:
                raise UsageError(f"example {ex.id}: label {ex.label} outside 0..{num_classes - 1}")
            if ex.features.shape[0] != dim:
                raise UsageError(f"example {ex.id}: dimension {ex.features.shape[0]} != {dim}")
        self.examples: tuple[Example, ...] = tuple(examples)
        self.num_classes = num_classes
        self.role = role
        self.dimension = dim
        self._by_id = {ex.id: ex for ex in self.examples}
        self._matrix = np.stack([ex.features for ex in self.examples])
        self._row_of = {ex.id: i for i, ex in enumerate(self.examples)}

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self, ex_id: int) -> Example:
        try:
            return self._by_id[ex_id]
        except KeyError:
            raise UsageError(f"unknown example id {ex_id}") from None

    @property
    def ids(self) -> list[int]:
        return [ex.id for ex in self.examples]

    def features_for(self, ids: list[int]) -> np.ndarray:
        rows = [self._row_of[i] for i in ids]
        return self._matrix[rows]

    def labels_for(self, ids: list[int]) -> np.ndarray:
        return np.array([self._by_id[i].label for i in ids], dtype=np.int64)

    def groups_for(self, ids: list[int]) -> dict[int, str | None]:
        return {i: self._by_id[i].group for i in ids}


@dataclass(frozen=True)
class ShortcutConfig:
    """Parameters of the synthetic shortcut dataset."""

    num_classes: int = 2
    core_dim: int = 8
    shortcut_dim: int = 2
    majority_fraction: float = 0.9
    train_size: int = 5000
    id_size: int = 2000
    ood_size: int = 2000
    noise_std: float = 0.1
    ood_majority_fraction: float | None = None  # None -> 1 - majority_fraction

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.core_dim < self.num_classes:
            raise ConfigError("core_dim must be >= num_classes (one mean direction per class)")
        if self.shortcut_dim < self.num_classes:
            raise ConfigError("shortcut_dim must be >= num_classes (one-hot class code)")
        if not (0.0 < self.majority_fraction <= 1.0):
            raise ConfigError("majority_fraction must be in (0, 1]")
        if self.ood_majority_fraction is not None and not (0.0 <= self.ood_majority_fraction <= 1.0):
            raise ConfigError("ood_majority_fraction must be in [0, 1]")
        if min(self.train_size, self.id_size, self.ood_size) < self.num_classes:
            raise ConfigError("every split must hold at least one example per class")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    @property
    def dimension(self) -> int:
        return self.core_dim + self.shortcut_dim

    def resolved_ood_majority_fraction(self) -> float:
        if self.ood_majority_fraction is None:
            return 1.0 - self.majority_fraction
        return self.ood_majority_fraction


def _split_class_sizes(size: int, num_classes: int) -> list[int]:
    base = size // num_classes
    sizes = [base] * num_classes
    for c in range(size - base * num_classes):
        sizes[c] += 1
    return sizes


def _generate_split(
    cfg: ShortcutConfig,
    majority_fraction: float,
    size: int,
    role: str,
    id_start: int,
    rng: RngState,
) -> DatasetSplit:
    c = cfg.num_classes
    slots: list[tuple[int, str]] = []
    for label, n_label in enumerate(_split_class_sizes(size, c)):
        n_maj = round(majority_fraction * n_label)
        slots.extend((label, GROUP_MAJORITY) for _ in range(n_maj))
        slots.extend((label, GROUP_MINORITY) for _ in range(n_label - n_maj))
    rng.shuffle(slots)

    examples = []
    for offset, (label, group) in enumerate(slots):
        core = rng.normals(cfg.core_dim)
        core[:c] *= CORE_STD
        core[c:] *= CORE_FILLER_STD
        core[label] += CORE_SEPARATION
        if group == GROUP_MAJORITY:
            target = label
        else:
            other = rng.below(c - 1)
            target = other if other < label else other + 1
        shortcut = cfg.noise_std * rng.normals(cfg.shortcut_dim)
        shortcut[target] += SHORTCUT_SCALE
        examples.append(
            Example(
                id=id_start + offset,
                features=np.concatenate([core, shortcut]),
                label=label,
                group=group,
            )
        )
    return DatasetSplit(examples, num_classes=c, role=role)


def generate_shortcut_dataset(
    cfg: ShortcutConfig, rng: RngState
) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Generate (train, id_test, ood_test) splits with ground-truth group tags.

    Train and id_test use cfg.majority_fraction per class; ood_test uses
    cfg.ood_majority_fraction (default: inverted prevalence). Deterministic
    given (cfg, rng seed).
    """
    ood_frac = cfg.resolved_ood_majority_fraction()
    train = _generate_split(cfg, cfg.majority_fraction, cfg.train_size, ROLE_TRAIN, 0, rng.child(1))
    id_test = _generate_split(
        cfg, cfg.majority_fraction, cfg.id_size, ROLE_ID_TEST, cfg.train_size, rng.child(2)
    )
    ood_test = _generate_split(
        cfg, ood_frac, cfg.ood_size, ROLE_OOD_TEST, cfg.train_size + cfg.id_size, rng.child(3)
    )
    return train, id_test, ood_test


# ---------------------------------------------------------------------------
# Embedding-CSV ingestion: header `id,label,group,f0..f{d-1}` plus a JSON
# sidecar carrying num_classes, dimension, and role.
# ---------------------------------------------------------------------------


def save_embedding_dataset(split: DatasetSplit, csv_path: str | Path, schema_path: str | Path) -> None:
    csv_path = Path(csv_path)
    schema_path = Path(schema_path)
    header = ["id", "label", "group"] + [f"f{i}" for i in range(split.dimension)]
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for ex in split:
            group = ex.group if ex.group is not None else GROUP_UNKNOWN
            writer.writerow([ex.id, ex.label, group] + [repr(float(v)) for v in ex.features])
    schema = {"num_classes": split.num_classes, "dimension": split.dimension, "role": split.role}
    schema_path.write_text(json.dumps(schema, sort_keys=True) + "\n")


def load_embedding_dataset(path: str | Path, schema: str | Path | dict) -> DatasetSplit:
    """Load a split from an embedding CSV plus its JSON sidecar descriptor."""
    path = Path(path)
    if isinstance(schema, (str, Path)):
        try:
            schema = json.loads(Path(schema).read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid schema JSON: {e}", path=str(schema)) from e
    for key in ("num_classes", "dimension", "role"):
        if key not in schema:
            raise ParseError(f"schema missing key {key!r}", path=str(path))
    num_classes = int(schema["num_classes"])
    dim = int(schema["dimension"])
    role = str(schema["role"])

    examples = []
    seen_ids: set[int] = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path=str(path), line=1) from None
        expected = ["id", "label", "group"] + [f"f{i}" for i in range(dim)]
        if header != expected:
            raise ParseError(
                f"bad header (expected {len(expected)} columns id,label,group,f0..)", path=str(path), line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3 + dim:
                raise ParseError(
                    f"row has {len(row) - 3} feature values, expected {dim}", path=str(path), line=line_no
                )
            try:
                ex_id = int(row[0])
                label = int(row[1])
            except ValueError as e:
                raise ParseError(f"bad id/label: {e}", path=str(path), line=line_no) from e
            if label < 0 or label >= num_classes:
                raise ParseError(f"unknown label {label}", path=str(path), line=line_no)
            if ex_id in seen_ids:
                raise ParseError(f"duplicate id {ex_id}", path=str(path), line=line_no)
            seen_ids.add(ex_id)
            group_raw = row[2]
            if group_raw not in (GROUP_MINORITY, GROUP_MAJORITY, GROUP_UNKNOWN):
                raise ParseError(f"unknown group tag {group_raw!r}", path=str(path), line=line_no)
            group = None if group_raw == GROUP_UNKNOWN else group_raw
            try:
                feats = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError as e:
                raise ParseError(f"bad feature value: {e}", path=str(path), line=line_no) from e
            if not np.all(np.isfinite(feats)):
                raise ParseError("non-finite feature value", path=str(path), line=line_no)
            examples.append(Example(id=ex_id, features=feats, label=label, group=group))
    if not examples:
        raise ParseError("no data rows", path=str(path), line=2)
    return DatasetSplit(examples, num_classes=num_classes, role=role)


# ---------------------------------------------------------------------------
# Pool partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolState:
    """Partition of the train split into labeled set and unlabeled pool.

    labeled_ids keeps seed order followed by annotation order; round_log holds
    one tuple of ids per annotation round, so its concatenation equals
    labeled_ids minus the seed set.
    """

    labeled_ids: tuple[int, ...]
    unlabeled_ids: tuple[int, ...]
    round_log: tuple[tuple[int, ...], ...] = field(default_factory=tuple)

    @property
    def labeled_set(self) -> frozenset:
        return frozenset(self.labeled_ids)

    @property
    def unlabeled_set(self) -> frozenset:
        return frozenset(self.unlabeled_ids)


def audit_pool(pool: PoolState, all_ids: list[int]) -> None:
    """Raise if the pool's partition invariant is broken."""
    lab, unl = pool.labeled_set, pool.unlabeled_set
    if lab & unl:
        raise UsageError(f"pool invariant broken: {len(lab & unl)} ids are in both sets")
    if lab | unl != set(all_ids):
        raise UsageError("pool invariant broken: labeled+unlabeled != train ids")
    if len(pool.labeled_ids) != len(lab) or len(pool.unlabeled_ids) != len(unl):
        raise UsageError("pool invariant broken: duplicate ids inside a side")
    annotated = [i for rnd in pool.round_log for i in rnd]
    if tuple(annotated) != pool.labeled_ids[len(pool.labeled_ids) - len(annotated) :]:
        raise UsageError("pool invariant broken: round_log does not match labeled order")


def init_pool(train: DatasetSplit, seed_fraction: float, rng: RngState) -> PoolState:
    """Uniform seed labeled set covering every class at least once."""
    if not (0.0 < seed_fraction < 1.0):
        raise UsageError("seed_fraction must be in (0, 1)")
    n = len(train)
    c = train.num_classes
    n_seed = max(c, round(seed_fraction * n))
    if n_seed >= n:
        raise UsageError(f"seed set of {n_seed} leaves no unlabeled pool (train size {n})")

    ids = train.ids
    seed_rows = rng.sample(n, n_seed)
    seed_ids = [ids[r] for r in seed_rows]

    by_class: dict[int, list[int]] = {cls: [] for cls in range(c)}
    for ex in train:
        by_class[ex.label].append(ex.id)
    for cls in range(c):
        if not by_class[cls]:
            raise UsageError(f"train split has no examples of class {cls}")

    # Coverage repair: swap in one example of each missing class, taking the
    # slot from the currently most-represented class.
    def class_counts(current: list[int]) -> dict[int, int]:
        counts = {cls: 0 for cls in range(c)}
        for i in current:
            counts[train.by_id(i).label] += 1
        return counts

    counts = class_counts(seed_ids)
    for cls in range(c):
        if counts[cls] > 0:
            continue
        in_seed = set(seed_ids)
        candidates = [i for i in by_class[cls] if i not in in_seed]
        if not candidates:
            raise UsageError(f"cannot cover class {cls}: all its examples already in seed")
        incoming = candidates[rng.below(len(candidates))]
        donor = max((cnt, -lbl) for lbl, cnt in counts.items())
        donor_label = -donor[1]
        if counts[donor_label] <= 1:
            raise UsageError("seed set too small to cover every class")
        slot = max(i for i, sid in enumerate(seed_ids) if train.by_id(sid).label == donor_label)
        counts[donor_label] -= 1
        counts[cls] += 1
        seed_ids[slot] = incoming

    seed_set = set(seed_ids)
    unlabeled = [i for i in ids if i not in seed_set]
    pool = PoolState(labeled_ids=tuple(seed_ids), unlabeled_ids=tuple(unlabeled))
    audit_pool(pool, ids)
    return pool


def annotate(pool: PoolState, ids: list[int]) -> PoolState:
    """Move ids from the unlabeled pool to the labeled set as one round."""
    unl = pool.unlabeled_set
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise UsageError(f"duplicate id {i} in annotation batch")
        if i not in unl:
            raise UsageError(f"id {i} is not currently unlabeled")
        seen.add(i)
    batch = tuple(ids)
    remaining = tuple(i for i in pool.unlabeled_ids if i not in seen)
    return PoolState(
        labeled_ids=pool.labeled_ids + batch,
        unlabeled_ids=remaining,
        round_log=pool.round_log + (batch,),
    )
