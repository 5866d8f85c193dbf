"""Minority/majority inference from per-epoch prediction traces.

An example counts as minority when its correctness sequence either contains a
correct-to-incorrect flip or is all zeros; everything else is majority. The
rule is purely boolean, no thresholds.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .datasets import GROUP_MAJORITY, GROUP_MINORITY
from .errors import UsageError
from .model import PredictionTrace

Verdict = dict[int, str]  # example id -> GROUP_MINORITY | GROUP_MAJORITY


def infer_min_maj(trace: PredictionTrace) -> Verdict:
    """Tag every traced example as minority or majority."""
    if len(trace.ids) == 0 or trace.epochs < 1:
        raise UsageError("trace must cover at least one example and one epoch")
    bits = trace.bits.astype(np.int8)
    forgotten = np.any(bits[:, :-1] > bits[:, 1:], axis=1) if trace.epochs > 1 else np.zeros(len(trace.ids), dtype=bool)
    never_learned = ~np.any(bits, axis=1)
    verdict: Verdict = {}
    for row, ex_id in enumerate(trace.ids):
        is_min = bool(forgotten[row]) or bool(never_learned[row])
        verdict[ex_id] = GROUP_MINORITY if is_min else GROUP_MAJORITY
    return verdict


def minority_recall(verdict: Verdict, truth: dict[int, str]) -> float:
    """Fraction of ground-truth minority ids the verdict also tags minority.

    Vacuously 1.0 when the truth contains no minority ids.
    """
    for ex_id in verdict:
        if ex_id not in truth or truth[ex_id] not in (GROUP_MINORITY, GROUP_MAJORITY):
            raise UsageError(f"missing ground-truth group tag for id {ex_id}")
    true_min = {i for i in verdict if truth[i] == GROUP_MINORITY}
    if not true_min:
        return 1.0
    hit = sum(1 for i in true_min if verdict[i] == GROUP_MINORITY)
    return hit / len(true_min)


def export_verdict_csv(verdict: Verdict, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "verdict"])
        for ex_id in sorted(verdict):
            writer.writerow([ex_id, verdict[ex_id]])
