"""Chronological per-patient train/test splits and patient-grouped stratified folds."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..featurize import Instances

log = logging.getLogger(__name__)

MIN_INSTANCES = 10
TRAIN_FRACTION_TENTHS = 7  # 70 / 30


@dataclass(frozen=True)
class SplitPlan:
    boundary: dict[str, int]  # patient -> first test instant; train is t < boundary
    fold_of_patient: dict[str, int]
    excluded: dict[str, str] = field(default_factory=dict)
    n_folds: int = 5

    def split(self, instances: Instances) -> tuple[Instances, Instances]:
        """Tagged (train, test) for patients in the plan; excluded patients are dropped."""
        pids = instances.patient_id
        keep = np.array([p in self.boundary for p in pids], dtype=bool)
        bound = np.array([self.boundary.get(p, 0) for p in pids], dtype=np.int64)
        train = keep & (instances.t < bound)
        test = keep & (instances.t >= bound)
        return instances[train].tagged("train"), instances[test].tagged("test")


def n_train_for(n: int) -> int:
    return (TRAIN_FRACTION_TENTHS * n) // 10


def grouped_stratified_folds(groups: np.ndarray, labels: np.ndarray, n_folds: int, seed: int) -> dict[str, int]:
    """Assign whole groups to folds, greedily balancing per-class shares.

    Groups are visited largest first (ties in seeded random order); each goes to the fold
    whose per-class fractions stay most even.
    """
    groups = np.asarray(groups, dtype=object)
    labels = np.asarray(labels)
    names = sorted(set(groups.tolist()))
    if not names:
        return {}
    classes = np.unique(labels)
    per_group = {g: np.array([np.sum((groups == g) & (labels == c)) for c in classes], dtype=float) for g in names}
    totals = np.maximum(sum(per_group.values()), 1.0)

    rng = np.random.default_rng(seed)
    shuffled = [names[i] for i in rng.permutation(len(names))]
    ordered = sorted(shuffled, key=lambda g: -per_group[g].sum())

    fold_counts = np.zeros((n_folds, len(classes)))
    fold_sizes = np.zeros(n_folds, dtype=int)
    out = {}
    for g in ordered:
        cost = [np.sum(((fold_counts[f] + per_group[g]) / totals) ** 2) for f in range(n_folds)]
        best = min(range(n_folds), key=lambda f: (round(cost[f], 12), fold_sizes[f], f))
        out[g] = best
        fold_counts[best] += per_group[g]
        fold_sizes[best] += 1
    return out


def make_splits(instances: Instances, seed: int, n_folds: int = 5) -> SplitPlan:
    """Chronological 70/30 boundary per patient plus grouped CV folds over the training part."""
    boundary: dict[str, int] = {}
    excluded: dict[str, str] = {}
    for pid in dict.fromkeys(instances.patient_id.tolist()):
        t = np.sort(instances.t[instances.patient_id == pid])
        if len(t) < MIN_INSTANCES:
            excluded[pid] = f"only {len(t)} instances (< {MIN_INSTANCES})"
            log.info("excluding %s: %s", pid, excluded[pid])
            continue
        boundary[pid] = int(t[n_train_for(len(t))])

    keep = np.array([p in boundary for p in instances.patient_id], dtype=bool)
    bound = np.array([boundary.get(p, 0) for p in instances.patient_id], dtype=np.int64)
    train = keep & (instances.t < bound)
    folds = grouped_stratified_folds(instances.patient_id[train], instances.label4[train], n_folds, seed)
    return SplitPlan(boundary, folds, excluded, n_folds)
