"""Cohort -> instances -> splits -> trained models, shared by the CLI and scripts."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .cohort import Cohort, align_to_grid, population_sleep_medians
from .evaluation.splits import SplitPlan, make_splits
from .featurize import Instances, build_instances
from .framework import ConventionalBaseline, FrameworkConfig, TwoStagePredictor, train_conventional_baseline, train_two_stage

log = logging.getLogger(__name__)


def cohort_instances(cohort: Cohort) -> Instances:
    fallback = population_sleep_medians(cohort.values())
    parts = []
    for rec in cohort.values():
        grid = align_to_grid(rec, fallback)
        parts.append(build_instances(grid, rec.events, rec.demographics))
    return Instances.concat(parts)


@dataclass
class PreparedData:
    instances: Instances
    plan: SplitPlan
    train: Instances
    test: Instances


def prepare(cohort: Cohort, seed: int, n_folds: int = 5) -> PreparedData:
    instances = cohort_instances(cohort)
    plan = make_splits(instances, seed, n_folds)
    train, test = plan.split(instances)
    return PreparedData(instances, plan, train, test)


@dataclass
class TrainedModels:
    predictor: TwoStagePredictor
    baseline: ConventionalBaseline
    skipped: dict[str, str] = field(default_factory=dict)


def train_all(data: PreparedData, config: FrameworkConfig) -> TrainedModels:
    predictor, skipped = train_two_stage(data.train, config)
    baseline = train_conventional_baseline(data.train, config)
    return TrainedModels(predictor, baseline, skipped)
