"""Personalized occurrence models, generalized RDG/TCN/IRG models, soft-vote ensemble,
two-stage inference and the pooled four-class baseline.

IRG input is our own construction: the 58 pooled-scaled features, the patient's
training-split mean and stdev of each signal (scaled), and the patient's personalized
occurrence probability, 81 values in all.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import tcn as tcn_mod
from .cohort import ABNORMAL_CLASSES, N_SIGNALS, BpsdClass
from .evaluation.metrics import macro_auc
from .evaluation.splits import grouped_stratified_folds
from .featurize import (
    N_FEATURES,
    N_SIGNAL_FEATURES,
    Instances,
    Scaler,
    check_trainable,
    fit_scaler,
    oversample_indices,
    select_features,
)
from .learners import ForestParams, LogisticParams, fit_forest, fit_logistic

log = logging.getLogger(__name__)

N_ABNORMAL = len(ABNORMAL_CLASSES)
N_IRG_FEATURES = N_FEATURES + 2 * N_SIGNALS + 1  # 81
MODEL_NAMES = ("rdg", "tcn", "irg")
BACKBONES = ("ERT", "RF", "LR")
DEFAULT_GRIDS = {
    "ERT": ({}, {"max_depth": 16}, {"min_split": 10}, {"max_depth": 16, "min_split": 10}),
    "RF": ({}, {"max_depth": 16}, {"min_split": 10}, {"max_depth": 16, "min_split": 10}),
    "LR": ({"l2": 1e-4}, {"l2": 1e-3}, {"l2": 1e-2}, {"l2": 1e-1}),
}


class DegenerateTraining(ValueError):
    """Training data lacks the classes a model needs."""


@dataclass(frozen=True)
class FrameworkConfig:
    backbone: str = "ERT"
    forest: ForestParams = ForestParams()
    logistic: LogisticParams = LogisticParams()
    tcn: tcn_mod.TcnConfig = tcn_mod.TcnConfig()
    g2_classifier: str = "latent_ert"  # "latent_ert": ERT on frozen latents; "head": the TCN's own softmax
    active: tuple[str, ...] = MODEL_NAMES
    threshold: float = 0.5
    seed: int = 42
    cv_folds: int = 5
    cv_grid: tuple[dict, ...] | None = None  # None -> DEFAULT_GRIDS[backbone]
    tune: bool = True
    feature_selection: str = "none"

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if not set(self.active) <= set(MODEL_NAMES):
            raise ValueError(f"unknown ensemble members {set(self.active) - set(MODEL_NAMES)}")
        if self.g2_classifier not in ("latent_ert", "head"):
            raise ValueError(f"unknown g2_classifier {self.g2_classifier!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    @property
    def grid(self) -> tuple[dict, ...]:
        return self.cv_grid if self.cv_grid is not None else DEFAULT_GRIDS[self.backbone]


def fit_backbone(X, y, n_classes: int, config: FrameworkConfig, overrides: Mapping | None = None, backbone=None):
    backbone = backbone or config.backbone
    overrides = dict(overrides or {})
    if backbone == "LR":
        return fit_logistic(X, y, n_classes, replace(config.logistic, **overrides))
    params = replace(config.forest, mode=backbone, seed=config.seed, **overrides)
    return fit_forest(X, y, n_classes, params)


# --- personalized stage ------------------------------------------------------------


@dataclass(eq=False)
class PersonalizedModel:
    patient_id: str
    scaler: Scaler
    mask: np.ndarray
    model: object
    threshold: float = 0.5

    def occurrence_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.model.predict_proba(self.scaler.transform(X)[:, self.mask])[:, 1]


def train_personalized(train: Instances, config: FrameworkConfig = FrameworkConfig()) -> PersonalizedModel:
    """Per-patient scaler -> binary oversampling -> backbone."""
    check_trainable(train, "train_personalized")
    pids = set(train.patient_id.tolist())
    if len(pids) != 1:
        raise ValueError(f"expected one patient's instances, got {len(pids)} patients")
    y = train.occurred.astype(np.int64)
    if y.min() == y.max():
        raise DegenerateTraining("training split has a single occurrence class")
    scaler = fit_scaler(train)
    Z = scaler.transform(train.X)
    mask = select_features(train.with_X(Z), config.feature_selection, seed=config.seed)
    idx = oversample_indices(y, config.seed)
    model = fit_backbone(Z[idx][:, mask], y[idx], 2, config)
    return PersonalizedModel(pids.pop(), scaler, mask, model, config.threshold)


def train_personalized_all(train: Instances, config: FrameworkConfig) -> tuple[dict[str, PersonalizedModel], dict[str, str]]:
    models: dict[str, PersonalizedModel] = {}
    skipped: dict[str, str] = {}
    for pid in dict.fromkeys(train.patient_id.tolist()):
        part = train[train.patient_id == pid]
        n_abn = int(part.occurred.sum())
        if n_abn == 0:
            skipped[pid] = "no abnormal training instances"
        elif n_abn == len(part):
            skipped[pid] = "no normal training instances"
        else:
            models[pid] = train_personalized(part, config)
            continue
        log.info("skipping personalized model for %s: %s", pid, skipped[pid])
    return models, skipped


# --- generalized stage -------------------------------------------------------------


def patient_signal_stats(train_scaled: Instances) -> dict[str, np.ndarray]:
    """Per patient: mean and stdev of each current-slot signal over that patient's training rows."""
    check_trainable(train_scaled, "patient_signal_stats")
    cur = train_scaled.X[:, N_SIGNAL_FEATURES - N_SIGNALS : N_SIGNAL_FEATURES]
    out = {}
    for pid in dict.fromkeys(train_scaled.patient_id.tolist()):
        rows = cur[train_scaled.patient_id == pid]
        out[pid] = np.concatenate([rows.mean(axis=0), rows.std(axis=0)])
    return out


def individual_representation(Z: np.ndarray, pids: np.ndarray, stats: Mapping[str, np.ndarray], occ: np.ndarray) -> np.ndarray:
    """Pooled-scaled features ++ patient signal stats ++ occurrence probability (81 columns)."""
    zero = np.zeros(2 * N_SIGNALS)
    S = np.array([stats.get(p, zero) for p in pids]).reshape(len(pids), 2 * N_SIGNALS)
    return np.hstack([Z, S, np.asarray(occ, dtype=float).reshape(-1, 1)])


def occurrence_for(instances: Instances, personalized: Mapping[str, PersonalizedModel], default: float = 0.5) -> np.ndarray:
    occ = np.full(len(instances), default)
    for pid, model in personalized.items():
        rows = instances.patient_id == pid
        if rows.any():
            occ[rows] = model.occurrence_proba(instances.X[rows])
    return occ


@dataclass
class CvResult:
    grid: tuple[dict, ...]
    scores: list[float | None]
    best: dict
    n_fits: int


def cross_validate(X, y, groups, config: FrameworkConfig, n_classes: int = N_ABNORMAL) -> CvResult:
    """Grid search by patient-grouped stratified k-fold, maximizing macro-AUC."""
    n_groups = len(set(groups.tolist()))
    k = max(2, min(config.cv_folds, n_groups))
    fold_of = grouped_stratified_folds(groups, y, k, config.seed)
    fold = np.array([fold_of[g] for g in groups])
    scores: list[float | None] = []
    n_fits = 0
    for overrides in config.grid:
        fold_scores = []
        for f in range(k):
            tr, va = fold != f, fold == f
            if len(np.unique(y[tr])) < 2 or not va.any():
                continue
            idx = np.flatnonzero(tr)[oversample_indices(y[tr], config.seed)]
            model = fit_backbone(X[idx], y[idx], n_classes, config, overrides)
            n_fits += 1
            auc = macro_auc(model.predict_proba(X[va]), y[va])
            if auc is not None:
                fold_scores.append(auc)
        scores.append(float(np.mean(fold_scores)) if fold_scores else None)
    ranked = [(s if s is not None else -np.inf, -i) for i, s in enumerate(scores)]
    best_i = -max(ranked)[1]
    return CvResult(tuple(config.grid), scores, dict(config.grid[best_i]), n_fits)


@dataclass(eq=False)
class GeneralizedSuite:
    scaler: Scaler
    rdg: object
    tcn_net: tcn_mod.TcnNetwork | None
    tcn_latent_model: object | None
    irg: object
    patient_stats: dict[str, np.ndarray]
    g2_classifier: str = "latent_ert"
    cv: dict = field(default_factory=dict)

    def rdg_proba(self, Z: np.ndarray) -> np.ndarray:
        return self.rdg.predict_proba(Z)

    def tcn_proba(self, Z: np.ndarray) -> np.ndarray:
        windows = _windows(Z)
        if self.g2_classifier == "head":
            return self.tcn_net.forward(windows)["probs"]
        latent = tcn_mod.extract_latent(self.tcn_net, windows)
        return self.tcn_latent_model.predict_proba(np.hstack([latent, Z[:, N_SIGNAL_FEATURES:]]))

    def irg_proba(self, Z: np.ndarray, pids: np.ndarray, occ: np.ndarray) -> np.ndarray:
        return self.irg.predict_proba(individual_representation(Z, pids, self.patient_stats, occ))

    def member_probas(self, X: np.ndarray, pids: np.ndarray, occ: np.ndarray, active=MODEL_NAMES) -> dict[str, np.ndarray]:
        Z = self.scaler.transform(np.atleast_2d(X))
        out = {}
        if "rdg" in active:
            out["rdg"] = self.rdg_proba(Z)
        if "tcn" in active:
            out["tcn"] = self.tcn_proba(Z)
        if "irg" in active:
            out["irg"] = self.irg_proba(Z, np.asarray(pids, dtype=object), occ)
        return out


def _windows(Z: np.ndarray) -> np.ndarray:
    return Z[:, :N_SIGNAL_FEATURES].reshape(len(Z), -1, N_SIGNALS).transpose(0, 2, 1)


def abnormal_index(label4: np.ndarray) -> np.ndarray:
    """BpsdClass value -> 0..2 index over (Hyperactivity, Psychosis, PhysicalBehavior)."""
    return np.asarray(label4, dtype=np.int64) - 1


def train_generalized(
    train: Instances, personalized: Mapping[str, PersonalizedModel], config: FrameworkConfig = FrameworkConfig()
) -> GeneralizedSuite:
    check_trainable(train, "train_generalized")
    abn = train[train.occurred]
    if len(np.unique(abn.label4)) < 2:
        raise DegenerateTraining("pooled abnormal training data has fewer than two BPSD classes")
    scaler = fit_scaler(train)
    Z_all = scaler.transform(train.X)
    stats = patient_signal_stats(train.with_X(Z_all))
    Z = scaler.transform(abn.X)
    y = abnormal_index(abn.label4)
    groups = abn.patient_id

    cv: dict = {}
    rdg_over, irg_over = {}, {}
    occ = occurrence_for(abn, personalized)
    X_irg = individual_representation(Z, groups, stats, occ)
    if config.tune and len(config.grid) > 1:
        r = cross_validate(Z, y, groups, config)
        cv["rdg"] = {"scores": r.scores, "best": r.best, "n_fits": r.n_fits}
        rdg_over = r.best
        r = cross_validate(X_irg, y, groups, config)
        cv["irg"] = {"scores": r.scores, "best": r.best, "n_fits": r.n_fits}
        irg_over = r.best

    idx = oversample_indices(y, config.seed)
    rdg = fit_backbone(Z[idx], y[idx], N_ABNORMAL, config, rdg_over)
    irg = fit_backbone(X_irg[idx], y[idx], N_ABNORMAL, config, irg_over)

    tcn_cfg = replace(config.tcn, seed=config.seed)
    net = tcn_mod.train(_windows(Z), y, N_ABNORMAL, tcn_cfg)
    latent_model = None
    if config.g2_classifier == "latent_ert":
        L = np.hstack([tcn_mod.extract_latent(net, _windows(Z)), Z[:, N_SIGNAL_FEATURES:]])
        latent_model = fit_forest(L[idx], y[idx], N_ABNORMAL, replace(config.forest, mode="ERT", seed=config.seed))
    return GeneralizedSuite(scaler, rdg, net, latent_model, irg, stats, config.g2_classifier, cv)


# --- ensemble and two-stage inference ------------------------------------------------


def ensemble_combine(probas: Mapping[str, np.ndarray], active) -> np.ndarray:
    """Unweighted mean of the active members' probability vectors."""
    members = [probas[m] for m in MODEL_NAMES if m in active]
    if not members:
        raise ValueError("empty ensemble active set")
    if len(members) == 1:
        return np.array(members[0], dtype=float)
    return np.mean(members, axis=0)


def priority_argmax(proba: np.ndarray) -> np.ndarray:
    """Argmax over abnormal classes; ties go to the higher-priority class (lower index)."""
    return np.argmax(proba, axis=-1)


def ensemble_predict(suite: GeneralizedSuite, X, pids, occ, active=MODEL_NAMES) -> np.ndarray:
    return ensemble_combine(suite.member_probas(X, pids, occ, active), active)


@dataclass(eq=False)
class TwoStagePredictor:
    personalized: dict[str, PersonalizedModel]
    suite: GeneralizedSuite
    active: tuple[str, ...] = MODEL_NAMES
    threshold: float = 0.5

    def with_active(self, active) -> "TwoStagePredictor":
        return replace(self, active=tuple(active))

    def with_threshold(self, threshold: float) -> "TwoStagePredictor":
        personalized = {p: replace(m, threshold=threshold) for p, m in self.personalized.items()}
        return replace(self, personalized=personalized, threshold=threshold)

    def occurrence_proba(self, instances: Instances) -> np.ndarray:
        unknown = set(instances.patient_id.tolist()) - set(self.personalized)
        if unknown:
            raise KeyError(f"no personalized model for patient(s) {sorted(unknown)}")
        return occurrence_for(instances, self.personalized)

    def predict_all(self, instances: Instances) -> dict[str, np.ndarray]:
        """Occurrence probability, ensemble vector, four-class scores and final label."""
        occ = self.occurrence_proba(instances)
        ens = ensemble_predict(self.suite, instances.X, instances.patient_id, occ, self.active)
        thresholds = np.array([self.personalized[p].threshold for p in instances.patient_id])
        fired = occ >= thresholds
        label = np.where(fired, priority_argmax(ens) + 1, int(BpsdClass.Normal))
        proba4 = np.hstack([(1.0 - occ)[:, None], occ[:, None] * ens])
        return {"occurrence": occ, "ensemble": ens, "proba4": proba4, "label": label}

    def predict(self, instances: Instances) -> np.ndarray:
        return self.predict_all(instances)["label"]


def two_stage_predict(predictor: TwoStagePredictor, instance) -> BpsdClass:
    """Personalized gate first (probability >= threshold fires), then the ensemble's type."""
    inst = Instances([instance.patient_id], [instance.t], np.asarray(instance.features)[None, :], [int(instance.label4)])
    return BpsdClass(int(predictor.predict(inst)[0]))


# --- conventional pooled baseline --------------------------------------------------------


@dataclass(eq=False)
class ConventionalBaseline:
    scaler: Scaler
    model: object

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(self.scaler.transform(np.atleast_2d(X)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)


def train_conventional_baseline(train: Instances, config: FrameworkConfig = FrameworkConfig()) -> ConventionalBaseline:
    """One pooled four-class ERT: pooled scaler -> oversampling -> fit."""
    check_trainable(train, "train_conventional_baseline")
    if len(np.unique(train.label4)) < 2:
        raise DegenerateTraining("pooled training data has fewer than two classes")
    scaler = fit_scaler(train)
    Z = scaler.transform(train.X)
    idx = oversample_indices(train.label4, config.seed)
    model = fit_forest(Z[idx], train.label4[idx], 4, replace(config.forest, mode="ERT", seed=config.seed))
    return ConventionalBaseline(scaler, model)


def train_two_stage(train: Instances, config: FrameworkConfig = FrameworkConfig()):
    """Personalized models for eligible patients, then the suite on the full pooled split."""
    personalized, skipped = train_personalized_all(train, config)
    suite = train_generalized(train, personalized, config)
    return TwoStagePredictor(personalized, suite, tuple(config.active), config.threshold), skipped
