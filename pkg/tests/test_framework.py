from dataclasses import replace

import numpy as np
import pytest

import bpsd.featurize as featurize_mod
import bpsd.framework as fw
from bpsd.cohort import BpsdClass
from bpsd.evaluation.metrics import roc_auc
from bpsd.featurize import N_FEATURES, Instance, Instances, LeakageError, Scaler
from bpsd.framework import (
    N_IRG_FEATURES,
    DegenerateTraining,
    FrameworkConfig,
    PersonalizedModel,
    TwoStagePredictor,
    ensemble_combine,
    individual_representation,
    train_conventional_baseline,
    train_generalized,
    train_personalized,
    train_personalized_all,
    train_two_stage,
    two_stage_predict,
)
from bpsd.learners import ForestParams

from .conftest import FAST


class ConstantModel:
    def __init__(self, p):
        self.p = p

    def predict_proba(self, X):
        return np.tile([1 - self.p, self.p], (len(X), 1))


class FixedSuite:
    def __init__(self, members):
        self.members = members

    def member_probas(self, X, pids, occ, active):
        return {m: np.tile(v, (len(X), 1)) for m, v in self.members.items() if m in active}


def _predictor(p, members, threshold=0.5):
    sc = Scaler(np.zeros(N_FEATURES), np.ones(N_FEATURES))
    pm = PersonalizedModel("A", sc, np.ones(N_FEATURES, dtype=bool), ConstantModel(p), threshold)
    return TwoStagePredictor({"A": pm}, FixedSuite(members), ("rdg", "tcn", "irg"), threshold)


def _one(label=BpsdClass.Normal):
    return Instance("A", 0, np.zeros(N_FEATURES), label)


PSY = {"rdg": [0.1, 0.8, 0.1], "tcn": [0.2, 0.5, 0.3], "irg": [0.3, 0.4, 0.3]}


def test_gate_low_probability_is_normal():
    assert two_stage_predict(_predictor(0.3, PSY), _one()) == BpsdClass.Normal


def test_gate_high_probability_uses_ensemble_type():
    assert two_stage_predict(_predictor(0.9, PSY), _one()) == BpsdClass.Psychosis


def test_threshold_boundary_fires():
    assert two_stage_predict(_predictor(0.5, PSY, threshold=0.5), _one()) == BpsdClass.Psychosis
    assert two_stage_predict(_predictor(0.5, PSY).with_threshold(0.51), _one()) == BpsdClass.Normal


def test_type_ties_go_to_higher_priority():
    tie = {"rdg": [0.4, 0.4, 0.2], "tcn": [0.4, 0.4, 0.2], "irg": [0.4, 0.4, 0.2]}
    assert two_stage_predict(_predictor(1.0, tie), _one()) == BpsdClass.Hyperactivity


def test_four_class_scores_and_unknown_patient():
    pred = _predictor(0.8, PSY)
    inst = Instances(["A"], [0], np.zeros((1, N_FEATURES)), [0])
    out = pred.predict_all(inst)
    assert out["proba4"].sum() == pytest.approx(1.0)
    assert out["proba4"][0, 0] == pytest.approx(0.2)
    with pytest.raises(KeyError):
        pred.predict_all(Instances(["Z"], [0], np.zeros((1, N_FEATURES)), [0]))


def test_ensemble_combiner():
    probas = {k: np.array([v]) for k, v in PSY.items()}
    assert np.array_equal(ensemble_combine(probas, ("rdg",)), probas["rdg"])
    assert np.allclose(ensemble_combine(probas, ("rdg", "tcn", "irg")), [[0.2, 1.7 / 3, 0.7 / 3]])
    with pytest.raises(ValueError):
        ensemble_combine(probas, ())


def test_config_validation():
    with pytest.raises(ValueError):
        FrameworkConfig(backbone="SVM")
    with pytest.raises(ValueError):
        FrameworkConfig(active=("rdg", "xgb"))
    with pytest.raises(ValueError):
        FrameworkConfig(threshold=1.5)


def test_personalized_skips_and_fits(small_data):
    models, skipped = train_personalized_all(small_data.train, FAST)
    for pid, why in skipped.items():
        assert "abnormal" in why or "normal" in why
    assert models and set(models).isdisjoint(skipped)
    pid = next(iter(models))
    part = small_data.train[small_data.train.patient_id == pid]
    # unlimited-depth trees separate the planted training rows almost perfectly
    assert roc_auc(models[pid].occurrence_proba(part.X), part.occurred) > 0.9


def test_personalized_rejects_all_normal_and_mixed_patients(small_data):
    tr = small_data.train
    normal = tr[(tr.patient_id == tr.patient_id[0]) & ~tr.occurred]
    with pytest.raises(DegenerateTraining):
        train_personalized(normal, FAST)
    with pytest.raises(ValueError):
        train_personalized(tr, FAST)


def test_duplicate_patient_gets_identical_model(small_data):
    models, _ = train_personalized_all(small_data.train, FAST)
    pid = next(iter(models))
    part = small_data.train[small_data.train.patient_id == pid]
    twin = Instances(np.full(len(part), "TWIN", dtype=object), part.t, part.X, part.label4, part.split)
    a, b = train_personalized(part, FAST), train_personalized(twin, FAST)
    assert a.model.same_structure(b.model)


@pytest.mark.parametrize("backbone", ["RF", "LR"])
def test_alternative_backbones(small_data, backbone):
    cfg = replace(FAST, backbone=backbone)
    models, _ = train_personalized_all(small_data.train, cfg)
    m = next(iter(models.values()))
    p = m.occurrence_proba(small_data.test.X[:5])
    assert p.shape == (5,) and np.all((0 <= p) & (p <= 1))


def test_generalized_needs_two_abnormal_classes(small_data):
    tr = small_data.train
    keep = tr[(tr.label4 == BpsdClass.Normal) | (tr.label4 == BpsdClass.Psychosis)]
    with pytest.raises(DegenerateTraining):
        train_generalized(keep, {}, FAST)


def test_irg_width():
    Z = np.zeros((3, N_FEATURES))
    X = individual_representation(Z, np.array(["A", "B", "A"], dtype=object), {"A": np.ones(22)}, np.array([0.1, 0.5, 0.9]))
    assert X.shape == (3, N_IRG_FEATURES) == (3, 81)
    assert X[1, 58:80].tolist() == [0.0] * 22 and X[2, 80] == 0.9


def test_trained_suite_outputs(small_models, small_data):
    pred = small_models.predictor
    test = small_data.test[np.isin(small_data.test.patient_id, list(pred.personalized))]
    out = pred.predict_all(test)
    assert out["ensemble"].shape == (len(test), 3) and out["proba4"].shape == (len(test), 4)
    assert np.allclose(out["proba4"].sum(axis=1), 1.0)
    fired = out["occurrence"] >= 0.5
    assert np.all((out["label"] == 0) == ~fired)
    assert small_models.baseline.predict_proba(test.X).shape == (len(test), 4)


def test_cross_validation_runs_full_grid(small_data):
    cfg = replace(FAST, tune=True, forest=ForestParams(n_trees=5))
    suite = train_generalized(small_data.train, {}, cfg)
    for member in ("rdg", "irg"):
        info = suite.cv[member]
        assert len(info["scores"]) == 4 and info["n_fits"] <= 20 and info["best"] in [dict(g) for g in cfg.grid]


def test_leakage_audit(monkeypatch, small_data):
    """Every batch that reaches a fitting routine must come from the training split."""
    seen = []
    real = featurize_mod.check_trainable

    def audit(instances, where="fit"):
        seen.append((where, set(zip(instances.patient_id.tolist(), instances.t.tolist()))))
        real(instances, where)

    monkeypatch.setattr(featurize_mod, "check_trainable", audit)
    monkeypatch.setattr(fw, "check_trainable", audit)
    train_two_stage(small_data.train, FAST)
    train_conventional_baseline(small_data.train, FAST)
    test_keys = set(zip(small_data.test.patient_id.tolist(), small_data.test.t.tolist()))
    train_keys = set(zip(small_data.train.patient_id.tolist(), small_data.train.t.tolist()))
    wheres = {w for w, _ in seen}
    assert {"train_personalized", "train_generalized", "train_conventional_baseline", "fit_scaler"} <= wheres
    for _, keys in seen:
        assert keys <= train_keys and not keys & test_keys


def test_test_rows_rejected_by_every_trainer(small_data):
    mixed = Instances.concat([small_data.train, small_data.test])
    for fn in (lambda: train_two_stage(mixed, FAST), lambda: train_conventional_baseline(mixed, FAST)):
        with pytest.raises(LeakageError):
            fn()
    one = small_data.test[small_data.test.patient_id == small_data.test.patient_id[0]]
    with pytest.raises(LeakageError):
        train_personalized(one, FAST)
