import csv

import numpy as np
import pytest

from bpsd.evaluation import ABLATION_SETS, METRICS, NoEvaluablePatients, evaluate_two_stage, run_ablation, write_reports
from bpsd.evaluation.harness import evaluate_members
from bpsd.featurize import Instances


@pytest.fixture(scope="module")
def evaluation(small_models, small_data):
    return evaluate_two_stage(small_models.predictor, small_data.test, small_models.baseline, small_models.skipped)


def test_reports_are_self_consistent(tmp_path, evaluation, small_models, small_data):
    ablation = run_ablation(small_models.predictor, small_data.test)
    out = write_reports(tmp_path, evaluation, ablation, evaluate_members(small_models.predictor, small_data.test))
    for name in ("per_patient_metrics.csv", "aggregate.csv", "ablation.csv", "summary.md", "exclusions.log"):
        assert (out / name).exists()
    rows = list(csv.DictReader(open(out / "per_patient_metrics.csv")))
    agg = {(r["scope"], r["metric"]): r for r in csv.DictReader(open(out / "aggregate.csv"))}
    for scope in ("binary", "4class"):
        for m in METRICS:
            vals = [float(r[m]) for r in rows if r["scope"] == scope and r[m] != ""]
            a = agg[(scope, m)]
            assert int(a["n"]) == len(vals)
            if len(vals) > 1:
                assert float(a["mean"]) == pytest.approx(np.mean(vals), abs=1e-12)
                assert float(a["std"]) == pytest.approx(np.std(vals, ddof=1), abs=1e-12)
    summary = (out / "summary.md").read_text()
    assert "Conventional" in summary and "{RDG,IRG,TCN}" in summary


def test_exclusions_logged(evaluation, small_models):
    text = "\n".join(evaluation.exclusions)
    for pid in small_models.skipped:
        assert pid in text
    for p in evaluation.per_patient:
        for m in p.binary.undefined:
            assert f"{p.patient_id}\tbinary\t{m} undefined" in evaluation.exclusions


def test_aggregate_counts_skip_undefined(evaluation):
    for scope in ("binary", "4class"):
        for m in METRICS:
            a = evaluation.aggregates[scope][m]
            defined = sum(p.report(scope).get(m) is not None for p in evaluation.per_patient)
            assert a.n == defined and a.n + a.n_excluded == len(evaluation.per_patient)


def test_single_patient_flag(small_models, small_data):
    pid = next(iter(small_models.predictor.personalized))
    one = small_data.test[small_data.test.patient_id == pid]
    ev = evaluate_two_stage(small_models.predictor, one)
    a = ev.aggregates["binary"]["accuracy"]
    assert a.n == 1 and a.single and a.std == 0.0


def test_ablation_shape_and_singleton_identity(small_models, small_data):
    rows = run_ablation(small_models.predictor, small_data.test)
    assert [r.active for r in rows] == list(ABLATION_SETS)
    assert all(len(r.metrics) == 6 for r in rows)
    single = evaluate_two_stage(small_models.predictor.with_active(("rdg",)), small_data.test)
    for m in METRICS:
        assert rows[0].metrics[m] == single.aggregates["4class"][m]


def test_no_evaluable_patients(small_models, small_data):
    stranger = Instances(["NOBODY"], [0], small_data.test.X[:1], [0])
    with pytest.raises(NoEvaluablePatients):
        evaluate_two_stage(small_models.predictor, stranger)
