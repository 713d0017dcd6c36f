"""Per-patient evaluation of the two-stage predictor, the pooled baseline, the ablation
runner and report emission."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..cohort import BpsdClass
from ..featurize import Instances
from .metrics import METRICS, Aggregate, ConfusionMatrix, MetricReport, aggregate, macro_auc, metrics_from_confusion, roc_auc

log = logging.getLogger(__name__)

SCOPES = ("binary", "4class")
ABLATION_SETS: tuple[tuple[str, ...], ...] = (
    ("rdg",),
    ("rdg", "tcn"),
    ("rdg", "irg"),
    ("rdg", "irg", "tcn"),
)
MEMBER_LABELS = {"rdg": "RDG", "tcn": "TCN", "irg": "IRG"}


class NoEvaluablePatients(ValueError):
    pass


def active_label(active: Sequence[str]) -> str:
    return "{" + ",".join(MEMBER_LABELS[m] for m in active) + "}"


@dataclass(frozen=True)
class PatientEvaluation:
    patient_id: str
    binary: MetricReport
    fourclass: MetricReport

    def report(self, scope: str) -> MetricReport:
        return self.binary if scope == "binary" else self.fourclass


@dataclass
class Evaluation:
    per_patient: list[PatientEvaluation]
    aggregates: dict[str, dict[str, Aggregate]]  # scope -> metric -> aggregate
    baseline: MetricReport | None = None
    exclusions: list[str] = field(default_factory=list)

    def headline_auc(self) -> float | None:
        return self.aggregates["4class"]["auc"].mean


def patient_reports(pid: str, label4: np.ndarray, out: Mapping[str, np.ndarray]) -> PatientEvaluation:
    occurred = label4 != BpsdClass.Normal
    fired = out["label"] != BpsdClass.Normal
    cm2 = ConfusionMatrix.from_labels(occurred.astype(int), fired.astype(int), 2)
    binary = metrics_from_confusion(cm2, positive=1, auc=roc_auc(out["occurrence"], occurred), scope="per-patient binary")
    cm4 = ConfusionMatrix.from_labels(label4, out["label"], 4)
    four = metrics_from_confusion(cm4, macro=True, auc=macro_auc(out["proba4"], label4), scope="per-patient 4-class macro")
    return PatientEvaluation(pid, binary, four)


def evaluate_two_stage(predictor, test: Instances, baseline=None, skipped: Mapping[str, str] | None = None) -> Evaluation:
    """Per-patient binary and 4-class reports, mean ± sample stdev across patients, and
    the pooled baseline on the same test rows."""
    exclusions = [f"{pid}\tall\tno personalized model: {why}" for pid, why in sorted((skipped or {}).items())]
    known = set(predictor.personalized)
    for pid in dict.fromkeys(test.patient_id.tolist()):
        if pid not in known and pid not in (skipped or {}):
            exclusions.append(f"{pid}\tall\tno personalized model")
    rows = np.array([p in known for p in test.patient_id], dtype=bool)
    test = test[rows]
    if len(test) == 0:
        raise NoEvaluablePatients("no test instances belong to a patient with a personalized model")

    out = predictor.predict_all(test)
    per_patient = []
    for pid in dict.fromkeys(test.patient_id.tolist()):
        r = test.patient_id == pid
        ev = patient_reports(pid, test.label4[r], {k: v[r] for k, v in out.items()})
        per_patient.append(ev)
        for scope in SCOPES:
            for m in ev.report(scope).undefined:
                exclusions.append(f"{pid}\t{scope}\t{m} undefined")

    aggregates = {
        scope: {m: aggregate(ev.report(scope).get(m) for ev in per_patient) for m in METRICS} for scope in SCOPES
    }
    base = None
    if baseline is not None:
        proba = baseline.predict_proba(test.X)
        cm = ConfusionMatrix.from_labels(test.label4, np.argmax(proba, axis=1), 4)
        base = metrics_from_confusion(cm, macro=True, auc=macro_auc(proba, test.label4), scope="pooled 4-class macro")
    return Evaluation(per_patient, aggregates, base, exclusions)


@dataclass
class AblationRow:
    active: tuple[str, ...]
    metrics: dict[str, Aggregate]

    @property
    def label(self) -> str:
        return active_label(self.active)


def run_ablation(predictor, test: Instances, sets: Sequence[Sequence[str]] = ABLATION_SETS) -> list[AblationRow]:
    """Re-run the identical two-stage pipeline once per ensemble active set."""
    rows = []
    for active in sets:
        ev = evaluate_two_stage(predictor.with_active(active), test)
        rows.append(AblationRow(tuple(active), ev.aggregates["4class"]))
    return rows


def evaluate_members(predictor, test: Instances) -> dict[str, float | None]:
    """3-class macro-AUC of each generalized member alone on the pooled abnormal test rows."""
    test = test[test.occurred & np.isin(test.patient_id, list(predictor.personalized))]
    if len(test) == 0:
        return {m: None for m in MEMBER_LABELS}
    occ = predictor.occurrence_proba(test)
    probas = predictor.suite.member_probas(test.X, test.patient_id, occ, tuple(MEMBER_LABELS))
    return {m: macro_auc(p, test.label4 - 1) for m, p in probas.items()}


# --- reports ------------------------------------------------------------------------


def _cell(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_per_patient(path: Path, ev: Evaluation) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["patient_id", "scope", "n", *METRICS])
        for p in ev.per_patient:
            for scope in SCOPES:
                r = p.report(scope)
                w.writerow([p.patient_id, scope, r.n, *(_cell(r.get(m)) for m in METRICS)])


def write_aggregate(path: Path, ev: Evaluation) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scope", "metric", "mean", "std", "n", "n_excluded"])
        for scope in SCOPES:
            for m, a in ev.aggregates[scope].items():
                w.writerow([scope, m, _cell(a.mean), _cell(a.std), a.n, a.n_excluded])
        if ev.baseline is not None:
            for m in METRICS:
                w.writerow(["baseline_pooled", m, _cell(ev.baseline.get(m)), "", ev.baseline.n, 0])


def write_ablation(path: Path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["active", *(f"{m}_{s}" for m in METRICS for s in ("mean", "std"))])
        for row in rows:
            cells = []
            for m in METRICS:
                cells += [_cell(row.metrics[m].mean), _cell(row.metrics[m].std)]
            w.writerow([row.label, *cells])


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def summary_markdown(
    ev: Evaluation,
    ablation: Sequence[AblationRow] | None = None,
    members: Mapping[str, float | None] | None = None,
    backbones: Mapping[str, Evaluation] | None = None,
) -> str:
    fmt = lambda v: "n/a" if v is None else f"{v:.3f}"
    names = ["AUC", "Sensitivity", "Specificity", "Accuracy", "Precision", "F1-Score"]
    out = ["# Evaluation summary", "", "## Personalized two-stage vs conventional pooled model", ""]
    rows = [["Two-stage (4-class, per-patient mean)", *(ev.aggregates["4class"][m].fmt() for m in METRICS)]]
    rows.append(["Two-stage occurrence (binary, per-patient mean)", *(ev.aggregates["binary"][m].fmt() for m in METRICS)])
    if ev.baseline is not None:
        rows.append(["Conventional (4-class, pooled)", *(fmt(ev.baseline.get(m)) for m in METRICS)])
    out += _md_table(["Model", *names], rows)
    if members:
        out += ["", "## Generalized members (3-class macro-AUC on abnormal test rows)", ""]
        out += _md_table(["Member", "AUC"], [[MEMBER_LABELS[m], fmt(v)] for m, v in members.items()])
    if backbones:
        out += ["", "## Backbone comparison (4-class, per-patient mean)", ""]
        out += _md_table(["Backbone", *names], [[b, *(e.aggregates["4class"][m].fmt() for m in METRICS)] for b, e in backbones.items()])
    if ablation:
        out += ["", "## Ablation over generalized ensemble members", ""]
        out += _md_table(["Active set", *names], [[r.label, *(r.metrics[m].fmt() for m in METRICS)] for r in ablation])
    n_pat = len(ev.per_patient)
    out += ["", f"Patients evaluated: {n_pat}. Exclusions: {len(ev.exclusions)} (see exclusions.log).", ""]
    return "\n".join(out)


def write_reports(
    out_dir: str | Path,
    ev: Evaluation,
    ablation: Sequence[AblationRow] | None = None,
    members: Mapping[str, float | None] | None = None,
    backbones: Mapping[str, Evaluation] | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_per_patient(out / "per_patient_metrics.csv", ev)
    write_aggregate(out / "aggregate.csv", ev)
    if ablation is not None:
        write_ablation(out / "ablation.csv", ablation)
    (out / "summary.md").write_text(summary_markdown(ev, ablation, members, backbones))
    (out / "exclusions.log").write_text("".join(line + "\n" for line in ev.exclusions))
    return out
