"""ROC AUC, confusion-matrix metrics and mean +/- std aggregation.

Undefined values (e.g. precision with no predicted positives) are ``None`` and are listed
in ``MetricReport.undefined``; they never turn into NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

METRICS = ("auc", "sensitivity", "specificity", "accuracy", "precision", "f1")


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    boundaries = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1], True])
    ranks = np.empty(len(x))
    for lo, hi in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[lo:hi]] = 0.5 * (lo + 1 + hi)
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float | None:
    """Mann-Whitney AUC with midranks; ``None`` when only one class is present."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    r = midranks(s)
    u = r[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc(proba: np.ndarray, labels: np.ndarray, classes: Iterable[int] | None = None) -> float | None:
    """Mean one-vs-rest AUC over classes where both positives and negatives exist."""
    proba = np.asarray(proba, dtype=float)
    labels = np.asarray(labels)
    classes = range(proba.shape[1]) if classes is None else classes
    aucs = [a for c in classes if (a := roc_auc(proba[:, c], labels == c)) is not None]
    return float(np.mean(aucs)) if aucs else None


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows truth, columns prediction

    @classmethod
    def from_labels(cls, truth: Sequence[int], pred: Sequence[int], n_classes: int) -> "ConfusionMatrix":
        m = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(m, (np.asarray(truth, dtype=int), np.asarray(pred, dtype=int)), 1)
        return cls(m)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        m = self.counts
        tp = int(m[c, c])
        fn = int(m[c].sum() - tp)
        fp = int(m[:, c].sum() - tp)
        tn = int(m.sum() - tp - fn - fp)
        return tp, fn, fp, tn


@dataclass(frozen=True)
class MetricReport:
    auc: float | None
    sensitivity: float | None
    specificity: float | None
    accuracy: float | None
    precision: float | None
    f1: float | None
    scope: str = ""
    n: int = 0
    undefined: tuple[str, ...] = field(default=())

    def get(self, name: str) -> float | None:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {m: self.get(m) for m in METRICS}


def _ratio(a: float, b: float) -> float | None:
    return a / b if b > 0 else None


def _binary_parts(tp, fn, fp, tn):
    sens = _ratio(tp, tp + fn)
    spc = _ratio(tn, tn + fp)
    prec = _ratio(tp, tp + fp)
    if sens is None or prec is None:
        f1 = None
    elif sens + prec == 0:
        f1 = 0.0
    else:
        f1 = 2 * prec * sens / (prec + sens)
    return sens, spc, prec, f1


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def metrics_from_confusion(
    cm: ConfusionMatrix, positive: int | None = 1, macro: bool = False, auc: float | None = None, scope: str = ""
) -> MetricReport:
    """Binary metrics for ``positive`` or, with ``macro=True``, the unweighted mean of
    one-vs-rest metrics over classes where each is defined. Accuracy is always global."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    accuracy = float(np.trace(cm.counts) / cm.total)
    if macro:
        parts = [_binary_parts(*cm.one_vs_rest(c)) for c in range(cm.counts.shape[0])]
        sens, spc, prec, f1 = (_mean_defined(p[i] for p in parts) for i in range(4))
    else:
        sens, spc, prec, f1 = _binary_parts(*cm.one_vs_rest(positive))
    values = {"auc": auc, "sensitivity": sens, "specificity": spc, "accuracy": accuracy, "precision": prec, "f1": f1}
    undefined = tuple(k for k, v in values.items() if v is None)
    return MetricReport(**values, scope=scope, n=cm.total, undefined=undefined)


@dataclass(frozen=True)
class Aggregate:
    mean: float | None
    std: float | None
    n: int
    n_excluded: int

    @property
    def single(self) -> bool:
        return self.n == 1

    def fmt(self, digits: int = 3) -> str:
        if self.mean is None:
            return "n/a"
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"


def aggregate(values: Iterable[float | None]) -> Aggregate:
    """Mean and sample (n-1) stdev over defined values; stdev is 0 for a single value."""
    values = list(values)
    vals = [float(v) for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    excluded = len(values) - len(vals)
    if not vals:
        return Aggregate(None, None, 0, excluded)
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return Aggregate(float(np.mean(vals)), std, len(vals), excluded)
