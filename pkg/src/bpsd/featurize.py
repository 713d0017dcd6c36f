"""Windowing, horizon labeling, normalization, oversampling and feature selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .cohort import (
    DataError,
    N_SIGNALS,
    SIGNAL_NAMES,
    SLOT_SECONDS,
    BpsdClass,
    BpsdEvent,
    Demographics,
    SignalGrid,
    format_timestamp,
)

LAGS = 5
HORIZON_SECONDS = 4 * 3600
N_SIGNAL_FEATURES = LAGS * N_SIGNALS  # 55
N_FEATURES = N_SIGNAL_FEATURES + 3  # 58
CONSTANT_EPS = 1e-12

FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{name}_lag{lag}" for lag in range(LAGS - 1, -1, -1) for name in SIGNAL_NAMES
) + ("age", "sex", "education_years")


class LeakageError(RuntimeError):
    """A test-split instance reached a fitting routine."""


@dataclass(frozen=True)
class Instance:
    patient_id: str
    t: int
    features: np.ndarray
    label4: BpsdClass

    @property
    def occurred(self) -> bool:
        return self.label4 != BpsdClass.Normal


@dataclass
class Instances:
    """Column-oriented batch of instances.

    ``split`` carries provenance ("train", "test" or "") so fitting code can refuse
    test rows; see :func:`check_trainable`.
    """

    patient_id: np.ndarray  # object array of str
    t: np.ndarray  # int64 slot start, UTC epoch seconds
    X: np.ndarray  # (n, 58)
    label4: np.ndarray  # int, BpsdClass values
    split: np.ndarray = field(default=None)

    def __post_init__(self):
        self.patient_id = np.asarray(self.patient_id, dtype=object)
        self.t = np.asarray(self.t, dtype=np.int64)
        X = np.asarray(self.X, dtype=float)
        self.X = X if X.ndim == 2 else X.reshape(len(self.t), -1)
        self.label4 = np.asarray(self.label4, dtype=np.int64)
        if self.split is None:
            self.split = np.full(len(self.t), "", dtype=object)
        else:
            self.split = np.asarray(self.split, dtype=object)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, idx) -> "Instances":
        return Instances(self.patient_id[idx], self.t[idx], self.X[idx], self.label4[idx], self.split[idx])

    def __iter__(self) -> Iterator[Instance]:
        for i in range(len(self)):
            yield Instance(self.patient_id[i], int(self.t[i]), self.X[i], BpsdClass(int(self.label4[i])))

    @property
    def occurred(self) -> np.ndarray:
        return self.label4 != BpsdClass.Normal

    def with_X(self, X: np.ndarray) -> "Instances":
        return Instances(self.patient_id, self.t, X, self.label4, self.split)

    def tagged(self, split: str) -> "Instances":
        return Instances(self.patient_id, self.t, self.X, self.label4, np.full(len(self), split, dtype=object))

    def signal_windows(self) -> np.ndarray:
        """(n, 11, 5) channels x time, oldest lag first."""
        return self.X[:, :N_SIGNAL_FEATURES].reshape(len(self), LAGS, N_SIGNALS).transpose(0, 2, 1)

    @classmethod
    def empty(cls, n_features: int = N_FEATURES) -> "Instances":
        return cls(np.empty(0, dtype=object), np.empty(0, dtype=np.int64), np.empty((0, n_features)), np.empty(0))

    @classmethod
    def concat(cls, parts: Sequence["Instances"]) -> "Instances":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.patient_id for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.vstack([p.X for p in parts]),
            np.concatenate([p.label4 for p in parts]),
            np.concatenate([p.split for p in parts]),
        )


def check_trainable(instances: Instances, where: str = "fit") -> None:
    if np.any(instances.split == "test"):
        raise LeakageError(f"{where}: {int(np.sum(instances.split == 'test'))} test-split instances in training input")


# --- windowing -------------------------------------------------------------


def horizon_label(t_end: int, event_times: np.ndarray, event_classes: np.ndarray) -> BpsdClass:
    """Class of the earliest event in (t_end, t_end + 4h]; events must be sorted by (time, priority)."""
    i = np.searchsorted(event_times, t_end, side="right")
    if i < len(event_times) and event_times[i] <= t_end + HORIZON_SECONDS:
        return BpsdClass(int(event_classes[i]))
    return BpsdClass.Normal


def build_instances(grid: SignalGrid, events: Sequence[BpsdEvent], demographics: Demographics) -> Instances:
    present = grid.present
    n = len(present)
    if n < LAGS:
        return Instances.empty()
    # run[k] = True when slots k-4..k are all present
    run = np.ones(n - LAGS + 1, dtype=bool)
    for lag in range(LAGS):
        run &= present[lag : n - LAGS + 1 + lag]
    ks = np.flatnonzero(run) + LAGS - 1
    if len(ks) == 0:
        return Instances.empty()

    windows = np.stack([grid.cells[ks - lag] for lag in range(LAGS - 1, -1, -1)], axis=1)  # (m, 5, 11)
    demo = np.broadcast_to(demographics.as_vector(), (len(ks), 3))
    X = np.hstack([windows.reshape(len(ks), N_SIGNAL_FEATURES), demo])

    starts = grid.grid_start + ks.astype(np.int64) * SLOT_SECONDS
    ev_sorted = sorted(events, key=lambda e: (e.timestamp, e.bpsd_class.priority))
    ev_t = np.array([e.timestamp for e in ev_sorted], dtype=np.int64)
    ev_c = np.array([int(e.bpsd_class) for e in ev_sorted], dtype=np.int64)
    labels = [horizon_label(int(s) + SLOT_SECONDS, ev_t, ev_c) for s in starts]
    return Instances(np.full(len(ks), grid.patient_id, dtype=object), starts, X, labels)


# --- normalization -----------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std < CONSTANT_EPS

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.constant, 1.0, self.std)
        return np.where(self.constant, 0.0, (X - self.mean) / safe)

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.where(self.constant, self.mean, np.asarray(Z) * self.std + self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def fit_scaler(train: Instances | np.ndarray) -> Scaler:
    if isinstance(train, Instances):
        check_trainable(train, "fit_scaler")
        X = train.X
    else:
        X = np.asarray(train, dtype=float)
    if len(X) == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    return Scaler(X.mean(axis=0), X.std(axis=0))


def apply_scaler(scaler: Scaler, instances: Instances) -> Instances:
    return instances.with_X(scaler.transform(instances.X))


# --- imbalance -------------------------------------------------------------------


def oversample_indices(labels: np.ndarray, seed: int) -> np.ndarray:
    """Original indices followed by random minority duplicates so every present class
    reaches the majority count."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) == 0:
        return np.arange(0)
    target = counts.max()
    extra = []
    for c, n in zip(classes, counts):
        if n < target:
            members = np.flatnonzero(labels == c)
            extra.append(rng.choice(members, size=target - n, replace=True))
    return np.concatenate([np.arange(len(labels))] + extra)


def oversample(train: Instances, seed: int, labels: np.ndarray | None = None) -> Instances:
    """Random duplication of minority classes; ``labels`` defaults to ``label4``."""
    check_trainable(train, "oversample")
    return train[oversample_indices(train.label4 if labels is None else labels, seed)]


# --- feature selection -----------------------------------------------------------


def select_features(train: Instances, mode: str = "none", keep_fraction: float = 0.8, seed: int = 0) -> np.ndarray:
    check_trainable(train, "select_features")
    d = train.X.shape[1]
    if mode == "none":
        mask = np.ones(d, dtype=bool)
    elif mode == "variance":
        mask = train.X.std(axis=0) >= CONSTANT_EPS
    elif mode == "importance":
        from .learners import ForestParams, fit_forest

        forest = fit_forest(train.X, train.label4, 4, ForestParams(mode="ERT", seed=seed))
        imp = forest.feature_importances()
        keep = max(1, int(round(keep_fraction * d)))
        order = np.lexsort((np.arange(d), -imp))
        mask = np.zeros(d, dtype=bool)
        mask[order[:keep]] = True
    else:
        raise ValueError(f"unknown feature selection mode {mode!r}")
    if not mask.any():
        raise ValueError("feature selection would retain no features")
    return mask


# --- instance dump -----------------------------------------------------------


INSTANCES_HEADER = ["patient_id", "t"] + [f"f{i}" for i in range(N_FEATURES)] + ["label4", "occurred"]


def write_instances(instances: Instances, path, utc_offset_minutes: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INSTANCES_HEADER)
        for inst in instances:
            w.writerow(
                [inst.patient_id, format_timestamp(inst.t, utc_offset_minutes)]
                + [repr(float(v)) for v in inst.features]
                + [inst.label4.name, int(inst.occurred)]
            )


def read_instances(path) -> Instances:
    from .cohort import parse_timestamp

    pids, ts, rows, labels = [], [], [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != INSTANCES_HEADER:
            raise DataError(f"{path}:1: unexpected instances header")
        for row in reader:
            if not row:
                continue
            try:
                if len(row) != len(INSTANCES_HEADER):
                    raise ValueError(f"expected {len(INSTANCES_HEADER)} fields, got {len(row)}")
                ts.append(parse_timestamp(row[1])[0])
                rows.append([float(v) for v in row[2 : 2 + N_FEATURES]])
                labels.append(int(BpsdClass[row[2 + N_FEATURES]]))
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{reader.line_num}: {exc}") from None
            pids.append(row[0])
    if not rows:
        return Instances.empty()
    return Instances(np.array(pids, dtype=object), ts, np.array(rows), labels)
