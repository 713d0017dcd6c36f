"""Patient, signal and BPSD-event data model; CSV ingestion; 15-minute gridding."""
from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

SLOT_SECONDS = 15 * 60
DAY_SECONDS = 24 * 3600


class DataError(ValueError):
    """Input data does not conform to the expected schema."""


class SignalType(enum.IntEnum):
    HR = 0
    HRV = 1
    SYS = 2
    DIA = 3
    Stress = 4
    Temp = 5
    Oxygen = 6
    Steps = 7
    Calories = 8
    TossTurn = 9
    SleepQuality = 10


SIGNAL_NAMES: tuple[str, ...] = tuple(s.name for s in SignalType)
N_SIGNALS = len(SIGNAL_NAMES)
SLEEP_SIGNALS = (SignalType.TossTurn, SignalType.SleepQuality)


class BpsdClass(enum.IntEnum):
    Normal = 0
    Hyperactivity = 1
    Psychosis = 2
    PhysicalBehavior = 3

    @property
    def priority(self) -> int:
        """Tie-break rank; lower wins."""
        return _PRIORITY[self]


_PRIORITY = {
    BpsdClass.Hyperactivity: 0,
    BpsdClass.Psychosis: 1,
    BpsdClass.PhysicalBehavior: 2,
    BpsdClass.Normal: 3,
}
ABNORMAL_CLASSES = (BpsdClass.Hyperactivity, BpsdClass.Psychosis, BpsdClass.PhysicalBehavior)


@dataclass(frozen=True)
class Demographics:
    age: int
    sex: int  # 0 female, 1 male
    education_years: int

    def __post_init__(self):
        if not 0 <= self.age <= 130:
            raise DataError(f"age out of range: {self.age}")
        if self.sex not in (0, 1):
            raise DataError(f"sex must be 0 or 1, got {self.sex}")
        if not 0 <= self.education_years <= 30:
            raise DataError(f"education_years out of range: {self.education_years}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.age, self.sex, self.education_years], dtype=float)


@dataclass(frozen=True, slots=True)
class SignalSample:
    timestamp: int  # UTC epoch seconds
    signal: SignalType
    value: float


@dataclass(frozen=True, slots=True)
class BpsdEvent:
    timestamp: int  # UTC epoch seconds
    bpsd_class: BpsdClass

    def __post_init__(self):
        if self.bpsd_class == BpsdClass.Normal:
            raise DataError("a BPSD event cannot be Normal")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    demographics: Demographics
    samples: tuple[SignalSample, ...] = ()
    events: tuple[BpsdEvent, ...] = ()
    utc_offset_minutes: int = 0  # local offset used for calendar days and CSV output

    def __post_init__(self):
        if not self.patient_id:
            raise DataError("empty patient_id")
        events = tuple(sorted(self.events, key=lambda e: (e.timestamp, e.bpsd_class.priority)))
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "samples", tuple(self.samples))


Cohort = dict  # patient_id -> PatientRecord, in demographics order


@dataclass(frozen=True)
class SignalGrid:
    """Slot k covers [grid_start + 15k min, grid_start + 15(k+1) min)."""

    patient_id: str
    grid_start: int
    cells: np.ndarray  # (n_slots, 11); rows of absent cells are NaN
    present: np.ndarray = field(repr=False)  # (n_slots,) bool

    @property
    def n_slots(self) -> int:
        return len(self.present)

    def slot_start(self, k: int) -> int:
        return self.grid_start + k * SLOT_SECONDS


# --- timestamps -----------------------------------------------------------


def parse_timestamp(text: str) -> tuple[int, int]:
    """ISO-8601 with offset -> (UTC epoch seconds, offset minutes)."""
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is None:
        raise ValueError(f"timestamp without UTC offset: {text!r}")
    offset = dt.utcoffset()
    return int(dt.timestamp()), int(offset.total_seconds() // 60)


def format_timestamp(epoch: int, offset_minutes: int = 0) -> str:
    tz = timezone(timedelta(minutes=offset_minutes))
    return datetime.fromtimestamp(epoch, tz).isoformat()


def floor_slot(epoch: int | np.ndarray) -> int | np.ndarray:
    return epoch - epoch % SLOT_SECONDS


# --- CSV ingestion --------------------------------------------------------

SIGNALS_HEADER = ["patient_id", "timestamp", "signal", "value"]
EVENTS_HEADER = ["patient_id", "timestamp", "bpsd_class"]
DEMOGRAPHICS_HEADER = ["patient_id", "age", "sex", "education_years"]
_SEX_CODES = {"F": 0, "M": 1}


def _rows(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip() for h in first] != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def load_cohort(signals_path, events_path, demographics_path) -> Cohort:
    signals_path, events_path, demographics_path = map(Path, (signals_path, events_path, demographics_path))

    demographics: dict[str, Demographics] = {}
    for line, (pid, age, sex, edu) in _rows(demographics_path, DEMOGRAPHICS_HEADER):
        if pid in demographics:
            raise DataError(f"{demographics_path}:{line}: duplicate patient_id {pid!r}")
        if sex not in _SEX_CODES:
            raise DataError(f"{demographics_path}:{line}: sex must be F or M, got {sex!r}")
        try:
            demographics[pid] = Demographics(int(age), _SEX_CODES[sex], int(edu))
        except ValueError as exc:
            raise DataError(f"{demographics_path}:{line}: {exc}") from None

    samples: dict[str, list[SignalSample]] = defaultdict(list)
    offsets: dict[str, int] = {}
    for line, (pid, ts, name, value) in _rows(signals_path, SIGNALS_HEADER):
        if name not in SignalType.__members__:
            raise DataError(f"{signals_path}:{line}: unknown signal {name!r}")
        try:
            epoch, offset = parse_timestamp(ts)
            v = float(value)
        except ValueError as exc:
            raise DataError(f"{signals_path}:{line}: {exc}") from None
        if not np.isfinite(v):
            raise DataError(f"{signals_path}:{line}: non-finite value")
        if pid not in demographics:
            raise DataError(f"{signals_path}:{line}: patient {pid!r} missing from demographics")
        offsets.setdefault(pid, offset)
        samples[pid].append(SignalSample(epoch, SignalType[name], v))

    events: dict[str, list[BpsdEvent]] = defaultdict(list)
    for line, (pid, ts, cls) in _rows(events_path, EVENTS_HEADER):
        if cls not in ("Hyperactivity", "Psychosis", "PhysicalBehavior"):
            raise DataError(f"{events_path}:{line}: invalid bpsd_class {cls!r}")
        try:
            epoch, offset = parse_timestamp(ts)
        except ValueError as exc:
            raise DataError(f"{events_path}:{line}: {exc}") from None
        if pid not in demographics:
            raise DataError(f"{events_path}:{line}: patient {pid!r} missing from demographics")
        offsets.setdefault(pid, offset)
        events[pid].append(BpsdEvent(epoch, BpsdClass[cls]))

    return {
        pid: PatientRecord(pid, demo, tuple(samples[pid]), tuple(events[pid]), offsets.get(pid, 0))
        for pid, demo in demographics.items()
    }


def write_cohort(cohort: Mapping[str, PatientRecord], out_dir) -> tuple[Path, Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = out / "signals.csv", out / "events.csv", out / "demographics.csv"
    with open(paths[0], "w", newline="") as fs, open(paths[1], "w", newline="") as fe, open(
        paths[2], "w", newline=""
    ) as fd:
        ws, we, wd = csv.writer(fs, lineterminator="\n"), csv.writer(fe, lineterminator="\n"), csv.writer(
            fd, lineterminator="\n"
        )
        ws.writerow(SIGNALS_HEADER)
        we.writerow(EVENTS_HEADER)
        wd.writerow(DEMOGRAPHICS_HEADER)
        for pid, rec in cohort.items():
            d = rec.demographics
            wd.writerow([pid, d.age, "FM"[d.sex], d.education_years])
            off = rec.utc_offset_minutes
            for s in rec.samples:
                ws.writerow([pid, format_timestamp(s.timestamp, off), s.signal.name, repr(float(s.value))])
            for e in rec.events:
                we.writerow([pid, format_timestamp(e.timestamp, off), e.bpsd_class.name])
    return paths


# --- gridding --------------------------------------------------------------


def _local_day(epoch: np.ndarray, offset_minutes: int) -> np.ndarray:
    return (epoch + offset_minutes * 60) // DAY_SECONDS


def sleep_day_values(record: PatientRecord) -> dict[SignalType, dict[int, float]]:
    """Per local calendar day mean of each sleep variable."""
    acc: dict[SignalType, dict[int, list[float]]] = {s: defaultdict(list) for s in SLEEP_SIGNALS}
    for s in record.samples:
        if s.signal in acc:
            day = (s.timestamp + record.utc_offset_minutes * 60) // DAY_SECONDS
            acc[s.signal][day].append(s.value)
    return {sig: {day: float(np.mean(v)) for day, v in days.items()} for sig, days in acc.items()}


def population_sleep_medians(records: Iterable[PatientRecord]) -> dict[SignalType, float]:
    """Median of per-day sleep values across a (training) cohort; fallback for patients with none."""
    pooled: dict[SignalType, list[float]] = {s: [] for s in SLEEP_SIGNALS}
    for rec in records:
        for sig, days in sleep_day_values(rec).items():
            pooled[sig].extend(days.values())
    return {sig: float(np.median(v)) for sig, v in pooled.items() if v}


def align_to_grid(record: PatientRecord, sleep_fallback: Mapping[SignalType, float] | None = None) -> SignalGrid:
    """Average samples into 15-minute slots; broadcast per-day sleep values.

    A cell is present only when every non-sleep signal has at least one sample in the slot
    and both sleep variables resolve (day value, else patient median over days, else
    ``sleep_fallback``).
    """
    slot_samples = [s for s in record.samples if s.signal not in SLEEP_SIGNALS]
    if not slot_samples:
        return SignalGrid(record.patient_id, 0, np.empty((0, N_SIGNALS)), np.zeros(0, dtype=bool))

    times = np.fromiter((s.timestamp for s in slot_samples), dtype=np.int64, count=len(slot_samples))
    sigs = np.fromiter((int(s.signal) for s in slot_samples), dtype=np.int64, count=len(slot_samples))
    vals = np.fromiter((s.value for s in slot_samples), dtype=float, count=len(slot_samples))

    grid_start = int(floor_slot(times.min()))
    slot = (floor_slot(times) - grid_start) // SLOT_SECONDS
    n_slots = int(slot.max()) + 1

    sums = np.zeros((n_slots, N_SIGNALS))
    counts = np.zeros((n_slots, N_SIGNALS))
    np.add.at(sums, (slot, sigs), vals)
    np.add.at(counts, (slot, sigs), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cells = sums / counts

    touched = counts.sum(axis=1) > 0
    slot_days = _local_day(grid_start + np.arange(n_slots) * SLOT_SECONDS, record.utc_offset_minutes)
    day_values = sleep_day_values(record)
    for sig in SLEEP_SIGNALS:
        by_day = day_values[sig]
        fill = float(np.median(list(by_day.values()))) if by_day else (sleep_fallback or {}).get(sig, np.nan)
        cells[:, sig] = [by_day.get(int(d), fill) for d in slot_days]

    present = touched & np.isfinite(cells).all(axis=1)
    cells[~present] = np.nan
    return SignalGrid(record.patient_id, grid_start, cells, present)
