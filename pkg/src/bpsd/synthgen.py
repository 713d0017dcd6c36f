"""Seeded synthetic cohort generator.

Each patient gets their own baseline mean and spread for every signal, drawn from wide
population ranges. BPSD events arrive as per-class Poisson processes during wear windows
and are preceded by a class-specific linear drift scaled to the patient's own spread, so
per-patient models can pick up prodromal changes that a pooled threshold cannot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .cohort import (
    ABNORMAL_CLASSES,
    DAY_SECONDS,
    N_SIGNALS,
    SLEEP_SIGNALS,
    SLOT_SECONDS,
    BpsdClass,
    BpsdEvent,
    Cohort,
    Demographics,
    PatientRecord,
    SignalSample,
    SignalType,
)

LAGS = 5
HORIZON_SECONDS = 4 * 3600

# (low, high) of the per-patient mean, (low, high) of the per-patient stdev
POPULATION_RANGES: dict[SignalType, tuple[tuple[float, float], tuple[float, float]]] = {
    SignalType.HR: ((58, 92), (3, 7)),
    SignalType.HRV: ((25, 70), (4, 10)),
    SignalType.SYS: ((105, 150), (4, 9)),
    SignalType.DIA: ((60, 90), (3, 7)),
    SignalType.Stress: ((15, 60), (4, 10)),
    SignalType.Temp: ((35.9, 36.9), (0.1, 0.25)),
    SignalType.Oxygen: ((94, 99), (0.5, 1.5)),
    SignalType.Steps: ((40, 250), (10, 60)),
    SignalType.Calories: ((15, 45), (3, 10)),
    SignalType.TossTurn: ((5, 30), (2, 6)),
    SignalType.SleepQuality: ((40, 90), (5, 12)),
}
NONNEGATIVE = (SignalType.Steps, SignalType.Calories, SignalType.TossTurn)


def _signature(**drifts: float) -> np.ndarray:
    v = np.zeros(N_SIGNALS)
    for name, d in drifts.items():
        v[SignalType[name]] = d
    return v


EPISODE_SIGNATURES: dict[BpsdClass, np.ndarray] = {
    BpsdClass.Hyperactivity: _signature(Steps=1.0, Calories=1.0, HR=1.0),
    BpsdClass.Psychosis: _signature(Stress=1.0, HRV=-1.0),
    BpsdClass.PhysicalBehavior: _signature(HR=1.0, Temp=1.0),
}


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_patients: int = 30
    days: int = 21
    wear_days_per_week: int = 4
    wear_window: tuple[int, int] = (8, 17)  # local hours, [start, end)
    seed: int = 42
    class_mix: tuple[float, float, float, float] = (0.829, 0.011, 0.104, 0.056)
    prodromal_lead: tuple[float, float] = (3600.0, 3 * 3600.0)  # seconds
    drift_scale: float = 1.5
    circadian_amplitude: float = 0.5  # in units of patient stdev
    start_date: str = "2024-01-01"
    utc_offset_minutes: int = 480
    timestamp_jitter: int = 120  # seconds; samples land anywhere in the first minutes of a slot
    signatures: dict = field(default_factory=lambda: dict(EPISODE_SIGNATURES), compare=False, repr=False)

    def __post_init__(self):
        if self.n_patients < 0 or self.days < 0:
            raise InfeasibleConfig("n_patients and days must be non-negative")
        if len(self.class_mix) != 4 or min(self.class_mix) < 0 or abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise InfeasibleConfig(f"class_mix must be 4 non-negative proportions summing to 1: {self.class_mix}")
        if not 3 <= self.wear_days_per_week <= 5:
            raise InfeasibleConfig("wear_days_per_week must be in [3, 5]")
        lo, hi = self.prodromal_lead
        if not 0 < lo <= hi:
            raise InfeasibleConfig("prodromal_lead must be a positive range")
        start, end = self.wear_window
        if not 0 <= start < end <= 24:
            raise InfeasibleConfig("wear_window must satisfy 0 <= start < end <= 24")

    @property
    def slots_per_day(self) -> int:
        return (self.wear_window[1] - self.wear_window[0]) * 4


def _expected_abnormal_fraction(rate: float, slots_per_day: int) -> float:
    """Expected share of windowed instances with an event in their 4 h horizon.

    ``rate`` is events per wear day, uniform over the wear window.
    """
    window = slots_per_day * SLOT_SECONDS
    t_end = (np.arange(LAGS - 1, slots_per_day) + 1) * SLOT_SECONDS
    overlap = np.minimum(HORIZON_SECONDS, window - t_end)
    return float(np.mean(1.0 - np.exp(-rate * overlap / window)))


def solve_event_rates(config: GeneratorConfig) -> np.ndarray:
    """Per-class events per wear day (index by BpsdClass) matching ``class_mix`` in expectation.

    The earliest of superposed Poisson processes is class c with probability rate_c / rate,
    so the abnormal split follows the class proportions; only the total rate needs solving.
    """
    mix = np.asarray(config.class_mix, dtype=float)
    target = 1.0 - mix[BpsdClass.Normal]
    rates = np.zeros(4)
    if target <= 0:
        return rates
    n = config.slots_per_day
    if n < LAGS + 1:
        raise InfeasibleConfig("wear window too short to form any instance")
    ceiling = _expected_abnormal_fraction(float(n), n)  # one event per slot on average
    if target >= ceiling:
        raise InfeasibleConfig(
            f"class_mix needs {target:.3f} abnormal share; at most {ceiling:.3f} reachable with <= one event per slot"
        )
    lo, hi = 0.0, float(n)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _expected_abnormal_fraction(mid, n) < target:
            lo = mid
        else:
            hi = mid
    total = 0.5 * (lo + hi)
    for c in ABNORMAL_CLASSES:
        rates[c] = total * mix[c] / target
    return rates


def _wear_days(rng: np.random.Generator, days: int, per_week: int) -> list[int]:
    out = []
    for week_start in range(0, days, 7):
        length = min(7, days - week_start)
        k = per_week if length == 7 else max(1, round(per_week * length / 7))
        chosen = rng.choice(length, size=min(k, length), replace=False)
        out.extend(week_start + int(d) for d in sorted(chosen))
    return out


def _demographics(rng: np.random.Generator) -> Demographics:
    age = int(np.clip(round(rng.normal(77.9, 10.2)), 50, 100))
    sex = int(rng.random() < 82 / 183)
    edu = int(np.clip(round(rng.normal(6.6, 4.5)), 0, 20))
    return Demographics(age, sex, edu)


def generate_patient(config: GeneratorConfig, index: int, rates: np.ndarray) -> PatientRecord:
    rng = np.random.default_rng([config.seed, index])
    demo = _demographics(rng)
    means = np.array([rng.uniform(*POPULATION_RANGES[s][0]) for s in SignalType])
    stds = np.array([rng.uniform(*POPULATION_RANGES[s][1]) for s in SignalType])
    phases = rng.uniform(0, 2 * np.pi, N_SIGNALS)

    start = datetime.fromisoformat(config.start_date).replace(tzinfo=timezone.utc)
    day0 = int(start.timestamp()) - config.utc_offset_minutes * 60  # local midnight of day 0
    w0, w1 = (h * 3600 for h in config.wear_window)
    n_slots = config.slots_per_day
    slot_offsets = w0 + np.arange(n_slots) * SLOT_SECONDS
    lead_lo, lead_hi = config.prodromal_lead

    samples: list[SignalSample] = []
    events: list[BpsdEvent] = []
    for day in _wear_days(rng, config.days, config.wear_days_per_week):
        base = day0 + day * DAY_SECONDS
        slot_times = base + slot_offsets

        day_events = []
        for c in ABNORMAL_CLASSES:
            for _ in range(rng.poisson(rates[c])):
                minute = int(rng.integers(0, (w1 - w0) // 60))
                day_events.append((base + w0 + 60 * minute, c))
        day_events.sort(key=lambda e: (e[0], BpsdClass(e[1]).priority))

        hours = (slot_offsets / 3600.0)[:, None]
        values = means + stds * (
            config.circadian_amplitude * np.sin(2 * np.pi * hours / 24.0 + phases)
            + rng.standard_normal((n_slots, N_SIGNALS))
        )
        for t_event, c in day_events:
            lead = rng.uniform(lead_lo, lead_hi)
            ramp = np.clip(1.0 - (t_event - slot_times) / lead, 0.0, 1.0)
            ramp[slot_times >= t_event] = 0.0
            values += ramp[:, None] * (config.drift_scale * stds * config.signatures[c])[None, :]
            events.append(BpsdEvent(int(t_event), BpsdClass(c)))

        for s in NONNEGATIVE:
            np.maximum(values[:, s], 0.0, out=values[:, s])
        jitter = rng.integers(0, max(1, config.timestamp_jitter), n_slots)
        for k in range(n_slots):
            t = int(slot_times[k] + jitter[k])
            for s in SignalType:
                if s not in SLEEP_SIGNALS:
                    samples.append(SignalSample(t, s, round(float(values[k, s]), 3)))
        for s in SLEEP_SIGNALS:
            v = max(0.0, means[s] + stds[s] * rng.standard_normal())
            samples.append(SignalSample(int(base + w0), s, round(float(v), 3)))

    return PatientRecord(f"P{index + 1:03d}", demo, tuple(samples), tuple(events), config.utc_offset_minutes)


def generate_cohort(config: GeneratorConfig = GeneratorConfig()) -> Cohort:
    rates = solve_event_rates(config)
    cohort = {}
    for i in range(config.n_patients):
        rec = generate_patient(config, i, rates)
        cohort[rec.patient_id] = rec
    return cohort
