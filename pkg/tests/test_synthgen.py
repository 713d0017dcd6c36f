import hashlib
import itertools

import numpy as np
import pytest

from bpsd.cohort import SLEEP_SIGNALS, BpsdClass, SignalType, write_cohort
from bpsd.pipeline import cohort_instances
from bpsd.synthgen import EPISODE_SIGNATURES, GeneratorConfig, InfeasibleConfig, generate_cohort, generate_patient, solve_event_rates


def _digest(cohort, tmp_path):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in write_cohort(cohort, tmp_path)]


def test_one_day_has_36_slots():
    cohort = generate_cohort(GeneratorConfig(n_patients=1, days=1, wear_days_per_week=5, seed=1))
    rec = cohort["P001"]
    hr_times = sorted(s.timestamp for s in rec.samples if s.signal == SignalType.HR)
    assert len(hr_times) == 36
    assert len({t - t % 900 for t in hr_times}) == 36
    assert sum(1 for s in rec.samples if s.signal in SLEEP_SIGNALS) == 2


def test_same_seed_same_bytes(tmp_path):
    cfg = GeneratorConfig(n_patients=3, days=7, seed=42)
    a = _digest(generate_cohort(cfg), tmp_path / "a")
    b = _digest(generate_cohort(cfg), tmp_path / "b")
    c = _digest(generate_cohort(GeneratorConfig(n_patients=3, days=7, seed=43)), tmp_path / "c")
    assert a == b and a != c


def test_patients_use_independent_substreams():
    cfg = GeneratorConfig(n_patients=4, days=7, seed=9)
    rates = solve_event_rates(cfg)
    assert generate_patient(cfg, 2, rates) == generate_cohort(cfg)["P003"]


def test_default_label_mix():
    inst = cohort_instances(generate_cohort(GeneratorConfig()))
    shares = np.bincount(inst.label4, minlength=4) / len(inst)
    assert 0.80 <= shares[BpsdClass.Normal] <= 0.86
    assert np.all(np.abs(shares - np.array(GeneratorConfig().class_mix)) <= 0.03)


def test_events_inside_wear_windows():
    cfg = GeneratorConfig(n_patients=5, days=14, seed=3)
    for rec in generate_cohort(cfg).values():
        for e in rec.events:
            local_hour = ((e.timestamp + cfg.utc_offset_minutes * 60) % 86400) / 3600
            assert cfg.wear_window[0] <= local_hour < cfg.wear_window[1]


def test_wear_days_per_week():
    cfg = GeneratorConfig(n_patients=2, days=14, wear_days_per_week=3, seed=0)
    for rec in generate_cohort(cfg).values():
        days = {(s.timestamp + cfg.utc_offset_minutes * 60) // 86400 for s in rec.samples}
        assert len(days) == 6


def test_baselines_differ_across_patients():
    cohort = generate_cohort(GeneratorConfig(n_patients=8, days=7, seed=4))
    means = [np.mean([s.value for s in r.samples if s.signal == SignalType.HR]) for r in cohort.values()]
    assert np.ptp(means) > 10


def test_prodromal_drift_follows_signature():
    cfg = GeneratorConfig(n_patients=10, days=21, seed=8)
    cohort = generate_cohort(cfg)
    flat = generate_cohort(GeneratorConfig(n_patients=10, days=21, seed=8, drift_scale=0.0))
    diffs = {c: [] for c in EPISODE_SIGNATURES}
    for pid, rec in cohort.items():
        base = {(s.timestamp, s.signal): s.value for s in flat[pid].samples}
        for e in rec.events:
            for s in rec.samples:
                if e.timestamp - 900 <= s.timestamp < e.timestamp and s.signal not in SLEEP_SIGNALS:
                    diffs[e.bpsd_class].append((s.signal, s.value - base[(s.timestamp, s.signal)]))
    for c, sig in EPISODE_SIGNATURES.items():
        if not diffs[c]:
            continue
        for s in SignalType:
            if s in SLEEP_SIGNALS:
                continue
            d = [v for sg, v in diffs[c] if sg == s]
            if sig[s] > 0:
                assert np.mean(d) > 0
            elif sig[s] < 0:
                assert np.mean(d) < 0


def test_signatures_pairwise_non_proportional():
    for a, b in itertools.combinations(EPISODE_SIGNATURES.values(), 2):
        assert np.linalg.matrix_rank(np.stack([a, b])) == 2


def test_rates_follow_class_proportions():
    rates = solve_event_rates(GeneratorConfig())
    mix = np.array(GeneratorConfig().class_mix)
    assert rates[0] == 0
    assert np.allclose(rates[1:] / rates[1:].sum(), mix[1:] / mix[1:].sum())


@pytest.mark.parametrize(
    "kwargs",
    [
        {"class_mix": (0.5, 0.2, 0.2, 0.2)},
        {"wear_days_per_week": 6},
        {"prodromal_lead": (0.0, 3600.0)},
        {"class_mix": (0.01, 0.33, 0.33, 0.33)},
    ],
)
def test_infeasible_configs(kwargs):
    with pytest.raises(InfeasibleConfig):
        cfg = GeneratorConfig(**kwargs)
        solve_event_rates(cfg)
