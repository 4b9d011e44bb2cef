from __future__ import annotations

import numpy as np
import pytest

from qenergy.model import WorkloadPoint, frontier_pw, predict_power_and_energy
from qenergy.records import CAS_LATENCY, OPREG_PREFIX
from qenergy.synth import (
    PlantedMachine,
    default_plan,
    microbench_freqs,
    synth_dataset,
    synth_measurements,
)


def test_noiseless_records_equal_the_model(plant):
    points = [WorkloadPoint("a0", n, 2.3, pw) for n in (1, 4, 7) for pw in (0.0, 80.0, 3000.0)]
    for point, rec in zip(points, synth_measurements(plant, points)):
        want = predict_power_and_energy(
            point, plant.throughput_model("a0"), plant.power_model("a0"), plant.cas, plant.topology
        )
        assert rec.throughput == pytest.approx(want.throughput, rel=1e-12)
        assert rec.p_cpu + rec.p_mem + rec.p_unc == pytest.approx(want.breakdown.total, rel=1e-12)
        assert rec.source == "synth"


def test_seeded_noise_is_reproducible(plant):
    noisy = plant.with_noise(0.01)
    assert synth_dataset(noisy, seed=5) == synth_dataset(noisy, seed=5)
    assert synth_dataset(noisy, seed=5) != synth_dataset(noisy, seed=6)


def test_noise_has_requested_scale(plant):
    points = [WorkloadPoint("a0", 2, 2.3, 5000.0)] * 4000
    clean = synth_measurements(plant, points[:1])[0].throughput
    noisy = np.array([r.throughput for r in synth_measurements(plant.with_noise(0.02), points, seed=1)])
    rel = noisy / clean - 1
    assert abs(rel.mean()) < 4 * 0.02 / np.sqrt(rel.size)
    assert rel.std() == pytest.approx(0.02, rel=0.1)


def test_memory_quantization(plant):
    q = 0.25
    recs = synth_measurements(plant.with_noise(quantum=q), [WorkloadPoint("a2", n, 3.4, 60.0) for n in range(1, 9)])
    base = plant.static_active.p_stat["memory"]
    for r in recs:
        k = (r.p_mem - base) / q
        assert k == pytest.approx(round(k), abs=1e-9)


def test_transient_blurs_only_near_the_frontier(plant):
    tm = plant.throughput_model("a0")
    pw_f = frontier_pw(4, 2.3, tm, plant.cas, plant.topology)
    blurred = plant.with_noise(width=0.05 * pw_f)
    sharp = [WorkloadPoint("a0", 4, 2.3, pw_f * k) for k in (0.2, 1.04, 5.0)]
    a = synth_measurements(plant, sharp)
    b = synth_measurements(blurred, sharp)
    assert a[0].throughput == b[0].throughput and a[2].throughput == b[2].throughput
    assert a[1].throughput != b[1].throughput


def test_plan_covers_every_fit(plant):
    plan = default_plan(plant)
    impls = {p.impl for p in plan}
    assert impls == {"a0", "a2"}
    assert len(plan) == 8 + 2 * 2 + 2 * 2 * 3 * 7


def test_dataset_sections(dataset):
    kinds = {r.impl.split(":")[0] for r in dataset}
    assert {CAS_LATENCY, OPREG_PREFIX.rstrip(":"), "a0", "a2"} <= kinds


def test_microbench_freqs_include_queue_frequency():
    freqs = microbench_freqs()
    assert 2.3 in freqs and 1.2 in freqs and 3.4 in freqs


def test_plant_round_trip(tmp_path, plant):
    path = tmp_path / "plant.json"
    plant.save(path)
    assert PlantedMachine.load(path) == plant
