from __future__ import annotations

import os
import time

import pytest

from qenergy import harness
from qenergy.errors import DomainError, UnknownVariantError
from qenergy.harness import BenchConfig, PinningPlan, dense_pinning, parallel_work, run_benchmark
from qenergy.model import MachineTopology

DUAL8 = MachineTopology(sockets=2, cores_per_socket=8)


def test_dense_pinning_fills_one_socket_first():
    plan = dense_pinning(DUAL8, 4)
    assert plan.cores == tuple(range(8))
    assert plan.sockets_used() == 1


def test_dense_pinning_overflow_pair_goes_to_next_socket():
    plan = dense_pinning(DUAL8, 5)
    assert plan.cores[:8] == tuple(range(8))
    assert plan.cores[8:] == (8, 9)
    assert plan.sockets_used() == 2


def test_dense_pinning_rejects_oversubscription():
    with pytest.raises(DomainError):
        dense_pinning(DUAL8, 9)
    with pytest.raises(DomainError):
        dense_pinning(DUAL8, 0)


def test_dense_pinning_prefers_most_filled_socket():
    topo = MachineTopology(sockets=3, cores_per_socket=3)
    cores = dense_pinning(topo, 4).cores
    assert [c // 3 for c in cores] == [0, 0, 0, 1, 1, 1, 2, 2]


def test_pinning_plan_validation():
    with pytest.raises(DomainError):
        PinningPlan((0, 0), DUAL8)
    with pytest.raises(DomainError):
        PinningPlan((0, 16), DUAL8)


def test_parallel_work_zero_is_identity():
    assert parallel_work(0, 2.5) == 2.5


def test_parallel_work_depends_on_every_division():
    assert parallel_work(3, 1.5) != parallel_work(3, 1.6)
    # ten chained divisions by a constant near one bring x back close to itself
    assert parallel_work(50, 1.5) == pytest.approx(1.5, rel=1e-9)


def _best_times(sizes, repeats=9):
    # thread CPU time, so other processes on the box do not skew the ratio
    best = dict.fromkeys(sizes, float("inf"))
    for _ in range(repeats):
        for pw in sizes:
            t0 = time.thread_time()
            parallel_work(pw)
            best[pw] = min(best[pw], time.thread_time() - t0)
    return best


def test_parallel_work_time_is_linear():
    best = _best_times((20_000, 40_000))
    ratio = best[40_000] / best[20_000]
    assert 1.8 <= ratio <= 2.2


def test_bench_config_validation():
    with pytest.raises(DomainError):
        BenchConfig("a0", n=0, pw=0)
    with pytest.raises(DomainError):
        BenchConfig("a0", n=1, pw=0, duration=0)
    with pytest.raises(DomainError):
        BenchConfig("a0", n=1, pw=0, pinning="sparse")


def test_unknown_variant():
    with pytest.raises(UnknownVariantError):
        run_benchmark(BenchConfig("nope", n=1, pw=0, duration=0.05, warmup=0))


@pytest.mark.parametrize("variant", ["a0", "a2"])
def test_smoke_run_accounts_for_every_item(variant):
    rec = run_benchmark(BenchConfig(variant, n=1, pw=0, duration=0.1, warmup=0.02, pinning="none", f=2.0))
    assert rec.ops_ok > 0
    assert rec.impl == variant and rec.n == 1 and rec.f == 2.0
    assert rec.p_cpu is None and rec.p_mem is None and rec.p_unc is None
    meta = rec.meta
    assert meta["dequeued_total"] == meta["enqueued"] - meta["resident"]
    assert rec.ops_ok <= meta["dequeued_total"]
    assert rec.pinning == "unpinned"


def test_failed_pinning_degrades_with_warning(monkeypatch):
    def refuse(pid, cores):
        raise OSError(22, "Invalid argument")

    monkeypatch.setattr(os, "sched_setaffinity", refuse, raising=False)
    rec = run_benchmark(BenchConfig("a0", n=1, pw=10, duration=0.05, warmup=0, f=1.0))
    assert rec.pinning == "unpinned"
    assert any("pinning" in w for w in rec.meta["warnings"])


def test_plan_must_match_thread_count():
    plan = PinningPlan((0,), DUAL8)
    with pytest.raises(DomainError):
        run_benchmark(BenchConfig("a0", n=1, pw=0, duration=0.05, pinning=plan, topology=DUAL8))


def test_self_calibrate_lambda_is_consistent():
    t_ps, lam = harness.self_calibrate_lambda(1, 2000, duration=0.2, f=2.0)
    assert t_ps > 0
    assert lam == pytest.approx(2000 / (t_ps * 2.0))
    with pytest.raises(DomainError):
        harness.self_calibrate_lambda(1, 0)


@pytest.mark.live
def test_live_large_pw_throughput_matches_parallel_section():
    pw = 20_000
    t_ps, _ = harness.self_calibrate_lambda(1, pw, duration=1.0)
    rec = run_benchmark(BenchConfig("a0", n=1, pw=pw, duration=2.0, warmup=0.3))
    expected = 1 / t_ps
    assert abs(rec.throughput - expected) / expected <= 0.15


@pytest.mark.live
def test_live_throughput_is_duration_invariant():
    cfg = dict(variant="a2", n=1, pw=5_000, warmup=0.3)
    short = run_benchmark(BenchConfig(duration=1.0, **cfg)).throughput
    long = run_benchmark(BenchConfig(duration=2.0, **cfg)).throughput
    assert abs(long - short) / short <= 0.10
