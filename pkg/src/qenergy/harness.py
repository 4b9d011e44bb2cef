"""Synthetic queue benchmark: n enqueuers and n dequeuers separated by parallel work.

Enqueuers loop on ``parallel_work(pw)`` then ``enqueue``; dequeuers loop on
``dequeue`` and, when it returns an item, ``parallel_work(pw)``.  Throughput is
the number of successful dequeues in the measurement window divided by its
length.  Power is not measured here; records leave the power columns empty so
that externally sampled energy counters can be attached later.

Under CPython all workers share the interpreter lock, so absolute numbers say
little about native queues.  The harness is still useful for checking the
model's structure on the build machine (for example lambda self-calibration).
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

from .errors import DomainError, HarnessError
from .model import MachineTopology, active_sockets, is_off_socket
from .queues.registry import create_queue, get_variant
from .records import MeasurementRecord

WARMUP_S = 0.2
DIVISOR = 1.0000001

_IDLE, _MEASURE, _STOP = 0, 1, 2


@dataclass(frozen=True)
class PinningPlan:
    """Core id per worker thread, in spawn order (enqueuer, dequeuer, enqueuer, ...)."""

    cores: tuple[int, ...]
    topology: MachineTopology = MachineTopology()
    dense: bool = False

    def __post_init__(self):
        if len(set(self.cores)) != len(self.cores):
            raise DomainError(f"core assigned twice in {self.cores}")
        bad = [c for c in self.cores if not 0 <= c < self.topology.total_cores]
        if bad:
            raise DomainError(f"cores {bad} outside the {self.topology.total_cores}-core topology")

    def sockets_used(self) -> int:
        return len({c // self.topology.cores_per_socket for c in self.cores}) or 1


def dense_pinning(topo: MachineTopology, n: int) -> PinningPlan:
    """Place each thread on the most filled socket that still has a free core.

    Ties go to the lowest socket index.  Core ``j`` of socket ``s`` has id
    ``s * cores_per_socket + j``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if 2 * n > topo.total_cores:
        raise DomainError(f"{2 * n} threads oversubscribe {topo.total_cores} cores")
    fill = [0] * topo.sockets
    cores = []
    for _ in range(2 * n):
        open_sockets = [s for s in range(topo.sockets) if fill[s] < topo.cores_per_socket]
        s = max(open_sockets, key=lambda i: (fill[i], -i))
        cores.append(s * topo.cores_per_socket + fill[s])
        fill[s] += 1
    return PinningPlan(tuple(cores), topo, dense=True)


def parallel_work(pw: int, x: float = 1.5) -> float:
    """``pw`` bunches of ten dependent floating divisions; returns the chained value."""
    d = DIVISOR
    for _ in range(int(pw)):
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
        x = d / x
    return x


def detect_frequency_ghz() -> float | None:
    """Nominal core frequency from sysfs or /proc/cpuinfo, if available."""
    try:
        with open("/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq") as fh:
            return int(fh.read().strip()) / 1e6
    except (OSError, ValueError):
        pass
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("cpu mhz"):
                    return float(line.split(":")[1]) / 1e3
    except (OSError, ValueError, IndexError):
        pass
    return None


@dataclass(frozen=True)
class BenchConfig:
    variant: str
    n: int
    pw: int
    duration: float = 1.0
    warmup: float = WARMUP_S
    pinning: str | PinningPlan = "dense"  # "dense", "none" or an explicit plan
    capacity: int | None = None
    f: float | None = None
    topology: MachineTopology = field(default_factory=MachineTopology)

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not self.duration > 0:
            raise DomainError("duration must be > 0")
        if self.warmup < 0 or self.pw < 0:
            raise DomainError("warmup and pw must be >= 0")
        if isinstance(self.pinning, str) and self.pinning not in ("dense", "none"):
            raise DomainError(f"unknown pinning {self.pinning!r}")


def _pin(core: int, warnings: list) -> bool:
    if not hasattr(os, "sched_setaffinity"):
        warnings.append("affinity not supported on this platform")
        return False
    try:
        os.sched_setaffinity(0, {core})
        return True
    except OSError as exc:
        warnings.append(f"pinning to core {core} failed: {exc.strerror or exc}")
        return False


def run_benchmark(cfg: BenchConfig) -> MeasurementRecord:
    get_variant(cfg.variant)  # fail early on unknown ids
    queue = create_queue(cfg.variant, cfg.capacity)
    topo = cfg.topology
    if isinstance(cfg.pinning, PinningPlan):
        plan = cfg.pinning
        if len(plan.cores) != 2 * cfg.n:
            raise DomainError(f"plan has {len(plan.cores)} cores for {2 * cfg.n} threads")
    elif cfg.pinning == "dense":
        plan = dense_pinning(topo, cfg.n)
    else:
        plan = None

    phase = [_IDLE]
    warnings: list[str] = []
    pinned = [False] * (2 * cfg.n)
    counts = [dict(ok=0, total=0, enq=0) for _ in range(2 * cfg.n)]
    ready = threading.Barrier(2 * cfg.n + 1)
    pw = int(cfg.pw)

    def enqueuer(slot: int, worker: int):
        if plan is not None:
            pinned[slot] = _pin(plan.cores[slot], warnings)
        c = counts[slot]
        seq = 0
        ready.wait()
        while phase[0] != _STOP:
            parallel_work(pw)
            item = (worker << 40) | seq
            while not queue.enqueue(item):
                if phase[0] == _STOP:
                    return
            seq += 1
            c["enq"] += 1

    def dequeuer(slot: int):
        if plan is not None:
            pinned[slot] = _pin(plan.cores[slot], warnings)
        c = counts[slot]
        ready.wait()
        while phase[0] != _STOP:
            if queue.dequeue() is not None:
                c["total"] += 1
                if phase[0] == _MEASURE:
                    c["ok"] += 1
                parallel_work(pw)

    threads = []
    try:
        for i in range(cfg.n):
            threads.append(threading.Thread(target=enqueuer, args=(2 * i, i), daemon=True))
            threads.append(threading.Thread(target=dequeuer, args=(2 * i + 1,), daemon=True))
        for t in threads:
            t.start()
    except RuntimeError as exc:
        phase[0] = _STOP
        ready.abort()
        raise HarnessError(
            f"could not start worker threads: {exc}",
            {"started": sum(t.is_alive() for t in threads), "requested": 2 * cfg.n},
        ) from exc

    ready.wait()
    wall_start = time.time()
    time.sleep(cfg.warmup)
    phase[0] = _MEASURE
    t0 = time.perf_counter()
    time.sleep(cfg.duration)
    phase[0] = _STOP
    t1 = time.perf_counter()
    for t in threads:
        t.join()

    ops_ok = sum(c["ok"] for c in counts)
    enqueued = sum(c["enq"] for c in counts)
    dequeued = sum(c["total"] for c in counts)
    resident = len(queue.items())
    if plan is None:
        tag, sockets = "unpinned", active_sockets(2 * cfg.n, topo)
    elif all(pinned):
        tag, sockets = ("dense" if plan.dense else "custom"), plan.sockets_used()
    else:
        tag, sockets = "unpinned", plan.sockets_used()
    freq = cfg.f if cfg.f is not None else detect_frequency_ghz()
    meta = {
        "enqueued": enqueued,
        "dequeued_total": dequeued,
        "resident": resident,
        "wall_start": wall_start,
        "measured_s": t1 - t0,
        "warmup_s": cfg.warmup,
        "warnings": sorted(set(warnings)),
        "frequency_detected": cfg.f is None and freq is not None,
    }
    if plan is not None:
        meta["cores"] = list(plan.cores)
    return MeasurementRecord(
        impl=cfg.variant,
        n=cfg.n,
        f=freq if freq else 1.0,
        pw=float(pw),
        duration=t1 - t0,
        ops_ok=float(ops_ok),
        sockets_active=sockets,
        pinning=tag,
        loc=("mixed" if tag == "unpinned" else "off" if is_off_socket(cfg.n, topo) else "on"),
        source="bench",
        meta=meta,
    )


def self_calibrate_lambda(
    n: int,
    pw: int,
    duration: float = 0.5,
    f: float | None = None,
) -> tuple[float, float]:
    """Time ``parallel_work(pw)`` on ``2n`` concurrent threads.

    Returns ``(t_ps, lam)``: the per-thread time of one parallel section and
    the matching lambda, ``pw / (t_ps * f)``.
    """
    if pw < 1:
        raise DomainError("pw must be >= 1")
    stop = [False]
    counts = [0] * (2 * n)
    ready = threading.Barrier(2 * n + 1)

    def worker(i):
        ready.wait()
        k = 0
        while not stop[0]:
            parallel_work(pw)
            k += 1
        counts[i] = k

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(2 * n)]
    for t in threads:
        t.start()
    ready.wait()
    t0 = time.perf_counter()
    time.sleep(duration)
    stop[0] = True
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t0
    total = sum(counts)
    if total == 0:
        raise HarnessError("no parallel section completed during self-calibration")
    t_ps = elapsed * 2 * n / total
    freq = f if f is not None else (detect_frequency_ghz() or 1.0)
    return t_ps, pw / (t_ps * freq)
