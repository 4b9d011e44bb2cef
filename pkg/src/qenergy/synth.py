"""Synthetic measurements from a planted ground-truth machine.

With ``sigma = quantum = width = 0`` every generated number is exactly what
:mod:`qenergy.model` predicts, which makes calibrate-then-predict round trips
testable without the target hardware.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bundle import _cpu_to_dict, _sa_from_dict, _sa_to_dict, _tm_from_dict, _tm_to_dict
from .constants import (
    INSTRUCTION_COEFFS,
    MICROBENCH_FREQS_DECI,
    MOVIDIUS_EXTENDED_BENCHMARKS,
    MOVIDIUS_SHAVE_COUNTS,
    QUEUE_FREQS_GHZ,
)
from .errors import CalibrationGapError, DomainError
from .model import (
    CasCostModel,
    CpuPowerCoefficients,
    MachineTopology,
    MemoryPowerModel,
    MovidiusModel,
    PowerModel,
    StaticActiveTable,
    ThroughputModel,
    WorkloadPoint,
    _throughput_and_regime,
    active_sockets,
    freq_key,
    frontier_pw,
    is_off_socket,
    low_contention_retry_time,
    movidius_power,
    parallel_section_time,
    power_breakdown,
    throughput_low_contention,
)
from .records import CAS_LATENCY, OPREG_PREFIX, MeasurementRecord

CW_MARGIN = 1.5  # cw runs sit this far above their frontier
TRANSIENT_SPAN = 10.0  # blend only within this many widths of the frontier


@dataclass(frozen=True)
class PlantedMachine:
    topology: MachineTopology
    cas: CasCostModel
    throughput: Mapping[str, ThroughputModel]
    static_active: StaticActiveTable
    cpu: Mapping[str, CpuPowerCoefficients]
    memory: MemoryPowerModel
    op_coeffs: Mapping[str, tuple[float, float, float]] = field(default_factory=dict)
    sigma: float = 0.0
    quantum: float = 0.0
    width: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.quantum < 0 or self.width < 0:
            raise DomainError("sigma, quantum and width must be >= 0")

    def power_model(self, impl: str) -> PowerModel:
        if impl not in self.cpu:
            raise CalibrationGapError(f"planted machine has no CPU model for {impl!r}", missing=[("cpu", impl)])
        return PowerModel(self.static_active, self.cpu[impl], self.memory)

    def throughput_model(self, impl: str) -> ThroughputModel:
        try:
            return self.throughput[impl]
        except KeyError:
            raise CalibrationGapError(
                f"planted machine has no throughput model for {impl!r}", missing=[("throughput", impl)]
            ) from None

    def with_noise(self, sigma: float = 0.0, quantum: float = 0.0, width: float = 0.0) -> "PlantedMachine":
        return replace(self, sigma=sigma, quantum=quantum, width=width)

    def to_dict(self) -> dict:
        return {
            "topology": {"sockets": self.topology.sockets, "cores_per_socket": self.topology.cores_per_socket},
            "cas": {"a": self.cas.a, "a_prime": self.cas.a_prime, "b_prime": self.cas.b_prime},
            "throughput": {k: _tm_to_dict(v) for k, v in self.throughput.items()},
            "static_active": _sa_to_dict(self.static_active),
            "cpu": {k: _cpu_to_dict(v) for k, v in self.cpu.items()},
            "memory": {
                "rho": self.memory.rho,
                "rho_prime": self.memory.rho_prime,
                "rho_uncore": self.memory.rho_uncore,
                "uncore_linear": self.memory.uncore_linear,
            },
            "op_coeffs": {k: list(v) for k, v in self.op_coeffs.items()},
            "sigma": self.sigma,
            "quantum": self.quantum,
            "width": self.width,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlantedMachine":
        return cls(
            topology=MachineTopology(**d["topology"]),
            cas=CasCostModel(**d["cas"]),
            throughput={k: _tm_from_dict(k, v) for k, v in d["throughput"].items()},
            static_active=_sa_from_dict(d["static_active"]),
            cpu={k: CpuPowerCoefficients(**v) for k, v in d["cpu"].items()},
            memory=MemoryPowerModel(**d["memory"]),
            op_coeffs={k: tuple(v) for k, v in d.get("op_coeffs", {}).items()},
            sigma=float(d.get("sigma", 0.0)),
            quantum=float(d.get("quantum", 0.0)),
            width=float(d.get("width", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PlantedMachine":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- fixture ------------------------------------------------------------------

DEFAULT_IMPLS = {"a0": (20.0, 30.0), "a2": (28.0, 45.0)}
DEFAULT_CPU = {"a0": (0.0012, 0.06), "a2": (0.0013, 0.055)}


def _default_lambda(total_pairs: int) -> dict[int, float]:
    return {n: 2.5e7 * (1.0 - 0.01 * (n - 1)) for n in range(1, total_pairs + 1)}


def _continuous_hc_lines(model: ThroughputModel, cas, topo, freqs) -> dict:
    """Congested lines starting at 55% of the frontier throughput and meeting it there."""
    lines = {}
    for f in freqs:
        for n in model.lam:
            if n < 2:
                continue
            t_rl = low_contention_retry_time(n, f, model, cas, topo)
            peak = 1.0 / t_rl
            pw_f = frontier_pw(n, f, model, cas, topo)
            lines[(freq_key(f), n)] = (0.55 * peak, 0.45 * peak / pw_f)
    return lines


def default_plant() -> PlantedMachine:
    """Deterministic two-socket, 8-cores-per-socket fixture with implementations a0 and a2."""
    topo = MachineTopology(2, 8)
    cas = CasCostModel(a=100e-9, a_prime=80e-9, b_prime=20e-9)
    lam = _default_lambda(topo.total_cores // 2)
    throughput = {}
    for impl, (cw_on, cw_off) in DEFAULT_IMPLS.items():
        base = ThroughputModel(impl, lam, cw_on, cw_off)
        throughput[impl] = replace(base, hc_lines=_continuous_hc_lines(base, cas, topo, QUEUE_FREQS_GHZ))

    freqs = microbench_freqs()
    p_act = {
        "cpu": {f: 3.0 + 1.5 * f for f in freqs},
        "memory": {f: 1.0 + 0.2 * f for f in freqs},
        "uncore": {f: 2.0 + 0.5 * f for f in freqs},
    }
    table = StaticActiveTable({"cpu": 20.0, "memory": 5.0, "uncore": 10.0}, p_act)
    cpu = {impl: CpuPowerCoefficients(A, B, 1.7) for impl, (A, B) in DEFAULT_CPU.items()}
    memory = MemoryPowerModel(rho=0.8, rho_prime=0.0, rho_uncore=0.3, uncore_linear=0.05)
    ops = {op: INSTRUCTION_COEFFS[op] for op in ("cas", "fpdiv")}
    return PlantedMachine(topo, cas, throughput, table, cpu, memory, ops)


def microbench_freqs() -> list[float]:
    """Micro-benchmark frequencies in GHz, including every queue frequency."""
    return sorted({freq_key(d / 10) for d in MICROBENCH_FREQS_DECI} | {freq_key(f) for f in QUEUE_FREQS_GHZ})


# --- generation -----------------------------------------------------------------


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _planted_throughput(machine: PlantedMachine, point: WorkloadPoint) -> float:
    tm = machine.throughput_model(point.impl)
    topo, cas = machine.topology, machine.cas
    throughput, _ = _throughput_and_regime(point, tm, cas, topo)
    if machine.width == 0 or point.n < 2:
        return throughput
    pw_f = frontier_pw(point.n, point.f, tm, cas, topo)
    x = (point.pw - pw_f) / machine.width
    if abs(x) >= TRANSIENT_SPAN:
        return throughput
    t_ps = parallel_section_time(point.pw, tm.lambda_for(point.n), point.f)
    t_rl = low_contention_retry_time(point.n, point.f, tm, cas, topo)
    low = throughput_low_contention(point.n, t_ps, t_rl)
    a, b = tm.hc_line(point.f, point.n)
    high = max(a + b * point.pw, 0.0)
    w = _logistic(x)
    return (1.0 - w) * high + w * low


def _noisy(value: float, sigma: float, rng) -> float:
    if sigma == 0:
        return value
    return value * (1.0 + sigma * rng.standard_normal())


def synth_measurements(
    machine: PlantedMachine,
    points: Iterable[WorkloadPoint],
    seed: int = 0,
    duration: float = 1.0,
) -> list[MeasurementRecord]:
    """One record per workload point, carrying throughput and the three component powers."""
    rng = np.random.default_rng(seed)
    topo = machine.topology
    out = []
    for point in points:
        tm = machine.throughput_model(point.impl)
        pm = machine.power_model(point.impl)
        throughput = _planted_throughput(machine, point)
        _, breakdown = power_breakdown(point, throughput, tm, pm, topo)
        p_cpu = breakdown.component("cpu")
        p_mem = breakdown.component("memory")
        p_unc = breakdown.component("uncore")
        if machine.quantum > 0:
            base = machine.static_active.p_stat["memory"]
            p_mem = base + machine.quantum * round((p_mem - base) / machine.quantum)
        throughput = _noisy(throughput, machine.sigma, rng)
        p_cpu = _noisy(p_cpu, machine.sigma, rng)
        p_mem = _noisy(p_mem, machine.sigma, rng)
        p_unc = _noisy(p_unc, machine.sigma, rng)
        out.append(
            MeasurementRecord(
                impl=point.impl,
                n=point.n,
                f=point.f,
                pw=point.pw,
                duration=duration,
                ops_ok=max(throughput, 0.0) * duration,
                sockets_active=active_sockets(2 * point.n, topo),
                pinning="dense",
                loc="off" if is_off_socket(point.n, topo) else "on",
                p_cpu=p_cpu,
                p_mem=p_mem,
                p_unc=p_unc,
                source="synth",
            )
        )
    return out


def synth_opreg_grid(
    machine: PlantedMachine,
    freqs: Sequence[float] | None = None,
    seed: int = 0,
) -> list[MeasurementRecord]:
    """Register-only micro-benchmark powers for every planted op, frequency and pair count.

    Register-only loops have no memory traffic; their uncore draw is the
    planted per-thread linear term.
    """
    rng = np.random.default_rng(seed)
    topo = machine.topology
    sa = machine.static_active
    freqs = microbench_freqs() if freqs is None else [freq_key(f) for f in freqs]
    out = []
    for op, (A, alpha, B) in sorted(machine.op_coeffs.items()):
        for f in freqs:
            for n in range(1, topo.total_cores // 2 + 1):
                thr = 2 * n
                soc = active_sockets(thr, topo)
                dyn = {
                    "cpu": thr * (A * (10.0 * f) ** alpha + B),
                    "memory": 0.0,
                    "uncore": thr * machine.memory.uncore_linear,
                }
                p = {c: sa.p_stat[c] + soc * sa.active(c, f) + dyn[c] for c in dyn}
                out.append(
                    MeasurementRecord(
                        impl=OPREG_PREFIX + op,
                        n=n,
                        f=f,
                        pw=0.0,
                        duration=1.0,
                        ops_ok=0.0,
                        sockets_active=soc,
                        pinning="dense",
                        loc="on" if soc == 1 else "mixed",
                        p_cpu=_noisy(p["cpu"], machine.sigma, rng),
                        p_mem=_noisy(p["memory"], machine.sigma, rng),
                        p_unc=_noisy(p["uncore"], machine.sigma, rng),
                        source="synth",
                    )
                )
    return out


def synth_cas_samples(
    machine: PlantedMachine,
    freqs: Sequence[float] = QUEUE_FREQS_GHZ,
    ops: float = 1e6,
    seed: int = 0,
) -> list[MeasurementRecord]:
    """CAS latency micro-benchmark records, on- and off-socket, per frequency."""
    rng = np.random.default_rng(seed)
    cas = machine.cas
    out = []
    for loc in ("on", "off"):
        for f in freqs:
            t = cas.a / f if loc == "on" else cas.b_prime + cas.a_prime / f
            out.append(
                MeasurementRecord(
                    impl=CAS_LATENCY,
                    n=1,
                    f=f,
                    pw=0.0,
                    duration=_noisy(t, machine.sigma, rng) * ops,
                    ops_ok=ops,
                    sockets_active=1 if loc == "on" else 2,
                    pinning="custom",
                    loc=loc,
                    source="synth",
                )
            )
    return out


def default_plan(
    machine: PlantedMachine,
    freqs: Sequence[float] = QUEUE_FREQS_GHZ,
    reference: str | None = None,
) -> list[WorkloadPoint]:
    """Queue runs needed to calibrate ``machine``'s throughput model.

    Lambda runs use the reference implementation at the highest frequency with
    work 100 times the largest frontier; each implementation's cw runs use
    1.5 times its own frontier at the on/off pair counts, which keeps them
    non-congested while the retry loop stays a sizable share of the cycle
    (noise on cw grows with ``t_PS / t_RL``); congested lines get two work
    values under the smallest frontier.
    """
    topo = machine.topology
    impls = sorted(machine.throughput)
    reference = reference or impls[0]
    freqs = sorted(freq_key(f) for f in freqs)
    f0 = freqs[-1]
    ns = sorted(machine.throughput[reference].lam)

    worst = max(
        frontier_pw(n, f, machine.throughput[i], machine.cas, topo)
        for i in impls for f in freqs for n in machine.throughput[i].lam
    )
    pw_inf = float(math.ceil(100.0 * worst))
    n_on = topo.cores_per_socket // 2
    n_off = n_on + 1

    points = [WorkloadPoint(reference, n, f0, pw_inf) for n in ns]
    for impl in impls:
        tm = machine.throughput[impl]
        edge = max(frontier_pw(n, f0, tm, machine.cas, topo) for n in (n_on, n_off))
        pw_lc = float(math.ceil(CW_MARGIN * edge))
        points.append(WorkloadPoint(impl, n_on, f0, pw_lc))
        points.append(WorkloadPoint(impl, n_off, f0, pw_lc))
    for impl in impls:
        tm = machine.throughput[impl]
        for n in sorted(tm.lam):
            if n < 2:
                continue
            low = min(frontier_pw(n, f, tm, machine.cas, topo) for f in freqs)
            for frac in (0.25, 0.6):
                pw = round(frac * low, 3)
                points.extend(WorkloadPoint(impl, n, f, pw) for f in freqs)
    return points


def synth_dataset(machine: PlantedMachine, seed: int = 0, freqs: Sequence[float] = QUEUE_FREQS_GHZ) -> list[MeasurementRecord]:
    """CAS samples, the opreg grid and the default queue plan, in that order."""
    seeds = np.random.SeedSequence(seed).spawn(3)
    as_int = [int(s.generate_state(1)[0]) for s in seeds]
    return (
        synth_cas_samples(machine, freqs, seed=as_int[0])
        + synth_opreg_grid(machine, seed=as_int[1])
        + synth_measurements(machine, default_plan(machine, freqs), seed=as_int[2])
    )


def movidius_runs(
    model: MovidiusModel,
    benchmarks: Mapping[str, Sequence[str]] = MOVIDIUS_EXTENDED_BENCHMARKS,
    shaves: Sequence[int] = MOVIDIUS_SHAVE_COUNTS,
) -> dict[str, dict[int, float]]:
    """Noiseless power (mW) of every benchmark at every active-SHAVE count."""
    return {b: {k: movidius_power(model, k, units) for k in shaves} for b, units in benchmarks.items()}


__all__ = [
    "PlantedMachine",
    "movidius_runs",
    "default_plan",
    "default_plant",
    "microbench_freqs",
    "synth_cas_samples",
    "synth_dataset",
    "synth_measurements",
    "synth_opreg_grid",
]
