"""Analytical throughput, power and energy-per-operation models.

Everything here is a pure function of immutable inputs: no measurement, no
fitting, no I/O.  Throughput formulas count ``n`` as the number of threads
per role (enqueuer/dequeuer pairs); power formulas count the ``2n`` threads
that actually dissipate.  Frequencies are GHz except for
:class:`CpuPowerCoefficients`, which works in tenths of GHz.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import CalibrationGapError, DomainError, ExtrapolationError

COMPONENTS = ("cpu", "memory", "uncore")
KINDS = ("static", "active", "dynamic")


def freq_key(f: float) -> float:
    """Normalise a frequency so it can be used as a mapping key."""
    return round(float(f), 6)


class Regime(enum.Enum):
    CONGESTED = "congested"
    NON_CONGESTED = "non-congested"


@dataclass(frozen=True)
class MachineTopology:
    sockets: int = 2
    cores_per_socket: int = 8

    def __post_init__(self):
        if self.sockets < 1 or self.cores_per_socket < 1:
            raise DomainError("topology needs at least one socket and one core per socket")

    @property
    def total_cores(self) -> int:
        return self.sockets * self.cores_per_socket


@dataclass(frozen=True)
class CasCostModel:
    """Latency of one CAS-equivalent: ``a/f`` on-socket, ``b' + a'/f`` off-socket.

    ``a`` and ``a_prime`` are in seconds*GHz, ``b_prime`` in seconds.
    """

    a: float
    a_prime: float
    b_prime: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.a_prime > 0 and self.b_prime >= 0):
            raise DomainError(f"invalid CAS cost model {self}")


@dataclass(frozen=True)
class WorkloadPoint:
    impl: str
    n: int
    f: float
    pw: float

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not self.f > 0:
            raise DomainError("frequency must be > 0")
        if self.pw < 0:
            raise DomainError("parallel work must be >= 0")


@dataclass(frozen=True)
class ThroughputModel:
    """Calibrated throughput parameters of one queue implementation.

    ``lam`` maps the pair count n to lambda (work units per second per GHz).
    ``hc_lines`` maps ``(freq_key(f), n)`` to the (intercept, slope) of the
    congested-regime throughput line.
    """

    impl: str
    lam: Mapping[int, float]
    cw_on: float
    cw_off: float
    hc_lines: Mapping[tuple[float, int], tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.cw_on > 0 and self.cw_off > 0):
            raise DomainError("retry-loop work must be > 0")
        for n, value in self.lam.items():
            if not value > 0:
                raise DomainError(f"lambda for n={n} must be > 0")
        for key, (_, slope) in self.hc_lines.items():
            if slope < 0:
                raise DomainError(f"negative congested slope at {key}")

    def lambda_for(self, n: int) -> float:
        try:
            return self.lam[n]
        except KeyError:
            raise CalibrationGapError(
                f"{self.impl}: no lambda calibrated for n={n}", missing=[("lambda", n)]
            ) from None

    def hc_line(self, f: float, n: int) -> tuple[float, float]:
        try:
            return self.hc_lines[(freq_key(f), n)]
        except KeyError:
            raise CalibrationGapError(
                f"{self.impl}: no congested line for f={f} GHz, n={n}",
                missing=[("hc_line", freq_key(f), n)],
            ) from None


@dataclass(frozen=True)
class CpuPowerCoefficients:
    """Per-thread dynamic CPU power ``A * f**alpha + B`` with f in deci-GHz."""

    A: float
    B: float
    alpha: float

    def __post_init__(self):
        if self.A < 0 or self.B < 0 or not 1.0 <= self.alpha <= 3.0:
            raise DomainError(f"invalid CPU power coefficients {self}")


@dataclass(frozen=True)
class StaticActiveTable:
    """Static power per component and per-socket active power per frequency."""

    p_stat: Mapping[str, float]
    p_act: Mapping[str, Mapping[float, float]]

    def __post_init__(self):
        for comp in COMPONENTS:
            if comp not in self.p_stat or comp not in self.p_act:
                raise DomainError(f"static/active table lacks component {comp!r}")
            if self.p_stat[comp] < 0 or any(v < 0 for v in self.p_act[comp].values()):
                raise DomainError("static and active powers must be >= 0")

    def active(self, comp: str, f: float) -> float:
        """Active power of one socket at ``f``; linear between tabulated frequencies."""
        table = self.p_act[comp]
        key = freq_key(f)
        if key in table:
            return table[key]
        freqs = sorted(table)
        if not freqs or key < freqs[0] or key > freqs[-1]:
            raise CalibrationGapError(
                f"no active power for {comp} at {f} GHz", missing=[("p_act", comp, key)]
            )
        hi = next(i for i, g in enumerate(freqs) if g > key)
        f0, f1 = freqs[hi - 1], freqs[hi]
        w = (key - f0) / (f1 - f0)
        return table[f0] * (1 - w) + table[f1] * w


@dataclass(frozen=True)
class MemoryPowerModel:
    """Memory and uncore dynamic-power intensities, all in W per thread."""

    rho: float
    rho_prime: float = 0.0
    rho_uncore: float = 0.0
    uncore_linear: float = 0.0

    def __post_init__(self):
        if min(self.rho, self.rho_prime, self.rho_uncore, self.uncore_linear) < 0:
            raise DomainError(f"memory power intensities must be >= 0: {self}")


@dataclass(frozen=True)
class MemoryAccessRate:
    """Bytes per second reaching main or remote memory."""

    d: float

    def __post_init__(self):
        if self.d < 0:
            raise DomainError("access rate must be >= 0")

    def dynamic_power(self, watts_per_byte_per_s: float) -> float:
        return self.d * watts_per_byte_per_s


@dataclass(frozen=True)
class PowerModel:
    """Everything needed to turn a workload point into a power breakdown."""

    static_active: StaticActiveTable
    cpu: CpuPowerCoefficients
    memory: MemoryPowerModel


@dataclass(frozen=True)
class ApplicationProfile:
    """Power signature of an application whose parallel section is not pure arithmetic.

    ``cpu_dynamic`` maps a frequency to the per-thread dynamic CPU power of the
    whole program; ``rho_prime`` is the memory intensity of its parallel section.
    """

    cpu_dynamic: Mapping[float, float]
    rho_prime: float


@dataclass(frozen=True)
class PowerBreakdown:
    """3x3 grid of powers in W; rows are :data:`KINDS`, columns :data:`COMPONENTS`."""

    cells: tuple[tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]]

    def __post_init__(self):
        if any(v < 0 for row in self.cells for v in row):
            raise DomainError(f"negative power cell in {self.cells}")

    @classmethod
    def from_mapping(cls, values: Mapping[tuple[str, str], float]) -> "PowerBreakdown":
        return cls(tuple(tuple(float(values[(k, c)]) for c in COMPONENTS) for k in KINDS))

    def cell(self, kind: str, comp: str) -> float:
        return self.cells[KINDS.index(kind)][COMPONENTS.index(comp)]

    def component(self, comp: str) -> float:
        j = COMPONENTS.index(comp)
        return sum(row[j] for row in self.cells)

    def kind(self, kind: str) -> float:
        return sum(self.cells[KINDS.index(kind)])

    @property
    def total(self) -> float:
        return math.fsum(v for row in self.cells for v in row)

    def as_dict(self) -> dict[str, float]:
        return {f"{k}_{c}": self.cell(k, c) for k in KINDS for c in COMPONENTS}


@dataclass(frozen=True)
class PredictionReport:
    point: WorkloadPoint
    throughput: float
    regime: Regime
    retry_ratio: float
    breakdown: PowerBreakdown

    @property
    def energy_per_op(self) -> float:
        return self.breakdown.total / self.throughput


@dataclass(frozen=True)
class MovidiusModel:
    """Myriad1 power model; ``units`` maps a unit id to ``(P_dyn, O)`` in mW.

    ``O`` may be ``None`` when it could not be identified from measurements.
    """

    p_stat: float
    p_act: float
    units: Mapping[str, tuple[float, float | None]]


# --- throughput -------------------------------------------------------------


def parallel_section_time(pw: float, lambda_n: float, f: float) -> float:
    if not (lambda_n > 0 and f > 0):
        raise DomainError("lambda and frequency must be > 0")
    if pw < 0:
        raise DomainError("parallel work must be >= 0")
    return pw / (lambda_n * f)


def retry_loop_time(cw: float, f: float, off_socket: bool, cas: CasCostModel) -> float:
    if not (cw > 0 and f > 0):
        raise DomainError("retry-loop work and frequency must be > 0")
    if off_socket:
        return cw * (cas.b_prime + cas.a_prime / f)
    return cw * cas.a / f


def throughput_low_contention(n: int, t_ps: float, t_rl: float) -> float:
    cycle = t_ps + t_rl
    if not cycle > 0:
        raise DomainError("cycle length must be > 0")
    return n / cycle


def throughput_high_contention(intercept: float, slope: float, pw: float) -> float:
    value = intercept + slope * pw
    if not value > 0:
        raise ExtrapolationError(
            f"congested line ({intercept}, {slope}) predicts {value} ops/s at pw={pw}"
        )
    return value


def is_off_socket(n: int, topo: MachineTopology) -> bool:
    return 2 * n > topo.cores_per_socket


def active_sockets(threads: int, topo: MachineTopology) -> int:
    """Sockets touched by ``threads`` densely pinned threads."""
    if threads > topo.total_cores:
        raise DomainError(f"{threads} threads exceed {topo.total_cores} cores")
    return max(1, math.ceil(threads / topo.cores_per_socket))


def low_contention_retry_time(
    n: int, f: float, model: ThroughputModel, cas: CasCostModel, topo: MachineTopology
) -> float:
    off = is_off_socket(n, topo)
    return retry_loop_time(model.cw_off if off else model.cw_on, f, off, cas)


def frontier_pw(
    n: int, f: float, model: ThroughputModel, cas: CasCostModel, topo: MachineTopology
) -> float:
    """Parallel work at which ``t_PS`` equals ``(n-1) * t_RL,LC``."""
    t_rl = low_contention_retry_time(n, f, model, cas, topo)
    return (n - 1) * t_rl * model.lambda_for(n) * f


def contention_regime(
    point: WorkloadPoint, model: ThroughputModel, cas: CasCostModel, topo: MachineTopology
) -> Regime:
    t_ps = parallel_section_time(point.pw, model.lambda_for(point.n), point.f)
    t_rl = low_contention_retry_time(point.n, point.f, model, cas, topo)
    if t_ps >= (point.n - 1) * t_rl:
        return Regime.NON_CONGESTED
    return Regime.CONGESTED


def predict_throughput(
    point: WorkloadPoint, model: ThroughputModel, cas: CasCostModel, topo: MachineTopology
) -> float:
    return _throughput_and_regime(point, model, cas, topo)[0]


def _throughput_and_regime(point, model, cas, topo):
    regime = contention_regime(point, model, cas, topo)
    if regime is Regime.NON_CONGESTED:
        t_ps = parallel_section_time(point.pw, model.lambda_for(point.n), point.f)
        t_rl = low_contention_retry_time(point.n, point.f, model, cas, topo)
        return throughput_low_contention(point.n, t_ps, t_rl), regime
    intercept, slope = model.hc_line(point.f, point.n)
    return throughput_high_contention(intercept, slope, point.pw), regime


def retry_ratio(throughput: float, point: WorkloadPoint, lambda_n: float) -> float:
    """Fraction of time a thread spends in the retry loop, clamped to [0, 1]."""
    if throughput < 0:
        raise DomainError("throughput must be >= 0")
    r = 1.0 - throughput * point.pw / (point.n * lambda_n * point.f)
    return min(1.0, max(0.0, r))


# --- power ------------------------------------------------------------------


def cpu_dynamic_power(coeffs: CpuPowerCoefficients, f_deci: float, n: int) -> float:
    if not 1 <= f_deci <= 100:
        raise DomainError(f"frequency {f_deci} deci-GHz outside [1, 100]")
    return n * (coeffs.A * f_deci**coeffs.alpha + coeffs.B)


def memory_dynamic_power(model: MemoryPowerModel, n: int, r: float, mixed: bool = False) -> float:
    """``rho*n*r`` for the retry-loop share, plus ``rho'*n*(1-r)`` in mixed mode."""
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"retry ratio {r} outside [0, 1]")
    power = model.rho * n * r
    if mixed:
        power += model.rho_prime * n * (1.0 - r)
    return power


def power_breakdown(
    point: WorkloadPoint,
    throughput: float,
    tmodel: ThroughputModel,
    pmodel: PowerModel,
    topo: MachineTopology,
    application: ApplicationProfile | None = None,
) -> tuple[float, PowerBreakdown]:
    """Retry ratio and 3x3 power grid of ``point`` running at ``throughput``."""
    r = retry_ratio(throughput, point, tmodel.lambda_for(point.n))
    threads = 2 * point.n
    soc = active_sockets(threads, topo)
    sa = pmodel.static_active

    if application is None:
        cpu_dyn = cpu_dynamic_power(pmodel.cpu, 10.0 * point.f, threads)
        memory = pmodel.memory
    else:
        try:
            cpu_dyn = threads * application.cpu_dynamic[freq_key(point.f)]
        except KeyError:
            raise CalibrationGapError(
                f"application profile has no CPU power at {point.f} GHz",
                missing=[("cpu_dynamic", freq_key(point.f))],
            ) from None
        memory = MemoryPowerModel(
            pmodel.memory.rho,
            application.rho_prime,
            pmodel.memory.rho_uncore,
            pmodel.memory.uncore_linear,
        )
    mem_dyn = memory_dynamic_power(memory, threads, r, mixed=application is not None)
    unc_dyn = memory.rho_uncore * threads * r + memory.uncore_linear * threads

    values = {}
    for comp in COMPONENTS:
        values[("static", comp)] = sa.p_stat[comp]
        values[("active", comp)] = soc * sa.active(comp, point.f)
    values[("dynamic", "cpu")] = cpu_dyn
    values[("dynamic", "memory")] = mem_dyn
    values[("dynamic", "uncore")] = unc_dyn
    return r, PowerBreakdown.from_mapping(values)


def predict_power_and_energy(
    point: WorkloadPoint,
    tmodel: ThroughputModel,
    pmodel: PowerModel,
    cas: CasCostModel,
    topo: MachineTopology,
    application: ApplicationProfile | None = None,
) -> PredictionReport:
    throughput, regime = _throughput_and_regime(point, tmodel, cas, topo)
    r, breakdown = power_breakdown(point, throughput, tmodel, pmodel, topo, application)
    return PredictionReport(point, throughput, regime, r, breakdown)


# --- Movidius ---------------------------------------------------------------


def movidius_power(model: MovidiusModel, active_shaves: int, units: Iterable[str]) -> float:
    """Myriad1 power in mW with ``active_shaves`` cores all running ``units``.

    A single unit pays no inter-operational cost; a combination pays the
    largest cost among its units.
    """
    units = tuple(dict.fromkeys(units))
    if not 0 <= active_shaves <= 8:
        raise DomainError("active SHAVE count must be in [0, 8]")
    if active_shaves == 0:
        return model.p_stat
    if not units:
        raise DomainError("at least one functional unit is needed when SHAVEs are active")
    try:
        params = [model.units[u] for u in units]
    except KeyError as exc:
        raise CalibrationGapError(f"unknown functional unit {exc.args[0]!r}") from None
    dyn = math.fsum(p for p, _ in params)
    if len(params) > 1:
        costs = [o for _, o in params]
        if any(o is None for o in costs):
            missing = [u for u, (_, o) in zip(units, params) if o is None]
            raise CalibrationGapError(
                f"inter-operational cost unknown for {missing}", missing=missing
            )
        dyn += max(costs)
    return model.p_stat + active_shaves * (model.p_act + dyn)
