"""Calibrated model bundle and its versioned JSON encoding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .calibration.report import FitReport
from .errors import CalibrationGapError, SchemaError
from .model import (
    ApplicationProfile,
    CasCostModel,
    CpuPowerCoefficients,
    MachineTopology,
    MemoryPowerModel,
    PowerModel,
    PredictionReport,
    StaticActiveTable,
    ThroughputModel,
    WorkloadPoint,
    predict_power_and_energy,
)
from .records import MeasurementRecord, records_to_csv

SCHEMA = "qenergy.bundle/1"


def records_digest(records: Iterable[MeasurementRecord]) -> str:
    """sha256 of the canonical CSV encoding of ``records``."""
    return hashlib.sha256(records_to_csv(records).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ModelBundle:
    topology: MachineTopology
    cas: CasCostModel | None = None
    throughput: Mapping[str, ThroughputModel] = field(default_factory=dict)
    static_active: StaticActiveTable | None = None
    cpu: Mapping[str, CpuPowerCoefficients] = field(default_factory=dict)
    memory: MemoryPowerModel | None = None
    op_cpu: Mapping[str, CpuPowerCoefficients] = field(default_factory=dict)
    reports: Mapping[str, FitReport] = field(default_factory=dict)
    gaps: tuple[str, ...] = ()
    provenance: Mapping[str, Any] = field(default_factory=dict)

    @property
    def impls(self) -> list[str]:
        return sorted(self.throughput)

    def throughput_model(self, impl: str) -> ThroughputModel:
        try:
            return self.throughput[impl]
        except KeyError:
            raise CalibrationGapError(
                f"no throughput model for {impl!r}", missing=[("throughput", impl)]
            ) from None

    def power_model(self, impl: str) -> PowerModel:
        missing = []
        if self.static_active is None:
            missing.append(("static_active",))
        if impl not in self.cpu:
            missing.append(("cpu", impl))
        if self.memory is None:
            missing.append(("memory",))
        if missing:
            raise CalibrationGapError(f"power model for {impl!r} incomplete: {missing}", missing=missing)
        return PowerModel(self.static_active, self.cpu[impl], self.memory)

    def predict(self, point: WorkloadPoint, application: ApplicationProfile | None = None) -> PredictionReport:
        if self.cas is None:
            raise CalibrationGapError("no CAS cost model", missing=[("cas",)])
        return predict_power_and_energy(
            point,
            self.throughput_model(point.impl),
            self.power_model(point.impl),
            self.cas,
            self.topology,
            application,
        )

    # --- JSON -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "topology": {"sockets": self.topology.sockets, "cores_per_socket": self.topology.cores_per_socket},
            "cas": None if self.cas is None else {
                "a": self.cas.a, "a_prime": self.cas.a_prime, "b_prime": self.cas.b_prime,
            },
            "throughput": {impl: _tm_to_dict(tm) for impl, tm in self.throughput.items()},
            "static_active": None if self.static_active is None else _sa_to_dict(self.static_active),
            "cpu": {impl: _cpu_to_dict(c) for impl, c in self.cpu.items()},
            "memory": None if self.memory is None else {
                "rho": self.memory.rho,
                "rho_prime": self.memory.rho_prime,
                "rho_uncore": self.memory.rho_uncore,
                "uncore_linear": self.memory.uncore_linear,
            },
            "op_cpu": {op: _cpu_to_dict(c) for op, c in self.op_cpu.items()},
            "reports": {name: r.as_dict() for name, r in self.reports.items()},
            "gaps": list(self.gaps),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelBundle":
        if not isinstance(d, Mapping) or d.get("schema") != SCHEMA:
            raise SchemaError(f"not a {SCHEMA} document (schema={d.get('schema') if isinstance(d, Mapping) else None!r})")
        try:
            cas = d.get("cas")
            mem = d.get("memory")
            return cls(
                topology=MachineTopology(**d["topology"]),
                cas=None if cas is None else CasCostModel(**cas),
                throughput={impl: _tm_from_dict(impl, v) for impl, v in d.get("throughput", {}).items()},
                static_active=None if d.get("static_active") is None else _sa_from_dict(d["static_active"]),
                cpu={impl: CpuPowerCoefficients(**v) for impl, v in d.get("cpu", {}).items()},
                memory=None if mem is None else MemoryPowerModel(**mem),
                op_cpu={op: CpuPowerCoefficients(**v) for op, v in d.get("op_cpu", {}).items()},
                reports={k: FitReport.from_dict(v) for k, v in d.get("reports", {}).items()},
                gaps=tuple(d.get("gaps", ())),
                provenance=dict(d.get("provenance", {})),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed bundle: {exc!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"bundle is not valid JSON: {exc.msg}", line=exc.lineno) from None
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def verify_bundle(bundle: ModelBundle, records: Iterable[MeasurementRecord]) -> bool:
    """True when ``records`` are exactly the inputs the bundle was calibrated from."""
    return bundle.provenance.get("input_digest") == records_digest(records)


def _cpu_to_dict(c: CpuPowerCoefficients) -> dict:
    return {"A": c.A, "B": c.B, "alpha": c.alpha}


def _tm_to_dict(tm: ThroughputModel) -> dict:
    return {
        "lam": [[n, v] for n, v in sorted(tm.lam.items())],
        "cw_on": tm.cw_on,
        "cw_off": tm.cw_off,
        "hc_lines": [[f, n, a, b] for (f, n), (a, b) in sorted(tm.hc_lines.items())],
    }


def _tm_from_dict(impl: str, d: Mapping) -> ThroughputModel:
    return ThroughputModel(
        impl=impl,
        lam={int(n): float(v) for n, v in d["lam"]},
        cw_on=float(d["cw_on"]),
        cw_off=float(d["cw_off"]),
        hc_lines={(float(f), int(n)): (float(a), float(b)) for f, n, a, b in d["hc_lines"]},
    )


def _sa_to_dict(sa: StaticActiveTable) -> dict:
    return {
        "p_stat": dict(sa.p_stat),
        "p_act": {comp: [[f, v] for f, v in sorted(t.items())] for comp, t in sa.p_act.items()},
    }


def _sa_from_dict(d: Mapping) -> StaticActiveTable:
    return StaticActiveTable(
        {k: float(v) for k, v in d["p_stat"].items()},
        {comp: {float(f): float(v) for f, v in rows} for comp, rows in d["p_act"].items()},
    )
