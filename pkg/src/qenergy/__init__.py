"""Throughput, power and energy-per-operation model of lock-free queues."""

from __future__ import annotations

__version__ = "0.1.0"

from .bundle import ModelBundle
from .calibration.pipeline import CalibrationConfig, calibrate
from .errors import (
    CalibrationGapError,
    DegenerateInputError,
    DomainError,
    ExtrapolationError,
    HarnessError,
    InconsistentMeasurementError,
    QEnergyError,
    SchemaError,
    UnknownVariantError,
)
from .model import (
    CasCostModel,
    MachineTopology,
    MovidiusModel,
    PredictionReport,
    Regime,
    ThroughputModel,
    WorkloadPoint,
    contention_regime,
    frontier_pw,
    movidius_power,
    predict_power_and_energy,
    predict_throughput,
)
from .records import MeasurementRecord, parse_measurements, write_measurements

__all__ = [
    "CalibrationConfig",
    "CalibrationGapError",
    "CasCostModel",
    "DegenerateInputError",
    "DomainError",
    "ExtrapolationError",
    "HarnessError",
    "InconsistentMeasurementError",
    "MachineTopology",
    "MeasurementRecord",
    "ModelBundle",
    "MovidiusModel",
    "PredictionReport",
    "QEnergyError",
    "Regime",
    "SchemaError",
    "ThroughputModel",
    "UnknownVariantError",
    "WorkloadPoint",
    "calibrate",
    "contention_regime",
    "frontier_pw",
    "movidius_power",
    "parse_measurements",
    "predict_power_and_energy",
    "predict_throughput",
    "write_measurements",
]
