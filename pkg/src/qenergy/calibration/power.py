"""Fits for the power side of the model: CPU power law, static/active split, memory intensities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..constants import ALPHA0
from ..errors import (
    CalibrationGapError,
    DegenerateInputError,
    DomainError,
    InconsistentMeasurementError,
)
from ..model import COMPONENTS, CpuPowerCoefficients, MachineTopology, StaticActiveTable, freq_key
from .report import FitReport
from .simplex import SimplexConfig, nelder_mead

OCCUPANCY_GUARD = 1e-6


# --- CPU power law ----------------------------------------------------------


def fit_cpu_coeffs_closed(
    p0: float,
    p1: float,
    n0: int,
    f0: float,
    f1: float,
    alpha0: float = ALPHA0,
) -> CpuPowerCoefficients:
    """Per-thread ``(A, B)`` through two dynamic-power readings with the exponent fixed.

    ``p0`` and ``p1`` are the dynamic powers of ``n0`` threads at ``f0`` and
    ``f1`` deci-GHz.
    """
    if n0 < 1:
        raise DomainError("n0 must be >= 1")
    if freq_key(f0) == freq_key(f1):
        raise DegenerateInputError("closed-form CPU fit needs two distinct frequencies")
    g0, g1 = f0**alpha0, f1**alpha0
    denom = n0 * (g1 - g0)
    A = (p1 - p0) / denom
    B = (p0 * g1 - p1 * g0) / denom
    if A < 0 or B < 0:
        raise InconsistentMeasurementError(f"closed-form CPU fit gave A={A}, B={B}")
    return CpuPowerCoefficients(A, B, alpha0)


def _as_pairs(samples) -> tuple[np.ndarray, np.ndarray]:
    items = samples.items() if isinstance(samples, Mapping) else samples
    pairs = sorted((float(f), float(p)) for f, p in items)
    return np.array([f for f, _ in pairs]), np.array([p for _, p in pairs])


def cpu_residual_norm(coeffs: Sequence[float], freqs: np.ndarray, powers: np.ndarray) -> float:
    A, B, alpha = coeffs
    return float(np.linalg.norm(powers - (A * freqs**alpha + B)))


def fit_cpu_coeffs_full(
    samples: Mapping[float, float] | Iterable[tuple[float, float]],
    cfg: SimplexConfig = SimplexConfig(),
    start: Sequence[float] | None = None,
    max_restarts: int = 25,
) -> tuple[CpuPowerCoefficients, FitReport]:
    """Least-squares ``(A, B, alpha)`` for per-thread dynamic power samples.

    ``samples`` maps a frequency in deci-GHz to the per-thread dynamic power.
    The search starts from the fixed-exponent closed form through the lowest
    and highest frequency (unless ``start`` is given) and is restarted from its
    own best point until a restart no longer improves the residual.
    """
    freqs, powers = _as_pairs(samples)
    if len(set(freqs.tolist())) < 4:
        raise CalibrationGapError(
            f"full CPU fit needs >= 4 distinct frequencies, got {len(set(freqs.tolist()))}"
        )
    if np.any(freqs < 1) or np.any(freqs > 100):
        raise DomainError("frequencies must be deci-GHz in [1, 100]")

    if start is None:
        g0, g1 = freqs[0] ** ALPHA0, freqs[-1] ** ALPHA0
        A0 = (powers[-1] - powers[0]) / (g1 - g0)
        B0 = (powers[0] * g1 - powers[-1] * g0) / (g1 - g0)
        start = (max(A0, 0.0), max(B0, 0.0), ALPHA0)
    start = np.asarray(start, dtype=float)

    def objective(x):
        A, B, alpha = x
        if A < 0 or B < 0 or not 1.0 <= alpha <= 3.0:
            return math.inf
        return cpu_residual_norm(x, freqs, powers)

    start_residual = objective(start)
    result = nelder_mead(objective, start, cfg)
    restarts = 0
    while restarts < max_restarts:
        again = nelder_mead(objective, result.x, cfg)
        restarts += 1
        if not again.fun < result.fun:
            break
        result = again

    A, B, alpha = (float(v) for v in result.x)
    coeffs = CpuPowerCoefficients(A, B, alpha)
    report = FitReport(
        params={"A": A, "B": B, "alpha": alpha},
        residual_norm=result.fun,
        n_measurements=len(freqs),
        converged=result.converged,
        notes=(f"start residual {start_residual!r}", f"restarts {restarts}"),
    )
    return coeffs, report


# --- static / active / dynamic split ---------------------------------------

GridKey = tuple  # (op, f GHz, total threads)


@dataclass(frozen=True)
class Derivation:
    table: StaticActiveTable
    dynamic: Mapping[tuple[str, float], Mapping[str, float]]  # (op, f) -> comp -> W/thread
    report: FitReport


def _grid_sockets(threads: int, topo: MachineTopology) -> int:
    return max(1, math.ceil(threads / topo.cores_per_socket))


def derive_static_active_dynamic(
    grid: Mapping[GridKey, Mapping[str, float]],
    topo: MachineTopology,
) -> Derivation:
    """Split register-only micro-benchmark powers into static, active and dynamic parts.

    ``grid`` maps ``(op, f, threads)`` to per-component powers, for densely
    pinned threads.  Every ``(op, f)`` present must provide the thread counts
    ``2c``, ``2c-2``, ``c+2`` and ``c`` (``c`` cores per socket).
    """
    c = topo.cores_per_socket
    if topo.sockets < 2:
        raise DomainError("the active-power derivation needs two sockets")
    if c < 2:
        raise DomainError("the active-power derivation needs >= 2 cores per socket")
    needed = (2 * c, 2 * c - 2, c + 2, c)
    cells = {(op, freq_key(f), thr): vals for (op, f, thr), vals in grid.items()}
    pairs = sorted({(op, f) for op, f, _ in cells})
    if not pairs:
        raise CalibrationGapError("empty power grid")
    missing = [(op, f, t) for op, f in pairs for t in needed if (op, f, t) not in cells]
    if missing:
        raise CalibrationGapError(f"power grid lacks cells {missing}", missing=missing)
    for key, vals in cells.items():
        absent = [comp for comp in COMPONENTS if comp not in vals]
        if absent:
            raise CalibrationGapError(f"cell {key} lacks {absent}", missing=[key])

    dynamic: dict[tuple[str, float], dict[str, float]] = {}
    act_samples: dict[str, dict[float, list[float]]] = {comp: {} for comp in COMPONENTS}
    for op, f in pairs:
        dyn = {}
        for comp in COMPONENTS:
            p = {t: cells[(op, f, t)][comp] for t in needed}
            pdyn = 0.5 * (p[2 * c] - p[2 * c - 2])
            dyn[comp] = pdyn
            act_samples[comp].setdefault(f, []).append(p[c + 2] - p[c] - 2 * pdyn)
        dynamic[(op, f)] = dyn

    p_act = {comp: {f: float(np.mean(v)) for f, v in act_samples[comp].items()} for comp in COMPONENTS}

    p_stat, spread = {}, {}
    for comp in COMPONENTS:
        residuals = []
        for (op, f, thr), vals in cells.items():
            soc = _grid_sockets(thr, topo)
            residuals.append(vals[comp] - soc * p_act[comp][f] - thr * dynamic[(op, f)][comp])
        arr = np.array(residuals)
        p_stat[comp] = float(arr.mean())
        spread[f"p_stat_{comp}"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        spread[f"p_act_{comp}"] = float(
            max((np.std(v, ddof=1) if len(v) > 1 else 0.0) for v in act_samples[comp].values())
        )

    negative = [
        (comp, kind) for comp in COMPONENTS for kind, v in
        [("static", p_stat[comp])] + [("active", a) for a in p_act[comp].values()] if v < 0
    ]
    if negative:
        raise InconsistentMeasurementError(f"derived negative powers for {negative}")
    table = StaticActiveTable(p_stat, p_act)
    params = {f"p_stat_{comp}": p_stat[comp] for comp in COMPONENTS}
    report = FitReport(params=params, residual_norm=float(
        math.sqrt(sum(spread[f"p_stat_{comp}"] ** 2 for comp in COMPONENTS))
    ), n_measurements=len(cells), spread=spread)
    return Derivation(table, dynamic, report)


# --- memory and uncore ------------------------------------------------------


def fit_rho(
    p_mem: float,
    pstat_m: float,
    threads: int,
    r: float,
    mode: str = "pure",
    rho: float | None = None,
    p_act_m: float = 0.0,
) -> float:
    """Memory intensity from one run.

    ``pure`` mode returns rho, attributing all dynamic memory power to the
    retry loop.  ``application`` mode returns rho' of the parallel section and
    needs the already-known ``rho``.  ``p_act_m`` is the active memory power of
    the sockets in use, subtracted together with the static part.
    """
    if threads < 1:
        raise DomainError("threads must be >= 1")
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"retry ratio {r} outside [0, 1]")
    excess = p_mem - pstat_m - p_act_m
    if mode == "pure":
        if r < OCCUPANCY_GUARD:
            raise CalibrationGapError("retry ratio too small to attribute memory power", missing=["rho"])
        return excess / (threads * r)
    if mode == "application":
        if rho is None:
            raise DomainError("application mode needs the queue rho")
        if 1.0 - r < OCCUPANCY_GUARD:
            raise CalibrationGapError("parallel share too small to attribute memory power", missing=["rho_prime"])
        return (excess - rho * threads * r) / (threads * (1.0 - r))
    raise DomainError(f"unknown rho mode {mode!r}")


def fit_rho_shared(samples: Sequence[tuple[float, int, float]]) -> tuple[float, FitReport]:
    """One rho for many runs; ``samples`` holds (dynamic memory W, threads, r).

    Least squares through the origin, which weights runs by their retry
    occupancy so that runs with tiny ``r`` do not dominate.
    """
    x = np.array([thr * r for _, thr, r in samples], dtype=float)
    y = np.array([p for p, _, _ in samples], dtype=float)
    if x.size == 0 or float(np.dot(x, x)) < OCCUPANCY_GUARD**2:
        raise CalibrationGapError("no run spends time in the retry loop", missing=["rho"])
    rho = float(np.dot(x, y) / np.dot(x, x))
    keep = x > OCCUPANCY_GUARD
    per_run = y[keep] / x[keep]
    spread = float(per_run.std(ddof=1)) if per_run.size > 1 else 0.0
    report = FitReport(
        params={"rho": rho},
        residual_norm=float(np.linalg.norm(y - rho * x)),
        n_measurements=int(x.size),
        spread={"rho": spread},
    )
    return rho, report


def fit_uncore(samples: Sequence[tuple[float, int, float]]) -> tuple[float, float, FitReport]:
    """``(rho_uncore, uncore_linear)`` from (dynamic uncore W, threads, r) samples.

    The model is ``rho_u * threads * r + linear * threads``; at least two
    distinct retry ratios are needed.
    """
    if len({round(r, 12) for _, _, r in samples}) < 2:
        raise CalibrationGapError("uncore fit needs runs with two distinct retry ratios", missing=["rho_uncore"])
    design = np.array([[thr * r, thr] for _, thr, r in samples], dtype=float)
    y = np.array([p for p, _, _ in samples], dtype=float)
    (rho_u, linear), *_ = np.linalg.lstsq(design, y, rcond=None)
    rho_u, linear = float(rho_u), float(linear)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    if -tol < rho_u < 0:
        rho_u = 0.0
    if -tol < linear < 0:
        linear = 0.0
    if rho_u < 0 or linear < 0:
        raise InconsistentMeasurementError(f"uncore fit gave rho_u={rho_u}, linear={linear}")
    report = FitReport(
        params={"rho_uncore": rho_u, "uncore_linear": linear},
        residual_norm=float(np.linalg.norm(y - design @ np.array([rho_u, linear]))),
        n_measurements=len(samples),
    )
    return rho_u, linear, report
