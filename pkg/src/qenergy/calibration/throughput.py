"""Fits for the throughput side of the model: lambda, cw, congested lines, CAS cost.

Fitting functions accept any objects exposing ``n``, ``f``, ``pw`` and
``throughput`` (for example :class:`qenergy.records.MeasurementRecord` or
:class:`ThroughputSample`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import (
    CalibrationGapError,
    DegenerateInputError,
    DomainError,
    InconsistentMeasurementError,
)
from ..model import CasCostModel, MachineTopology, freq_key, is_off_socket

LambdaTable = dict  # pair count n -> lambda


@dataclass(frozen=True)
class ThroughputSample:
    n: int
    f: float
    pw: float
    throughput: float


def fit_lambda(
    records: Iterable,
    f0: float | None = None,
    retry_times: Mapping[int, float] | None = None,
    min_pw: float = 0.0,
) -> LambdaTable:
    """Lambda per pair count from runs with a very large parallel section.

    Without ``retry_times`` this is the usual closed form
    ``lambda = (T/n) * pw / f0``, which treats the retry loop as free.  Given
    the retry-loop time per ``n`` the cycle equation is inverted exactly:
    ``lambda = T*pw / (f0 * (n - T*t_RL))``.
    """
    seen: dict[int, tuple[float, float, float]] = {}
    for rec in records:
        if f0 is not None and freq_key(rec.f) != freq_key(f0):
            continue
        if rec.pw < min_pw:
            raise DomainError(f"pw={rec.pw} below the large-work threshold {min_pw}")
        if not rec.pw > 0:
            raise DomainError("lambda needs a positive parallel work")
        key = (rec.throughput, rec.pw, rec.f)
        if rec.n in seen and seen[rec.n] != key:
            raise CalibrationGapError(
                f"ambiguous lambda input: several different runs for n={rec.n}",
                missing=[("lambda", rec.n)],
            )
        seen[rec.n] = key

    table: LambdaTable = {}
    for n, (t, pw, f) in sorted(seen.items()):
        if not t > 0:
            raise InconsistentMeasurementError(f"zero throughput at n={n}")
        if retry_times is None:
            table[n] = (t / n) * pw / f
            continue
        if n not in retry_times:
            raise CalibrationGapError(f"no retry time for n={n}", missing=[("t_rl", n)])
        slack = n - t * retry_times[n]
        if not slack > 0:
            raise InconsistentMeasurementError(
                f"n={n}: measured throughput exceeds what the retry loop alone allows"
            )
        table[n] = t * pw / (f * slack)
    if not table:
        raise CalibrationGapError("no runs available to fit lambda", missing=[("lambda",)])
    return table


def require_lambda(table: Mapping[int, float], ns: Iterable[int]) -> None:
    missing = [n for n in ns if n not in table]
    if missing:
        raise CalibrationGapError(
            f"lambda missing for n={missing}", missing=[("lambda", n) for n in missing]
        )


def fit_cw_pair(
    rec_on,
    rec_off,
    lam: Mapping[int, float],
    cas: CasCostModel,
    topo: MachineTopology | None = None,
) -> tuple[float, float]:
    """Retry-loop work on and off socket from two low-contention runs.

    Both runs must share the same frequency and parallel work.  Each run uses
    its own pair count.
    """
    if freq_key(rec_on.f) != freq_key(rec_off.f):
        raise DomainError("cw runs must share one frequency")
    if rec_on.pw != rec_off.pw:
        raise DomainError("cw runs must share one parallel-work value")
    if topo is not None:
        if is_off_socket(rec_on.n, topo):
            raise DomainError(f"n={rec_on.n} does not fit on one socket")
        if not is_off_socket(rec_off.n, topo):
            raise DomainError(f"n={rec_off.n} fits on one socket")
    require_lambda(lam, (rec_on.n, rec_off.n))
    if not (rec_on.throughput > 0 and rec_off.throughput > 0):
        raise InconsistentMeasurementError("cw runs need positive throughput")

    f, pw = rec_on.f, rec_on.pw
    cw_on = rec_on.n * f / (cas.a * rec_on.throughput) - pw / (cas.a * lam[rec_on.n])
    cw_off = (rec_off.n / rec_off.throughput - pw / (lam[rec_off.n] * f)) / (
        cas.b_prime + cas.a_prime / f
    )
    if not (cw_on > 0 and cw_off > 0):
        raise InconsistentMeasurementError(
            f"negative retry-loop work (cw_on={cw_on}, cw_off={cw_off})"
        )
    return cw_on, cw_off


def fit_high_contention_line(*points: tuple[float, float]) -> tuple[float, float]:
    """Congested throughput line through ``(pw, T)`` points.

    Two points give the exact line; more points give the least-squares line.
    """
    if len(points) < 2:
        raise CalibrationGapError("a congested line needs at least two points")
    pws = np.array([p[0] for p in points], dtype=float)
    ts = np.array([p[1] for p in points], dtype=float)
    if len(set(pws.tolist())) < 2:
        raise DegenerateInputError("congested line points need distinct pw")
    if len(points) == 2:
        slope = (ts[1] - ts[0]) / (pws[1] - pws[0])
        intercept = ts[0] - slope * pws[0]
        return float(intercept), float(slope)
    design = np.column_stack([np.ones_like(pws), pws])
    (intercept, slope), *_ = np.linalg.lstsq(design, ts, rcond=None)
    return float(intercept), float(slope)


def _check_samples(samples: Sequence[tuple[float, float]], label: str) -> None:
    if len(samples) < 2:
        raise CalibrationGapError(
            f"{label} CAS cost needs >= 2 samples, got {len(samples)}",
            missing=[("cas", label)],
        )
    freqs = [freq_key(f) for f, _ in samples]
    if len(set(freqs)) < 2:
        raise DegenerateInputError(f"{label} CAS samples need distinct frequencies")
    if any(f <= 0 or t <= 0 for f, t in samples):
        raise DomainError("CAS samples need positive frequency and latency")


def fit_cas_cost(
    on_samples: Sequence[tuple[float, float]],
    off_samples: Sequence[tuple[float, float]],
) -> CasCostModel:
    """``a`` minimises the squared error of ``t - a/f``; ``(a', b')`` is OLS of t on 1/f."""
    _check_samples(on_samples, "on-socket")
    _check_samples(off_samples, "off-socket")

    inv = np.array([1.0 / f for f, _ in on_samples])
    t = np.array([t for _, t in on_samples])
    a = float(np.dot(inv, t) / np.dot(inv, inv))

    inv = np.array([1.0 / f for f, _ in off_samples])
    t = np.array([t for _, t in off_samples])
    design = np.column_stack([inv, np.ones_like(inv)])
    (a_prime, b_prime), *_ = np.linalg.lstsq(design, t, rcond=None)
    b_prime = float(b_prime)
    if b_prime < 0:
        if b_prime > -1e-12 * float(np.max(t)):
            b_prime = 0.0
        else:
            raise InconsistentMeasurementError(f"negative off-socket CAS offset b'={b_prime}")
    return CasCostModel(a, float(a_prime), b_prime)


def measurement_budget(n_levels: int, n_impls: int, n_freqs: int) -> int:
    """Number of one-second runs needed to calibrate the throughput model."""
    for name, value in (("N", n_levels), ("A", n_impls), ("F", n_freqs)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise DomainError(f"{name} must be an integer >= 1, got {value!r}")
    return n_levels + 2 * n_impls + 2 * n_impls * n_freqs * n_levels


def lambda_relative_bias(t_ps: float, t_rl: float) -> float:
    """Relative error of the closed-form lambda, ``t_RL / (t_PS + t_RL)``, for diagnostics."""
    total = t_ps + t_rl
    if not total > 0:
        raise DomainError("cycle must be > 0")
    return t_rl / total if math.isfinite(total) else 0.0
