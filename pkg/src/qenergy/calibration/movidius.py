"""Fit of the Myriad1 SHAVE power model from per-benchmark power readings.

Each benchmark is measured at several active-SHAVE counts ``k``.  Its power is
linear in ``k``: the intercepts estimate the static power and the slopes carry
``P_act + sum(P_dyn) + max(O)``.  Subtracting the single-unit slopes from a
combination slope leaves ``max(O) - (m-1) * P_act`` for an ``m``-unit
combination, which is linear in the unknowns once it is known which unit
holds the maximum.  Every such assignment is tried and the feasible one with
the smallest residual is kept.

Two things the data cannot tell apart are reported rather than guessed:

* ``P_act`` is only separable from ``P_dyn`` when combinations of different
  sizes share the unit holding the maximum cost.  Otherwise a prior must be
  supplied through ``p_act``.
* A unit whose cost is never the maximum in any measured combination has no
  identifiable ``O``; it is returned as ``None`` with an upper bound in the report.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..constants import MOVIDIUS_BENCHMARKS
from ..errors import CalibrationGapError, DegenerateInputError
from ..model import MovidiusModel
from .report import FitReport

MAX_ASSIGNMENTS = 200_000


def _line(points: Sequence[tuple[int, float]]) -> tuple[float, float, float]:
    ks = np.array([k for k, _ in points], dtype=float)
    ps = np.array([p for _, p in points], dtype=float)
    if len(set(ks.tolist())) < 2:
        raise DegenerateInputError("a benchmark needs at least two distinct SHAVE counts")
    design = np.column_stack([np.ones_like(ks), ks])
    coef, *_ = np.linalg.lstsq(design, ps, rcond=None)
    resid = float(np.linalg.norm(ps - design @ coef))
    return float(coef[0]), float(coef[1]), resid


def _group(runs) -> dict[str, list[tuple[int, float]]]:
    if isinstance(runs, Mapping):
        return {b: sorted((int(k), float(p)) for k, p in pts.items()) for b, pts in runs.items()}
    grouped: dict[str, list[tuple[int, float]]] = {}
    for bench, k, p in runs:
        grouped.setdefault(bench, []).append((int(k), float(p)))
    return grouped


def _identifiable(design: np.ndarray) -> np.ndarray:
    """Boolean mask of unknowns fixed by the least-squares system."""
    if design.size == 0:
        return np.zeros(design.shape[1], dtype=bool)
    _, s, vt = np.linalg.svd(design)
    tol = max(design.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    null = vt[rank:]
    if null.shape[0] == 0:
        return np.ones(design.shape[1], dtype=bool)
    return np.all(np.abs(null) < 1e-9, axis=0)


def fit_movidius(
    runs: Mapping[str, Mapping[int, float]] | Iterable[tuple[str, int, float]],
    benchmarks: Mapping[str, Sequence[str]] = MOVIDIUS_BENCHMARKS,
    p_act: float | None = None,
    tol: float = 1e-9,
) -> tuple[MovidiusModel, FitReport]:
    """Recover ``P_stat``, ``P_act`` and per-unit ``(P_dyn, O)`` in mW.

    ``runs`` maps a benchmark name to ``{shave_count: power}`` (or is an
    iterable of ``(benchmark, shave_count, power)``).  ``benchmarks`` maps
    each name to the units it keeps busy.
    """
    grouped = _group(runs)
    unknown = [b for b in grouped if b not in benchmarks]
    if unknown:
        raise CalibrationGapError(f"unknown benchmark(s) {unknown}", missing=unknown)

    lines = {b: _line(pts) for b, pts in grouped.items()}
    intercepts = np.array([i for i, _, _ in lines.values()])
    p_stat = float(intercepts.mean())
    line_resid = [r for _, _, r in lines.values()]

    singles = {benchmarks[b][0]: lines[b][1] for b in grouped if len(benchmarks[b]) == 1}
    combos = []
    for b in sorted(grouped):
        units = tuple(dict.fromkeys(benchmarks[b]))
        if len(units) < 2:
            continue
        absent = [u for u in units if u not in singles]
        if absent:
            raise CalibrationGapError(
                f"combination {b} needs single-unit runs of {absent}", missing=absent
            )
        residual = lines[b][1] - math.fsum(singles[u] for u in units)
        combos.append((b, units, residual))
    if not singles:
        raise CalibrationGapError("no single-unit benchmark measured", missing=["singles"])

    solution = _solve_costs(combos, p_act, tol)
    notes = list(solution["notes"])
    if solution["p_act"] is None:
        raise CalibrationGapError(
            "P_act is not identifiable from these benchmarks; pass p_act= as a prior "
            "or add combinations of different sizes sharing their costliest unit",
            missing=["p_act"],
        )
    fitted_p_act = solution["p_act"]
    costs = solution["costs"]

    units: dict[str, tuple[float, float | None]] = {}
    upper = {}
    for u in sorted(singles):
        units[u] = (singles[u] - fitted_p_act, costs.get(u))
        if costs.get(u) is None:
            bound = solution["upper"].get(u)
            if bound is not None:
                upper[u] = bound
            notes.append(
                f"O[{u}] not identified" + (f" (at most {bound!r})" if bound is not None else "")
            )

    params = {"p_stat": p_stat, "p_act": fitted_p_act}
    for u, (pd, o) in units.items():
        params[f"pdyn_{u}"] = pd
        if o is not None:
            params[f"o_{u}"] = o
    for u, bound in upper.items():
        params[f"o_upper_{u}"] = bound
    spread = {"p_stat": float(intercepts.std(ddof=1)) if intercepts.size > 1 else 0.0}
    residual = math.sqrt(sum(r * r for r in line_resid) + solution["residual"] ** 2)
    report = FitReport(
        params=params,
        residual_norm=residual,
        n_measurements=sum(len(p) for p in grouped.values()),
        spread=spread,
        notes=tuple(notes),
    )
    return MovidiusModel(p_stat, fitted_p_act, units), report


def _solve_costs(combos, p_act_prior, tol) -> dict:
    """Solve ``O[argmax] - (m-1) P_act = residual`` over all argmax assignments."""
    notes: list[str] = []
    if not combos:
        return {"p_act": p_act_prior, "costs": {}, "upper": {}, "residual": 0.0, "notes": notes}

    frequency: dict[str, int] = {}
    for _, units, _ in combos:
        for u in units:
            frequency[u] = frequency.get(u, 0) + 1

    choices = [units for _, units, _ in combos]
    count = math.prod(len(c) for c in choices)
    if count > MAX_ASSIGNMENTS:
        raise DegenerateInputError(f"{count} argmax assignments exceed the search limit")

    scale = max(1.0, max(abs(r) for _, _, r in combos))
    candidates = []
    for assignment in itertools.product(*choices):
        cand = _solve_assignment(combos, assignment, p_act_prior, tol * scale)
        if cand is not None:
            candidates.append((assignment, cand))
    if not candidates:
        raise DegenerateInputError("no assignment of costliest units is consistent with the data")

    best_resid = min(c["residual"] for _, c in candidates)
    near = [(a, c) for a, c in candidates if c["residual"] <= best_resid + tol * scale]

    def preference(item):
        assignment, cand = item
        identified = sum(v is not None for v in cand["costs"].values())
        popularity = sum(frequency[u] for u in assignment)
        return (cand["p_act"] is None, -identified, -popularity, assignment)

    near.sort(key=preference)
    assignment, chosen = near[0]
    alternatives = {
        combos[i][0]
        for a, _ in near[1:]
        for i in range(len(combos))
        if a[i] != assignment[i]
    }
    if alternatives:
        notes.append(
            "costliest unit ambiguous in " + ", ".join(sorted(alternatives))
            + "; resolved in favour of units shared by more combinations"
        )
    chosen = dict(chosen)
    chosen["notes"] = notes
    chosen["assignment"] = dict(zip((b for b, _, _ in combos), assignment))
    return chosen


def _solve_assignment(combos, assignment, p_act_prior, tol):
    assigned = sorted(set(assignment))
    index = {u: i + 1 for i, u in enumerate(assigned)}
    rows, rhs = [], []
    for (_, units, resid), top in zip(combos, assignment):
        row = np.zeros(len(assigned) + 1)
        row[index[top]] = 1.0
        m = len(units)
        if p_act_prior is None:
            row[0] = -(m - 1)
            rhs.append(resid)
        else:
            rhs.append(resid + (m - 1) * p_act_prior)
        rows.append(row)
    design, target = np.array(rows), np.array(rhs)
    if p_act_prior is not None:
        design = design[:, 1:]
    x, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.linalg.norm(target - design @ x))
    known = _identifiable(design)

    if p_act_prior is None:
        p_act = float(x[0]) if known[0] else None
        values = x[1:]
        known_o = known[1:]
    else:
        p_act = p_act_prior
        values, known_o = x, known
    costs = {u: (float(values[i]) if known_o[i] else None) for i, u in enumerate(assigned)}

    if p_act is not None and p_act < -tol:
        return None
    for u, v in costs.items():
        if v is not None and v < -tol:
            return None

    # the unit holding the maximum must not be beaten by a known cost
    upper: dict[str, float] = {}
    for (_, units, _), top in zip(combos, assignment):
        top_cost = costs.get(top)
        for u in units:
            if u == top:
                continue
            other = costs.get(u)
            if top_cost is not None and other is not None and other > top_cost + tol:
                return None
            if top_cost is not None and other is None and u not in costs:
                upper[u] = min(upper.get(u, math.inf), top_cost)
    for u in list(costs):
        if costs[u] is None:
            del costs[u]
    return {"p_act": p_act, "costs": costs, "upper": upper, "residual": residual}
