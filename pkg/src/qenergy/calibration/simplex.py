"""Derivative-free minimisation with the Nelder-Mead simplex method."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


@dataclass(frozen=True)
class SimplexConfig:
    """Settings for :func:`nelder_mead`.

    ``step`` gives the initial edge length per dimension.  When it is ``None``
    each non-zero coordinate is perturbed by 5% and zero coordinates by
    0.00025, which is the customary default.
    """

    step: Sequence[float] | None = None
    xtol: float = 1e-12
    ftol: float = 1e-14
    max_iter: int = 20000

    def __post_init__(self):
        if not (self.xtol > 0 and self.ftol > 0):
            raise DomainError("simplex tolerances must be > 0")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    evaluations: int


def _initial_simplex(x0: np.ndarray, step) -> np.ndarray:
    dim = x0.size
    simplex = np.tile(x0, (dim + 1, 1))
    for i in range(dim):
        if step is not None:
            delta = float(step[i])
        elif x0[i] != 0:
            delta = 0.05 * x0[i]
        else:
            delta = 0.00025
        simplex[i + 1, i] += delta
    return simplex


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    cfg: SimplexConfig = SimplexConfig(),
) -> SimplexResult:
    """Minimise ``objective`` from ``start``.

    Stops when both the objective spread across the simplex and the largest
    vertex distance to the best vertex (max-norm) fall below the tolerances.
    A NaN objective value aborts with :class:`DomainError`.
    """
    x0 = np.asarray(start, dtype=float).ravel()
    evaluations = 0

    def f(x):
        nonlocal evaluations
        evaluations += 1
        value = float(objective(x))
        if math.isnan(value):
            raise DomainError(f"objective returned NaN at {x.tolist()}")
        return value

    if not math.isfinite(f(x0)):
        raise DomainError(f"objective is not finite at the start point {x0.tolist()}")

    simplex = _initial_simplex(x0, cfg.step)
    values = np.array([f(x) for x in simplex])
    converged = False
    iterations = 0

    while iterations < cfg.max_iter:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        spread = values[-1] - values[0]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        if spread <= cfg.ftol and diameter <= cfg.xtol:
            converged = True
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + EXPAND * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xcc = centroid - CONTRACT * (centroid - worst)
            fcc = f(xcc)
            if fcc < values[-1]:
                simplex[-1], values[-1] = xcc, fcc
                continue
        best = simplex[0]
        for i in range(1, simplex.shape[0]):
            simplex[i] = best + SHRINK * (simplex[i] - best)
            values[i] = f(simplex[i])

    best = int(np.argmin(values))
    return SimplexResult(simplex[best].copy(), float(values[best]), converged, iterations, evaluations)
