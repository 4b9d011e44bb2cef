"""End-to-end calibration: measurement records in, :class:`ModelBundle` out.

Record roles are recognised from their content:

* ``cas-latency`` records give the CAS cost model;
* ``opreg:<op>`` records form the static/active/dynamic derivation grid;
* for queue implementations, runs at the largest parallel work of the
  reference implementation give lambda, runs at the largest remaining work
  give cw, and runs below the fitted frontier give the congested lines.

Missing pieces are collected as gaps instead of aborting the whole fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..bundle import ModelBundle, records_digest
from ..constants import ALPHA0
from ..errors import CalibrationGapError, QEnergyError
from ..model import (
    COMPONENTS,
    CasCostModel,
    CpuPowerCoefficients,
    MachineTopology,
    MemoryPowerModel,
    StaticActiveTable,
    ThroughputModel,
    active_sockets,
    freq_key,
    frontier_pw,
    is_off_socket,
    low_contention_retry_time,
    retry_ratio,
)
from ..records import CAS_LATENCY, OPREG_PREFIX, MeasurementRecord
from .power import (
    derive_static_active_dynamic,
    fit_cpu_coeffs_closed,
    fit_cpu_coeffs_full,
    fit_rho_shared,
    fit_uncore,
)
from .report import FitReport
from .simplex import SimplexConfig
from .throughput import fit_cas_cost, fit_cw_pair, fit_high_contention_line, fit_lambda, measurement_budget


@dataclass(frozen=True)
class CalibrationConfig:
    reference_impl: str | None = None
    f0: float | None = None
    alpha0: float = ALPHA0
    refine_lambda: bool = True
    refine_max_iter: int = 100
    large_pw_factor: float = 100.0
    simplex: SimplexConfig = SimplexConfig()


def _queue_records(records):
    return [r for r in records if r.impl != CAS_LATENCY and not r.impl.startswith(OPREG_PREFIX)]


def _cas_model(records, reports, gaps):
    cas = [r for r in records if r.impl == CAS_LATENCY]
    on = [(r.f, r.duration / r.ops_ok) for r in cas if r.loc == "on" and r.ops_ok > 0]
    off = [(r.f, r.duration / r.ops_ok) for r in cas if r.loc == "off" and r.ops_ok > 0]
    try:
        model = fit_cas_cost(on, off)
    except QEnergyError as exc:
        gaps.append(f"cas: {exc}")
        return None
    reports["cas"] = FitReport({"a": model.a, "a_prime": model.a_prime, "b_prime": model.b_prime}, 0.0, len(cas))
    return model


def _derivation(records, topo, cfg, reports, gaps):
    grid = {}
    for r in records:
        if r.impl.startswith(OPREG_PREFIX) and r.has_power:
            op = r.impl[len(OPREG_PREFIX):]
            grid[(op, r.f, r.threads)] = {"cpu": r.p_cpu, "memory": r.p_mem, "uncore": r.p_unc}
    if not grid:
        gaps.append("static/active: no opreg micro-benchmark records")
        return None, {}
    try:
        der = derive_static_active_dynamic(grid, topo)
    except QEnergyError as exc:
        gaps.append(f"static/active: {exc}")
        return None, {}
    reports["static_active"] = der.report

    op_cpu = {}
    for op in sorted({op for op, _ in der.dynamic}):
        samples = {10.0 * f: v["cpu"] for (o, f), v in der.dynamic.items() if o == op}
        try:
            coeffs, rep = fit_cpu_coeffs_full(samples, cfg.simplex)
        except QEnergyError as exc:
            gaps.append(f"op {op}: {exc}")
            continue
        op_cpu[op] = coeffs
        reports[f"op_cpu:{op}"] = rep
    return der.table, op_cpu


def _pick_reference(queue, cfg):
    if cfg.reference_impl is not None:
        return cfg.reference_impl
    best = None
    for impl in sorted({r.impl for r in queue}):
        recs = [r for r in queue if r.impl == impl]
        top = max(r.pw for r in recs)
        count = len({r.n for r in recs if r.pw == top})
        if best is None or count > best[0]:
            best = (count, impl)
    return best[1]


def _lc_pair(recs, topo, below):
    """(on, off) runs at the largest shared pw strictly below ``below``."""
    for pw in sorted({r.pw for r in recs if r.pw < below}, reverse=True):
        at = [r for r in recs if r.pw == pw]
        on = [r for r in at if not is_off_socket(r.n, topo)]
        off = [r for r in at if is_off_socket(r.n, topo)]
        if on and off:
            return max(on, key=lambda r: r.n), min(off, key=lambda r: r.n)
    return None


def calibrate(
    records: Sequence[MeasurementRecord],
    topo: MachineTopology = MachineTopology(),
    config: CalibrationConfig = CalibrationConfig(),
) -> ModelBundle:
    records = list(records)
    reports: dict[str, FitReport] = {}
    gaps: list[str] = []
    notes: list[str] = []

    cas = _cas_model(records, reports, gaps)
    static_active, op_cpu = _derivation(records, topo, config, reports, gaps)

    queue = _queue_records(records)
    impls = sorted({r.impl for r in queue})
    freqs = sorted({freq_key(r.f) for r in queue})
    throughput: dict[str, ThroughputModel] = {}
    lam: dict[int, float] = {}
    ref = None
    f0 = None

    if not queue:
        gaps.append("throughput: no queue benchmark records")
    elif cas is None:
        gaps.append("throughput: needs the CAS cost model")
    else:
        ref = _pick_reference(queue, config)
        f0 = freq_key(config.f0) if config.f0 is not None else freqs[-1]
        at_f0 = [r for r in queue if r.impl == ref and freq_key(r.f) == f0]
        if not at_f0:
            gaps.append(f"lambda: no runs of {ref} at {f0} GHz")
        else:
            pw_inf = max(r.pw for r in at_f0)
            inf_runs = [r for r in at_f0 if r.pw == pw_inf]
            try:
                lam = fit_lambda(inf_runs, f0)
            except QEnergyError as exc:
                gaps.append(f"lambda: {exc}")
            pair = _lc_pair(at_f0, topo, pw_inf)
            if lam and config.refine_lambda and pair is not None:
                lam, iters = _refine_lambda(inf_runs, pair, lam, cas, topo, f0, config)
                notes.append(f"lambda refined in {iters} iteration(s)")
            elif lam:
                notes.append("lambda from the closed form (no cw runs to refine it)")

    if lam:
        for impl in impls:
            model, impl_gaps = _fit_impl(impl, queue, lam, cas, topo, f0, freqs, pw_inf)
            gaps.extend(impl_gaps)
            if model is not None:
                throughput[impl] = model
        _check_large_pw(ref, queue, throughput, cas, topo, f0, config, notes)

    cpu, memory = _power_fits(queue, throughput, static_active, topo, reports, gaps, lam)

    n_levels = len({r.n for r in queue}) or 1
    budget = measurement_budget(n_levels, max(1, len(impls)), max(1, len(freqs)))
    provenance = {
        "input_digest": records_digest(records),
        "n_records": len(records),
        "measurement_budget": budget,
        "reference_impl": ref,
        "f0": f0,
        "notes": notes,
    }
    return ModelBundle(
        topology=topo,
        cas=cas,
        throughput=throughput,
        static_active=static_active,
        cpu=cpu,
        memory=memory,
        op_cpu=op_cpu,
        reports=reports,
        gaps=tuple(gaps),
        provenance=provenance,
    )


def _retry_times(lam, cw_on, cw_off, cas, topo, f0):
    tmp = ThroughputModel("ref", lam, cw_on, cw_off)
    return {n: low_contention_retry_time(n, f0, tmp, cas, topo) for n in lam}


def _refine_lambda(inf_runs, pair, lam, cas, topo, f0, cfg):
    """Alternate lambda and cw fits until lambda stops moving."""
    on, off = pair
    iters = 0
    for iters in range(1, cfg.refine_max_iter + 1):
        if on.n not in lam or off.n not in lam:
            break
        cw_on, cw_off = fit_cw_pair(on, off, lam, cas, topo)
        new = fit_lambda(inf_runs, f0, retry_times=_retry_times(lam, cw_on, cw_off, cas, topo, f0))
        change = max(abs(new[n] - lam[n]) / lam[n] for n in lam)
        lam = new
        if change <= 1e-15:
            break
    return lam, iters


def _fit_impl(impl, queue, lam, cas, topo, f0, freqs, pw_inf):
    gaps = []
    recs = [r for r in queue if r.impl == impl]
    at_f0 = [r for r in recs if freq_key(r.f) == f0]
    if not at_f0:
        return None, [f"{impl}: no runs at {f0} GHz for cw"]
    # the lambda runs are a poor cw source (retry time is a tiny share of the cycle)
    pair = _lc_pair(at_f0, topo, pw_inf) or _lc_pair(at_f0, topo, math.inf)
    if pair is None:
        return None, [f"{impl}: needs on- and off-socket runs at one pw for cw"]
    try:
        cw_on, cw_off = fit_cw_pair(*pair, lam, cas, topo)
    except QEnergyError as exc:
        return None, [f"{impl}: cw: {exc}"]
    base = ThroughputModel(impl, lam, cw_on, cw_off)

    hc = {}
    for f in freqs:
        for n in sorted({r.n for r in recs if r.n >= 2}):
            if n not in lam:
                gaps.append(f"{impl}: no lambda for n={n}")
                continue
            limit = frontier_pw(n, f, base, cas, topo)
            pts = {}
            for r in recs:
                if freq_key(r.f) == f and r.n == n and r.pw < limit:
                    pts.setdefault(r.pw, []).append(r.throughput)
            if len(pts) < 2:
                gaps.append(f"{impl}: congested line f={f} n={n} needs 2 pw values below {limit:.6g}")
                continue
            points = [(pw, float(np.mean(ts))) for pw, ts in sorted(pts.items())]
            intercept, slope = fit_high_contention_line(*points)
            if slope < 0:
                gaps.append(f"{impl}: congested line f={f} n={n} has negative slope")
                continue
            hc[(f, n)] = (intercept, slope)
    return ThroughputModel(impl, dict(lam), cw_on, cw_off, hc), gaps


def _check_large_pw(ref, queue, throughput, cas, topo, f0, cfg, notes):
    model = throughput.get(ref)
    if model is None:
        return
    at = [r for r in queue if r.impl == ref and freq_key(r.f) == f0]
    pw_inf = max(r.pw for r in at)
    worst = max(frontier_pw(n, f0, model, cas, topo) for n in model.lam)
    if pw_inf < cfg.large_pw_factor * worst:
        notes.append(
            f"lambda runs use pw={pw_inf:g}, below {cfg.large_pw_factor:g}x the largest frontier {worst:.6g}"
        )


def _dynamic(record, comp, table, topo):
    soc = active_sockets(record.threads, topo)
    value = {"cpu": record.p_cpu, "memory": record.p_mem, "uncore": record.p_unc}[comp]
    return value - table.p_stat[comp] - soc * table.active(comp, record.f)


def _power_fits(queue, throughput, table: StaticActiveTable | None, topo, reports, gaps, lam):
    cpu: dict[str, CpuPowerCoefficients] = {}
    powered = [r for r in queue if r.has_power and r.n in lam and r.throughput > 0]
    if table is None:
        if powered:
            gaps.append("power: static/active table missing, power models skipped")
        return cpu, None
    if not powered:
        gaps.append("power: no queue runs with power readings")
        return cpu, None

    usable = []
    for r in powered:
        try:
            table.active("cpu", r.f)
        except CalibrationGapError:
            gaps.append(f"power: no active power at {r.f} GHz")
            continue
        usable.append(r)

    for impl in sorted(throughput):
        recs = [r for r in usable if r.impl == impl]
        groups = {}
        for r in recs:
            groups.setdefault((r.n, r.pw), {})[freq_key(r.f)] = r
        ranked = sorted(
            (g for g in groups.items() if len(g[1]) >= 2),
            key=lambda g: (g[0][0] >= 4, g[0][0], -g[0][1]),
            reverse=True,
        )
        if not ranked:
            gaps.append(f"{impl}: CPU coefficients need one (n, pw) at two frequencies")
            continue
        (n, pw), by_f = ranked[0]
        lo, hi = by_f[min(by_f)], by_f[max(by_f)]
        try:
            coeffs = fit_cpu_coeffs_closed(
                _dynamic(lo, "cpu", table, topo),
                _dynamic(hi, "cpu", table, topo),
                lo.threads,
                10.0 * lo.f,
                10.0 * hi.f,
            )
        except QEnergyError as exc:
            gaps.append(f"{impl}: CPU coefficients: {exc}")
            continue
        cpu[impl] = coeffs
        reports[f"cpu:{impl}"] = FitReport(
            {"A": coeffs.A, "B": coeffs.B, "alpha": coeffs.alpha}, 0.0, 2,
            notes=(f"n={n} pw={pw} f={min(by_f)},{max(by_f)}",),
        )

    mem_samples, unc_samples = [], []
    for r in usable:
        if r.impl not in throughput:
            continue
        rr = retry_ratio(r.throughput, r.point, lam[r.n])
        mem_samples.append((_dynamic(r, "memory", table, topo), r.threads, rr))
        unc_samples.append((_dynamic(r, "uncore", table, topo), r.threads, rr))
    if not mem_samples:
        gaps.append("memory: no usable runs")
        return cpu, None
    try:
        rho, rep = fit_rho_shared(mem_samples)
        reports["memory:rho"] = rep
    except QEnergyError as exc:
        gaps.append(f"memory: {exc}")
        return cpu, None
    try:
        rho_u, linear, rep = fit_uncore(unc_samples)
        reports["memory:uncore"] = rep
    except QEnergyError as exc:
        gaps.append(f"uncore: {exc}")
        rho_u, linear = 0.0, 0.0
    return cpu, MemoryPowerModel(max(rho, 0.0), 0.0, rho_u, linear)


def coverage_summary(bundle: ModelBundle) -> dict:
    return {
        "impls": bundle.impls,
        "lambda_n": sorted({n for tm in bundle.throughput.values() for n in tm.lam}),
        "hc_lines": sum(len(tm.hc_lines) for tm in bundle.throughput.values()),
        "components": list(COMPONENTS),
        "gaps": list(bundle.gaps),
    }


__all__ = ["CalibrationConfig", "calibrate", "coverage_summary", "CasCostModel"]
