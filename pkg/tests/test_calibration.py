from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qenergy.calibration import (
    ThroughputSample,
    derive_static_active_dynamic,
    fit_cas_cost,
    fit_cpu_coeffs_closed,
    fit_cpu_coeffs_full,
    fit_cw_pair,
    fit_high_contention_line,
    fit_lambda,
    fit_movidius,
    fit_rho,
    fit_rho_shared,
    fit_uncore,
    measurement_budget,
    nelder_mead,
)
from qenergy.calibration.report import FitReport
from qenergy.calibration.simplex import SimplexConfig
from qenergy.calibration.throughput import lambda_relative_bias
from qenergy.constants import (
    MOVIDIUS_BENCHMARKS,
    MOVIDIUS_EXTENDED_BENCHMARKS,
    MYRIAD1_P_ACT,
    MYRIAD1_P_STAT,
    MYRIAD1_UNITS,
)
from qenergy.errors import (
    CalibrationGapError,
    DegenerateInputError,
    DomainError,
    InconsistentMeasurementError,
)
from qenergy.model import CasCostModel, MachineTopology, MovidiusModel
from qenergy.synth import movidius_runs

CAS = CasCostModel(100e-9, 80e-9, 20e-9)
TOPO = MachineTopology(2, 8)


def _cycle_throughput(n, pw, lam, f, t_rl):
    return n / (pw / (lam * f) + t_rl)


# --- lambda ----------------------------------------------------------------


def test_lambda_closed_form_hand_value():
    # 2 pairs, 1e5 ops/s, pw 1000 at 2 GHz: (1e5/2) * 1000 / 2 = 2.5e7
    table = fit_lambda([ThroughputSample(2, 2.0, 1000.0, 1e5)])
    assert table == {2: pytest.approx(2.5e7, rel=1e-15)}


@given(n=st.integers(1, 8), lam=st.floats(1e6, 1e9), pw=st.floats(1e3, 1e7), t_rl=st.floats(1e-8, 1e-5))
def test_lambda_exact_form_inverts_the_cycle(n, lam, pw, t_rl):
    f = 3.4
    t = _cycle_throughput(n, pw, lam, f, t_rl)
    exact = fit_lambda([ThroughputSample(n, f, pw, t)], retry_times={n: t_rl})
    assert exact[n] == pytest.approx(lam, rel=1e-9)
    closed = fit_lambda([ThroughputSample(n, f, pw, t)])[n]
    bias = lambda_relative_bias(pw / (lam * f), t_rl)
    assert (lam - closed) / lam == pytest.approx(bias, rel=1e-6, abs=1e-12)


def test_lambda_filters_frequency_and_rejects_ambiguity():
    samples = [ThroughputSample(1, 2.0, 10.0, 1.0), ThroughputSample(1, 3.0, 10.0, 5.0)]
    assert list(fit_lambda(samples, f0=2.0)) == [1]
    with pytest.raises(CalibrationGapError):
        fit_lambda(samples)


def test_lambda_empty_is_a_gap():
    with pytest.raises(CalibrationGapError):
        fit_lambda([])


def test_lambda_exact_form_detects_impossible_throughput():
    with pytest.raises(InconsistentMeasurementError):
        fit_lambda([ThroughputSample(1, 1.0, 1.0, 1e9)], retry_times={1: 1e-6})


# --- cw, congested lines, CAS cost -------------------------------------------


def test_cw_pair_recovers_planted_work():
    lam = {4: 2.4e7, 5: 2.3e7}
    f, pw = 3.4, 800.0
    t_on = _cycle_throughput(4, pw, lam[4], f, 20.0 * CAS.a / f)
    t_off = _cycle_throughput(5, pw, lam[5], f, 30.0 * (CAS.b_prime + CAS.a_prime / f))
    cw_on, cw_off = fit_cw_pair(
        ThroughputSample(4, f, pw, t_on), ThroughputSample(5, f, pw, t_off), lam, CAS, TOPO
    )
    assert cw_on == pytest.approx(20.0, rel=1e-9)
    assert cw_off == pytest.approx(30.0, rel=1e-9)


def test_cw_pair_checks_sides_of_the_socket():
    lam = {5: 1e7, 6: 1e7}
    with pytest.raises(DomainError):
        fit_cw_pair(ThroughputSample(5, 1.0, 1.0, 1.0), ThroughputSample(6, 1.0, 1.0, 1.0), lam, CAS, TOPO)


def test_cw_pair_negative_work_is_inconsistent():
    lam = {1: 1e7, 5: 1e7}
    fast = ThroughputSample(1, 1.0, 100.0, 1e9)
    with pytest.raises(InconsistentMeasurementError):
        fit_cw_pair(fast, ThroughputSample(5, 1.0, 100.0, 1e9), lam, CAS)


def test_high_contention_line_two_and_three_points():
    assert fit_high_contention_line((0.0, 5.0), (10.0, 25.0)) == pytest.approx((5.0, 2.0))
    icpt, slope = fit_high_contention_line((0.0, 5.0), (10.0, 25.0), (20.0, 45.0))
    assert (icpt, slope) == pytest.approx((5.0, 2.0))
    with pytest.raises(DegenerateInputError):
        fit_high_contention_line((1.0, 2.0), (1.0, 3.0))
    with pytest.raises(CalibrationGapError):
        fit_high_contention_line((1.0, 2.0))


def test_cas_cost_recovers_planted_latencies():
    freqs = [1.2, 2.3, 3.4]
    on = [(f, CAS.a / f) for f in freqs]
    off = [(f, CAS.b_prime + CAS.a_prime / f) for f in freqs]
    fitted = fit_cas_cost(on, off)
    assert fitted.a == pytest.approx(CAS.a, rel=1e-12)
    assert fitted.a_prime == pytest.approx(CAS.a_prime, rel=1e-9)
    assert fitted.b_prime == pytest.approx(CAS.b_prime, rel=1e-9)


def test_cas_cost_needs_two_frequencies():
    with pytest.raises(DegenerateInputError):
        fit_cas_cost([(1.0, 1e-7), (1.0, 1e-7)], [(1.0, 1e-7), (2.0, 1e-7)])


@pytest.mark.parametrize("n, a, f, budget", [(8, 6, 3, 308), (8, 2, 3, 108), (1, 1, 1, 5)])
def test_measurement_budget(n, a, f, budget):
    # N lambda runs, 2 cw runs per implementation, 2 congested runs per (impl, f, n)
    assert measurement_budget(n, a, f) == n + 2 * a + 2 * a * f * n == budget


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 2.5)])
def test_measurement_budget_domain(bad):
    with pytest.raises(DomainError):
        measurement_budget(*bad)


# --- CPU power law -----------------------------------------------------------


def test_cpu_closed_form_exact_at_fixed_exponent():
    A, B, n0 = 0.0012, 0.06, 4
    p = lambda f: n0 * (A * f**1.7 + B)
    c = fit_cpu_coeffs_closed(p(12), p(34), n0, 12, 34)
    assert (c.A, c.B, c.alpha) == (pytest.approx(A, rel=1e-12), pytest.approx(B, rel=1e-12), 1.7)


def test_cpu_closed_form_errors():
    with pytest.raises(DegenerateInputError):
        fit_cpu_coeffs_closed(1.0, 2.0, 1, 20, 20)
    with pytest.raises(InconsistentMeasurementError):
        fit_cpu_coeffs_closed(2.0, 1.0, 1, 12, 34)


@given(
    A=st.floats(1e-4, 1e-2),
    B=st.floats(0.0, 0.2),
    alpha=st.floats(1.2, 2.6),
)
def test_cpu_full_fit_recovers_planted_coefficients(A, B, alpha):
    samples = {f: A * f**alpha + B for f in range(12, 35, 2)}
    coeffs, report = fit_cpu_coeffs_full(samples)
    assert coeffs.alpha == pytest.approx(alpha, rel=1e-3)
    assert coeffs.A == pytest.approx(A, rel=1e-2)
    assert coeffs.B == pytest.approx(B, rel=2e-2, abs=1e-4)
    assert report.residual_norm <= 1e-6 * max(samples.values())


def test_cpu_full_fit_flat_data():
    coeffs, _ = fit_cpu_coeffs_full({f: 0.3 for f in range(12, 35, 2)})
    assert coeffs.A == pytest.approx(0.0, abs=1e-9)
    assert coeffs.B == pytest.approx(0.3, rel=1e-9)


def test_cpu_full_fit_needs_four_frequencies():
    with pytest.raises(CalibrationGapError):
        fit_cpu_coeffs_full({12: 1.0, 20: 2.0, 34: 3.0})


# --- simplex ---------------------------------------------------------------


def test_nelder_mead_rosenbrock():
    rosen = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    res = nelder_mead(rosen, [-1.2, 1.0])
    assert res.converged
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-6)


def test_nelder_mead_nan_objective():
    with pytest.raises(DomainError):
        nelder_mead(lambda x: math.nan, [0.0])


def test_simplex_config_validation():
    with pytest.raises(DomainError):
        SimplexConfig(xtol=0)


# --- static / active / dynamic derivation -------------------------------------


def planted_grid(p_stat=10.0, p_act=5.0, pdyn=0.5, topo=TOPO, ops=("cas",), freqs=(1.2, 3.4), noise=None):
    c = topo.cores_per_socket
    grid = {}
    for op in ops:
        for f in freqs:
            for thr in (2 * c, 2 * c - 2, c + 2, c):
                soc = math.ceil(thr / c)
                value = p_stat + soc * p_act + thr * pdyn
                grid[(op, f, thr)] = {
                    comp: value * (1 + (noise() if noise else 0.0)) for comp in ("cpu", "memory", "uncore")
                }
    return grid


def test_derivation_recovers_planted_split_exactly():
    der = derive_static_active_dynamic(planted_grid(), TOPO)
    for comp in ("cpu", "memory", "uncore"):
        assert der.table.p_stat[comp] == pytest.approx(10.0, abs=1e-12)
        assert der.table.p_act[comp][1.2] == pytest.approx(5.0, abs=1e-12)
        assert der.dynamic[("cas", 3.4)][comp] == pytest.approx(0.5, abs=1e-12)


def test_derivation_reports_missing_cells():
    grid = planted_grid()
    del grid[("cas", 1.2, 10)]
    with pytest.raises(CalibrationGapError) as info:
        derive_static_active_dynamic(grid, TOPO)
    assert ("cas", 1.2, 10) in info.value.missing


def test_derivation_rejects_negative_static():
    with pytest.raises(InconsistentMeasurementError):
        derive_static_active_dynamic(planted_grid(p_stat=-3.0), TOPO)


def test_derivation_needs_two_sockets():
    with pytest.raises(DomainError):
        derive_static_active_dynamic(planted_grid(), MachineTopology(1, 8))


# --- memory and uncore -------------------------------------------------------


def test_fit_rho_pure_and_application():
    assert fit_rho(5.0 + 0.8 * 8 * 0.5, 5.0, 8, 0.5) == pytest.approx(0.8)
    p = 5.0 + 0.8 * 8 * 0.25 + 0.1 * 8 * 0.75
    assert fit_rho(p, 5.0, 8, 0.25, mode="application", rho=0.8) == pytest.approx(0.1)
    with pytest.raises(CalibrationGapError):
        fit_rho(6.0, 5.0, 8, 0.0)
    with pytest.raises(DomainError):
        fit_rho(6.0, 5.0, 8, 0.5, mode="application")


def test_fit_rho_shared_weights_by_occupancy():
    samples = [(0.8 * thr * r, thr, r) for thr, r in [(2, 0.9), (8, 0.3), (16, 1e-3)]]
    rho, report = fit_rho_shared(samples)
    assert rho == pytest.approx(0.8, rel=1e-12)
    assert report.residual_norm == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(CalibrationGapError):
        fit_rho_shared([(0.0, 4, 0.0)])


def test_fit_uncore_two_parameters():
    samples = [(0.3 * thr * r + 0.05 * thr, thr, r) for thr, r in [(2, 1.0), (8, 0.4), (16, 0.1)]]
    rho_u, linear, _ = fit_uncore(samples)
    assert (rho_u, linear) == (pytest.approx(0.3), pytest.approx(0.05))
    with pytest.raises(CalibrationGapError):
        fit_uncore([(1.0, 2, 0.5), (2.0, 4, 0.5)])


# --- Movidius ----------------------------------------------------------------


def _table():
    return MovidiusModel(MYRIAD1_P_STAT, MYRIAD1_P_ACT, MYRIAD1_UNITS)


def test_movidius_fit_recovers_identifiable_parameters():
    model, report = fit_movidius(movidius_runs(_table()), benchmarks=MOVIDIUS_EXTENDED_BENCHMARKS)
    assert model.p_stat == pytest.approx(MYRIAD1_P_STAT, abs=1e-9)
    assert model.p_act == pytest.approx(MYRIAD1_P_ACT, abs=1e-9)
    for unit, (p_dyn, o) in MYRIAD1_UNITS.items():
        assert model.units[unit][0] == pytest.approx(p_dyn, abs=1e-9)
        if unit != "IauXor":
            assert model.units[unit][1] == pytest.approx(o, abs=1e-9)
    # the smallest cost is never the maximum of a combination
    assert model.units["IauXor"][1] is None
    assert any("IauXor" in note for note in report.notes)


def test_movidius_fit_with_measured_benchmarks_only():
    runs = movidius_runs(_table(), MOVIDIUS_BENCHMARKS)
    model, _ = fit_movidius(runs)
    assert model.units["SauMul"][1] is None
    assert model.units["VauXor"][1] == pytest.approx(13.12, abs=1e-9)


def test_movidius_fit_needs_two_shave_counts():
    with pytest.raises(DegenerateInputError):
        fit_movidius({"SauXor": {8: 498.23}}, benchmarks={"SauXor": ("SauXor",)})


def test_fit_report_round_trip():
    rep = FitReport({"a": 1.0}, 0.5, 3, {"a": 0.1}, True, ("x",))
    assert FitReport.from_dict(rep.as_dict()) == rep
