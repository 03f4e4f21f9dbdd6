"""Acceptance gate: the nine primary checks, one test per criterion.

Each test pushes a single "CRITERION n PASS/FAIL - ..." line through the
criterion_report fixture (conftest reprints them after the run) and then
asserts its tolerances.  The three crack-sheet trajectories are integrated
once in a module fixture and shared by criteria 5, 7 and 8.

Wall-clock budgets are asserted for the short criteria; the two half-hour
crack criteria print their measured runtime instead, since their budget is
phrased as a workstation target.
"""

import hashlib
import math
import time

import numpy as np
import pytest

from perifrac.diagnostics import convergence_rate, damage_field, l2_difference
from perifrac.errors import PropertyViolation
from perifrac.integrator import run
from perifrac.operators import ForceAssembler
from perifrac.output import write_csv, write_vtk
from perifrac.scenarios import (
    build_crack_scenario,
    manufactured_scenario,
    relaxation_scenario,
)
from perifrac.verification import (
    lipschitz_l2_suite,
    oracle_equivalence_suite,
    projection_error_suite,
    relaxation_stability,
    temporal_convergence_study,
)

CAPTURE_TIMES = (5e-6, 1e-5)


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


@pytest.fixture(scope="module")
def crack_runs():
    """The eps = 8 mm tension sheet at h = 4, 2, 1 mm (criteria 5, 7, 8).

    The two coarse levels stop at 10 us (the last comparison time); the fine
    level continues to 20 us for the fracture-energy and morphology checks.
    """
    out = {}
    for h, duration in ((4e-3, 1e-5), (2e-3, 1e-5), (1e-3, 2e-5)):
        scenario = build_crack_scenario(
            "eps8-h2", h=h, duration=duration, diagnostic_stride=10
        )
        t0 = time.perf_counter()
        result = run(scenario, threads=1, capture_times=CAPTURE_TIMES)
        out[h] = (scenario, result, time.perf_counter() - t0)
    return out


def test_criterion_1_oracle_equivalence(criterion_report):
    t0 = time.perf_counter()
    try:
        report = oracle_equivalence_suite(trials=20, seed=0, threads=1)
    except PropertyViolation as exc:
        criterion_report(f"CRITERION 1 FAIL - {exc}")
        raise
    wall = time.perf_counter() - t0
    ok = report.max_rel_err <= 1e-12 and wall < 10.0
    criterion_report(
        f"CRITERION 1 {_verdict(ok)} - production force equals the O(N^2) oracle: "
        f"max rel err {report.max_rel_err:.3e} <= 1e-12 over {report.trials} random "
        f"fields, both dilatational kinds ({wall:.1f} s < 10 s)"
    )
    assert report.max_rel_err <= 1e-12
    assert wall < 10.0


def test_criterion_2_lipschitz_bound(criterion_report):
    t0 = time.perf_counter()
    try:
        report = lipschitz_l2_suite(trials=50, seed=0, threads=1)
    except PropertyViolation as exc:
        criterion_report(f"CRITERION 2 FAIL - {exc}")
        raise
    wall = time.perf_counter() - t0
    ok = report.max_ratio <= 1.0 and wall < 30.0
    criterion_report(
        f"CRITERION 2 {_verdict(ok)} - force Lipschitz bound on 24x24: "
        f"max ||L(u)-L(v)|| eps^2 / (L3 ||u-v||) = {report.max_ratio:.6f} <= 1 "
        f"over {report.trials} pairs, L3 = {report.l3:.4e} ({wall:.1f} s < 30 s)"
    )
    assert report.max_ratio <= 1.0
    assert wall < 30.0


def test_criterion_3_projection_bound(criterion_report):
    t0 = time.perf_counter()
    report = projection_error_suite()
    wall = time.perf_counter() - t0
    worst_ratio = max(row.ratio for row in report.rows)
    slope_half = report.exponent(0.5)
    slope_one = report.exponent(1.0)
    ok = (
        worst_ratio <= 1.0
        and abs(slope_half - 0.5) <= 0.1
        and abs(slope_one - 1.0) <= 0.1
        and wall < 10.0
    )
    criterion_report(
        f"CRITERION 3 {_verdict(ok)} - projection bound sqrt(2)^g sqrt(|D|) |u| h^g: "
        f"worst measured/bound = {worst_ratio:.3f} <= 1; decay exponents "
        f"{slope_half:.3f} (g=0.5) and {slope_one:.3f} (g=1) within +-0.1 "
        f"({wall:.1f} s < 10 s)"
    )
    assert worst_ratio <= 1.0
    assert abs(slope_half - 0.5) <= 0.1
    assert abs(slope_one - 1.0) <= 0.1
    assert wall < 10.0


def test_criterion_4_temporal_order(criterion_report):
    t0 = time.perf_counter()
    study = temporal_convergence_study(
        lambda dt: manufactured_scenario(dt=dt),
        dts=(4e-9, 2e-9, 1e-9),
        dt_ref=1.25e-10,
        threads=1,
    )
    wall = time.perf_counter() - t0
    ok = not study.degenerate and 0.9 <= study.fitted_order <= 1.1 and wall < 120.0
    criterion_report(
        f"CRITERION 4 {_verdict(ok)} - manufactured-solution temporal order "
        f"{study.fitted_order:.4f} in [0.9, 1.1] (dt = 4/2/1 ns vs 0.125 ns "
        f"reference; {wall:.0f} s < 120 s)"
    )
    assert not study.degenerate
    assert 0.9 <= study.fitted_order <= 1.1
    assert wall < 120.0


def test_criterion_5_desk_spatial_rate(criterion_report, crack_runs):
    expected_nodes = {4e-3: 900.0, 2e-3: 3500.0, 1e-3: 13700.0}
    counts = {h: crack_runs[h][0].grid.n_nodes for h in expected_nodes}
    counts_ok = all(
        abs(counts[h] - n) <= 0.05 * n for h, n in expected_nodes.items()
    )
    rates = {}
    for t in CAPTURE_TIMES:
        diffs = []
        for ha, hb in ((4e-3, 2e-3), (2e-3, 1e-3)):
            sa, ra, _ = crack_runs[ha]
            sb, rb, _ = crack_runs[hb]
            diffs.append(
                l2_difference(ra.captures[t].u, sa.grid, rb.captures[t].u, sb.grid)
                + l2_difference(ra.captures[t].v, sa.grid, rb.captures[t].v, sb.grid)
            )
        rates[t] = convergence_rate(diffs[0], diffs[1])
    wall = sum(w for _, _, w in crack_runs.values())
    rates_ok = all(rate >= 0.9 for rate in rates.values())
    ok = counts_ok and rates_ok
    criterion_report(
        f"CRITERION 5 {_verdict(ok)} - desk-scale spatial rates: "
        f"{rates[5e-6]:.4f} at 5 us, {rates[1e-5]:.4f} at 10 us (gate >= 0.9 at both); "
        f"nodes {counts[4e-3]}/{counts[2e-3]}/{counts[1e-3]} vs 0.9k/3.5k/13.7k "
        f"within 5% ({wall / 60:.1f} min, workstation target < 30 min)"
    )
    assert counts_ok, f"node counts off by more than 5%: {counts}"
    assert rates_ok, f"spatial rate below 0.9: { {t: round(r, 4) for t, r in rates.items()} }"


def test_criterion_6_energy_stability(criterion_report):
    t0 = time.perf_counter()
    report = relaxation_stability(relaxation_scenario(), threads=1)
    with pytest.warns(Warning, match="stability"):
        rough = relaxation_stability(
            relaxation_scenario(dt=4e-8, steps=2000), threads=1
        )
    wall = time.perf_counter() - t0
    ok = (
        report.stable
        and not report.blew_up
        and math.isfinite(report.fitted_c)
        and not rough.stable
        and wall < 300.0
    )
    criterion_report(
        f"CRITERION 6 {_verdict(ok)} - b=0 relaxation over 10^4 steps: "
        f"max E(t)/E(0) = {report.max_ratio:.6f} <= 1.01, fitted envelope "
        f"C = {report.fitted_c:.3e} (augmented-energy C2 = {report.fitted_c2:.3e}); "
        f"10x dt run flagged unstable (ratio {rough.max_ratio:.3f}) "
        f"({wall:.0f} s < 300 s)"
    )
    assert report.stable and not report.blew_up
    assert math.isfinite(report.fitted_c)
    assert not rough.stable
    assert wall < 300.0


def test_criterion_7_fracture_energy_consistency(criterion_report, crack_runs):
    scenario, result, wall = crack_runs[1e-3]
    h = scenario.grid.h
    gc = scenario.model.gc
    records = result.records
    lengths = np.array([r.crack_length for r in records])
    onset = lengths > scenario.initial_crack_length + 4 * h
    assert onset.any(), "crack never grew beyond 4h within 20 us"
    pe = np.array([r.pe for r in records])[onset]
    ge = np.array([r.ge for r in records])[onset]
    deviation = float(np.max(np.abs(pe - ge) / ge))
    ok = deviation <= 0.30
    # Context for the two readings of the severed-notch accounting: the new
    # extension alone, and the increment of both energies over the window.
    extension = lengths[onset] - scenario.initial_crack_length
    ext_ratio = float(np.median(pe / (gc * extension)))
    if ge[-1] > ge[0]:
        incr_ratio = float((pe[-1] - pe[0]) / (ge[-1] - ge[0]))
    else:
        incr_ratio = float("nan")
    criterion_report(
        f"CRITERION 7 {_verdict(ok)} - PE vs GE once growth exceeds 4h: "
        f"max |PE-GE|/GE = {deviation:.3f} (gate <= 0.30); PE {pe[0]:.2f}->{pe[-1]:.2f} J, "
        f"GE {ge[0]:.2f}->{ge[-1]:.2f} J; PE/(Gc x extension) = {ext_ratio:.2f}, "
        f"dPE/dGE = {incr_ratio:.2f} ({wall / 60:.1f} min, target < 30 min)"
    )
    assert deviation <= 0.30, (
        f"PE and GE disagree by {deviation:.0%}: the initial notch's severed bonds "
        f"carry no PE while GE counts the full crack length"
    )


def test_criterion_8_damage_morphology(criterion_report, crack_runs):
    scenario, result, _ = crack_runs[1e-3]
    lengths = np.array([r.crack_length for r in result.records])
    monotone = bool(np.all(np.diff(lengths) >= -1e-15))
    grew = lengths[-1] > lengths[0]

    asm = ForceAssembler(
        scenario.grid, scenario.table, scenario.model, scenario.omega, threads=1
    )
    try:
        z = damage_field(result.state.u, asm)
    finally:
        asm.close()
    coords = scenario.grid.coords
    tip_x, tip_y = scenario.crack_tip
    hot = z >= 1.0
    band = np.abs(coords[:, 0] - tip_x) <= 1.5 * scenario.grid.h
    upward = hot & band & (coords[:, 1] > tip_y)
    top = float(coords[upward, 1].max()) if upward.any() else tip_y
    spurious = hot & (np.abs(coords[:, 0] - tip_x) > scenario.model.horizon)
    ok = monotone and grew and bool(upward.any()) and not spurious.any()
    criterion_report(
        f"CRITERION 8 {_verdict(ok)} - damage morphology: Z>=1 zone extends "
        f"upward from the tip (y = {tip_y:.3f}) to y = {top:.4f}; crack_length "
        f"nondecreasing {lengths[0]:.4f} -> {lengths[-1]:.4f} m over 20 us; "
        f"no damage farther than eps from the slit line"
    )
    assert monotone, "crack_length series decreased"
    assert grew and upward.any(), "no upward Z>=1 extension from the tip"
    assert not spurious.any(), "damage appeared away from the slit"


def _assembly_digest(threads: int) -> str:
    """Force + dilatation bytes on fixed random fields (cracked sheet)."""
    scenario = build_crack_scenario("eps8-h4", duration=4e-9)
    rng = np.random.default_rng(11)
    asm = ForceAssembler(
        scenario.grid, scenario.table, scenario.model, scenario.omega, threads=threads
    )
    hasher = hashlib.sha256()
    try:
        for _ in range(5):
            u = 1e-5 * rng.standard_normal((scenario.grid.n_nodes, 2))
            force, theta, _ = asm.assemble_total_force(u)
            hasher.update(force.tobytes())
            hasher.update(np.asarray(theta).tobytes())
    finally:
        asm.close()
    return hasher.hexdigest()


def _trajectory_digest(threads: int, out_dir) -> str:
    """500-step coarse crack run: state, records CSV, and one VTK snapshot."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = build_crack_scenario("eps8-h2", duration=2e-6, diagnostic_stride=100)
    result = run(scenario, threads=threads, capture_times=(1e-6,))
    hasher = hashlib.sha256()
    hasher.update(result.state.u.tobytes())
    hasher.update(result.state.v.tobytes())
    hasher.update(result.captures[1e-6].u.tobytes())
    csv_path = write_csv(out_dir / "series.csv", result.records)
    hasher.update(csv_path.read_bytes())
    asm = ForceAssembler(
        scenario.grid, scenario.table, scenario.model, scenario.omega, threads=threads
    )
    try:
        z = damage_field(result.state.u, asm)
        _, theta, _ = asm.assemble_total_force(result.state.u)
    finally:
        asm.close()
    vtk_path = write_vtk(out_dir / "final.vtk", scenario.grid, result.state, z, theta)
    hasher.update(vtk_path.read_bytes())
    return hasher.hexdigest()


def test_criterion_9_thread_determinism(criterion_report, tmp_path):
    digests = {}
    for threads in (1, 4, 8):
        digests[threads] = (
            _assembly_digest(threads),
            _trajectory_digest(threads, tmp_path / f"threads-{threads}"),
            f"{oracle_equivalence_suite(trials=5, seed=3, threads=threads).max_rel_err:.17e}",
        )
    ok = digests[1] == digests[4] == digests[8]
    criterion_report(
        f"CRITERION 9 {_verdict(ok)} - byte-identical across 1/4/8 assembly threads: "
        f"force+theta fields, 500-step crack trajectory with CSV and VTK streams, "
        f"and the oracle suite's error report"
    )
    assert digests[4] == digests[1], "4-thread outputs differ from single-thread"
    assert digests[8] == digests[1], "8-thread outputs differ from single-thread"
