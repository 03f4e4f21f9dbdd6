"""Command-line entry points.

Verbs: run, study-spatial, study-temporal, verify, presets.  Times are
seconds in configs and the API; the console output echoes microseconds.
Exit codes: 0 ok, 1 usage, 2 bad config, 3 numerical failure, 4 property
violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from .config import ScenarioConfig, build_scenario, parse_config
from .errors import ConfigError, NumericalError, PropertyViolation
from .integrator import run
from .operators import ForceAssembler
from .output import snapshot_path, write_csv, write_vtk
from .scenarios import CRACK_PRESETS, build_crack_scenario
from .verification import (
    lipschitz_l2_suite,
    oracle_equivalence_suite,
    projection_error_suite,
    spatial_convergence_study,
    temporal_convergence_study,
)

__all__ = ["main"]

_US = 1e6  # seconds -> microseconds for console echoes


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {path} is not writable: {err}") from err
    return path


def _write_rows(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    except OSError as err:
        raise ConfigError(f"cannot write {path}: {err}") from err
    return path


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    out = _prepare_out(Path(args.out) if args.out else config.out_dir)
    scenario = build_scenario(config)
    stride = (
        args.snapshot_stride
        if args.snapshot_stride is not None
        else config.snapshot_stride
    )

    on_state = None
    closers = []
    if stride and "vtk" in config.formats:
        asm = ForceAssembler(
            scenario.grid, scenario.table, scenario.model, scenario.omega, threads=1
        )
        closers.append(asm.close)

        def on_state(state, damage, step):
            theta = asm.hydrostatic_strain(state.u)
            write_vtk(
                snapshot_path(out, scenario.name, step), scenario.grid, state,
                damage, theta,
            )

    try:
        result = run(
            scenario,
            threads=args.threads,
            snapshot_stride=stride,
            on_state=on_state,
        )
    finally:
        for close in closers:
            close()

    csv_path = write_csv(out / f"{scenario.name}.csv", result.records)
    last = result.records[-1]
    print(
        f"{scenario.name}: {result.steps} steps to t = {last.t * _US:.3f} us "
        f"({result.wall_time:.1f} s wall), {len(result.records)} records -> {csv_path}"
    )
    print(
        f"  energy {last.total:.6e} J, crack length {last.crack_length:.4e} m, "
        f"max damage {last.max_z:.3f}"
    )
    return 0


def _study_times(config: ScenarioConfig):
    times = config.study_times or (5e-6, 1e-5)
    if max(times) > config.duration:
        raise ConfigError(
            f"study times up to {max(times)} s exceed the scenario duration "
            f"{config.duration} s"
        )
    return times


def _cmd_study_spatial(args) -> int:
    config = parse_config(args.config)
    if config.preset not in CRACK_PRESETS:
        raise ConfigError("study-spatial needs a crack preset config (eps*-h*)")
    out = _prepare_out(Path(args.out) if args.out else config.out_dir)
    times = _study_times(config)

    def builder(h):
        # The study compares captured states, so integrating past the last
        # sample time would be wasted work.
        return build_crack_scenario(
            config.preset,
            h=h,
            duration=max(times),
            dt=config.dt,
            diagnostic_stride=config.diagnostic_stride,
        )

    rows = spatial_convergence_study(
        builder, config.epsilon, times, threads=args.threads
    )
    path = _write_rows(
        out / "spatial_rates.csv",
        ("eps", "t", "e12", "e23", "rate", "degenerate"),
        [(r.eps, r.t, r.e12, r.e23, r.rate, int(r.degenerate)) for r in rows],
    )
    for r in rows:
        rate = "n/a (zero-state)" if r.degenerate else f"{r.rate:.4f}"
        print(f"t = {r.t * _US:.2f} us: e12 = {r.e12:.6e}, e23 = {r.e23:.6e}, rate = {rate}")
    print(f"-> {path}")
    return 0


def _cmd_study_temporal(args) -> int:
    config = parse_config(args.config)
    out = _prepare_out(Path(args.out) if args.out else config.out_dir)
    dts = config.study_dts or (4e-9, 2e-9, 1e-9)
    dt_ref = config.study_dt_ref if config.study_dt_ref is not None else min(dts) / 8.0

    def builder(dt):
        return build_scenario(dataclasses.replace(config, dt=dt))

    study = temporal_convergence_study(builder, dts, dt_ref, threads=args.threads)
    path = _write_rows(
        out / "temporal_orders.csv",
        ("dt", "error", "order"),
        [(r.dt, r.error, r.order) for r in study.rows],
    )
    for r in study.rows:
        order = "-" if math.isnan(r.order) else f"{r.order:.4f}"
        print(f"dt = {r.dt * _US:.5f} us: error = {r.error:.6e}, order = {order}")
    fitted = "n/a (zero-state)" if study.degenerate else f"{study.fitted_order:.4f}"
    print(f"fitted order: {fitted} -> {path}")
    return 0


def _cmd_verify(args) -> int:
    out = _prepare_out(Path(args.out) if args.out else Path("verify-out"))
    lines = []

    oracle = oracle_equivalence_suite(trials=20, seed=args.seed, threads=args.threads)
    lines.append(
        f"oracle equivalence: max relative error {oracle.max_rel_err:.3e} "
        f"over {oracle.trials} fields (tol {oracle.tol:.1e})"
    )

    lipschitz = lipschitz_l2_suite(trials=50, seed=args.seed, out_dir=out, threads=args.threads)
    lines.append(
        f"Lipschitz bound: max ratio {lipschitz.max_ratio:.4f} "
        f"over {lipschitz.trials} pairs (must be <= 1)"
    )

    projection = projection_error_suite()
    _write_rows(
        out / "projection_bound.csv",
        ("gamma", "h", "measured", "bound", "ratio"),
        [(r.gamma, r.h, r.measured, r.bound, r.ratio) for r in projection.rows],
    )
    for row in projection.rows:
        if row.ratio > 1.0:
            raise PropertyViolation(
                f"projection error {row.measured:.6e} exceeds its bound "
                f"{row.bound:.6e} at gamma={row.gamma}, h={row.h}"
            )
    for gamma, slope in projection.exponents:
        if abs(slope - gamma) > 0.1:
            raise PropertyViolation(
                f"projection decay exponent {slope:.3f} is not within 0.1 "
                f"of gamma={gamma}"
            )
        lines.append(f"projection bound: gamma={gamma} decay exponent {slope:.4f}")

    summary = out / "verify_summary.txt"
    try:
        summary.write_text("".join(line + "\n" for line in lines))
    except OSError as err:
        raise ConfigError(f"cannot write {summary}: {err}") from err
    for line in lines:
        print(line)
    print(f"-> {summary}")
    return 0


def _cmd_presets(args) -> int:
    root = resources.files("perifrac") / "presets"
    entries = sorted(root.iterdir(), key=lambda e: e.name)
    for entry in entries:
        if not entry.name.endswith(".ini"):
            continue
        first = entry.read_text().splitlines()[0].lstrip("# ").strip()
        print(f"{entry.name:24s} {first}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perifrac",
        description="Peridynamic fracture simulation and verification.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("config", help="scenario config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="assembly worker threads")
        p.add_argument(
            "--snapshot-stride",
            type=int,
            default=None,
            help="steps between VTK snapshots (0 disables; overrides the config)",
        )
        p.add_argument("--seed", type=int, default=0, help="verification RNG seed")

    p_run = sub.add_parser("run", help="integrate a scenario")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sp = sub.add_parser("study-spatial", help="mesh-refinement study on a crack preset")
    common(p_sp)
    p_sp.set_defaults(func=_cmd_study_spatial)

    p_tmp = sub.add_parser("study-temporal", help="time-step refinement study")
    common(p_tmp)
    p_tmp.set_defaults(func=_cmd_study_temporal)

    p_ver = sub.add_parser("verify", help="run the property suites")
    common(p_ver, needs_config=False)
    p_ver.set_defaults(func=_cmd_verify)

    p_pre = sub.add_parser("presets", help="list shipped scenario files")
    p_pre.set_defaults(func=_cmd_presets)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; our contract reserves 2 for
        # config problems and uses 1 for usage.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except PropertyViolation as err:
        print(f"property violation: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
