"""Damage, crack metrics, energies, norms, rates and stability reports.

Everything here is a pure function of a field snapshot; nothing mutates
simulation state.  Two integration measures coexist on purpose:

* `l2_norm` uses the simulation quadrature (one full cell volume h^2 per
  node) because that is the measure the energies and the motion itself are
  built on.
* `l2_difference` integrates the piecewise-constant difference exactly over
  the domain rectangle (cells clipped at the boundary), because it feeds
  convergence studies where the comparison must be an honest L^2 integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .geometry import Grid
from .operators import FieldState, ForceAssembler
from .reductions import row_max

__all__ = [
    "DiagnosticRecord",
    "EnergyBreakdown",
    "StabilityReport",
    "damage_field",
    "crack_length",
    "energies",
    "fracture_energies",
    "l2_norm",
    "l2_difference",
    "convergence_rate",
    "stability_report",
]


CSV_FIELDS = (
    "t",
    "kinetic",
    "pd",
    "total",
    "augmented",
    "pe",
    "ge",
    "crack_length",
    "max_z",
    "u_l2",
    "v_l2",
)


@dataclass(frozen=True)
class DiagnosticRecord:
    """One row of the run diagnostics stream."""

    t: float
    kinetic: float
    pd: float
    total: float
    augmented: float
    pe: float
    ge: float
    crack_length: float
    max_z: float
    u_l2: float
    v_l2: float

    def as_row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in CSV_FIELDS)


# ---------------------------------------------------------------------------
# damage and crack metrics


def damage_field(u: np.ndarray, asm: ForceAssembler, strains=None) -> np.ndarray:
    """Z(x_i) = max over visible neighbors of S / S_c(bond length).

    Nodes without visible bonds get Z = 0.
    """
    ratio = asm.stretch_ratio(u, strains=strains)
    z = row_max(ratio, asm.table.offsets, empty=-np.inf)
    return np.where(np.isneginf(z), 0.0, z)


def crack_length(
    z: np.ndarray,
    grid: Grid,
    initial_tip: Tuple[float, float],
    direction: str = "+y",
    initial_length: float = 0.0,
    threshold: float = 1.0,
) -> float:
    """Crack extent: contiguous damaged rows beyond the tip, times h.

    A row counts as damaged when any of its nodes has Z >= threshold.  The
    scan starts at the first row past the initial tip and stops at the first
    intact row; the result adds the initial crack length.
    """
    if direction != "+y":
        raise ConfigError(f"unsupported crack direction {direction!r}")
    iy_tip = round(initial_tip[1] / grid.h)
    rows_damaged = (z.reshape(grid.ny, grid.nx) >= threshold).any(axis=1)
    start = max(iy_tip + 1 - grid.iy0, 0)
    run = 0
    for row in range(start, grid.ny):
        if rows_damaged[row]:
            run += 1
        else:
            break
    return initial_length + run * grid.h


# ---------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    pd: float
    total: float
    augmented: float


def energies(state: FieldState, asm: ForceAssembler, strains=None) -> EnergyBreakdown:
    """Kinetic, potential, total and augmented energy of a snapshot.

    kinetic = rho/2 sum |v_i|^2 V_i; the potential is the bond part plus the
    dilatational part of the nonlocal energy; augmented adds ||u||^2 / 2.
    """
    vol = asm.grid.cell_volume
    rho = asm.model.rho
    bond, dil = asm.potential_rows(state.u, strains=strains)
    with np.errstate(over="ignore"):
        kinetic = 0.5 * rho * float(np.sum(state.v * state.v)) * vol
        pd = float(np.sum(bond + dil)) * vol
    total = kinetic + pd
    augmented = total + 0.5 * l2_norm(state.u, asm.grid) ** 2
    return EnergyBreakdown(kinetic=kinetic, pd=pd, total=total, augmented=augmented)


def fracture_energies(
    u: np.ndarray,
    asm: ForceAssembler,
    z: np.ndarray,
    gc: float,
    length: float,
    strains=None,
    mask: Optional[np.ndarray] = None,
) -> Tuple[float, float]:
    """Peridynamic fracture energy and Griffith energy (PE, GE).

    PE sums the bond potential density over damaged nodes (Z >= 1); the
    dilatational part never contributes.  `mask` restricts the sum to the
    physical sheet when the grid carries a prescribed-motion pad around it.
    GE = gc * crack length.
    """
    bond, _ = asm.potential_rows(u, strains=strains)
    damaged = z >= 1.0 if mask is None else (z >= 1.0) & mask
    pe = float(np.sum(bond[damaged])) * asm.grid.cell_volume
    return pe, gc * length


def snapshot_record(
    state: FieldState,
    asm: ForceAssembler,
    gc: float = 0.0,
    initial_tip: Optional[Tuple[float, float]] = None,
    initial_length: float = 0.0,
    damage: Optional[np.ndarray] = None,
    strains: Optional[np.ndarray] = None,
    pe_mask: Optional[np.ndarray] = None,
) -> DiagnosticRecord:
    """Assemble the full diagnostics row for one snapshot.

    `damage` may be a running-maximum field maintained by the caller (damage
    is irreversible); by default the instantaneous field is used.
    """
    s = asm.bond_strains(state.u) if strains is None else strains
    z = damage_field(state.u, asm, strains=s) if damage is None else damage
    e = energies(state, asm, strains=s)
    if initial_tip is not None:
        length = crack_length(z, asm.grid, initial_tip, initial_length=initial_length)
    else:
        length = initial_length
    pe, ge = fracture_energies(state.u, asm, z, gc, length, strains=s, mask=pe_mask)
    return DiagnosticRecord(
        t=state.t,
        kinetic=e.kinetic,
        pd=e.pd,
        total=e.total,
        augmented=e.augmented,
        pe=pe,
        ge=ge,
        crack_length=length,
        max_z=float(z.max()) if len(z) else 0.0,
        u_l2=l2_norm(state.u, asm.grid),
        v_l2=l2_norm(state.v, asm.grid),
    )


# ---------------------------------------------------------------------------
# norms and cross-grid comparison


def l2_norm(field: np.ndarray, grid: Grid) -> float:
    """Discrete L^2 norm with the simulation quadrature V_i = h^2."""
    with np.errstate(over="ignore"):
        return math.sqrt(float(np.sum(field * field)) * grid.cell_volume)


def _same_lattice(a: Grid, b: Grid) -> bool:
    return (
        a.h == b.h
        and (a.ix0, a.iy0, a.nx, a.ny) == (b.ix0, b.iy0, b.nx, b.ny)
    )


def _clipped_quadrant_areas(grid: Grid, sx: int, sy: int) -> np.ndarray:
    """Area of each node's cell quadrant (sign sx, sy) clipped to the domain."""
    x0, x1, y0, y1 = grid.bounds
    c = grid.coords
    half = 0.5 * grid.h
    lo_x = np.where(sx > 0, c[:, 0], c[:, 0] - half)
    hi_x = np.where(sx > 0, c[:, 0] + half, c[:, 0])
    lo_y = np.where(sy > 0, c[:, 1], c[:, 1] - half)
    hi_y = np.where(sy > 0, c[:, 1] + half, c[:, 1])
    wx = np.clip(np.minimum(hi_x, x1) - np.maximum(lo_x, x0), 0.0, None)
    wy = np.clip(np.minimum(hi_y, y1) - np.maximum(lo_y, y0), 0.0, None)
    return wx * wy


def _coarse_node_ids(fine: Grid, coarse: Grid, sx: int, sy: int) -> np.ndarray:
    """Coarse node owning each fine-cell quadrant, in exact index arithmetic.

    Fine node n lies at lattice index ix; the quadrant center sits at
    (ix + sx/4) h_f, which belongs to the coarse cell round((ix + sx/4)/2) =
    (ix + (sx+1)//2) // 2.  No floating point is involved, so ownership is
    exact.
    """
    ix, iy = fine.lattice
    jx = (ix + (sx + 1) // 2) >> 1
    jy = (iy + (sy + 1) // 2) >> 1
    if (
        jx.min() < coarse.ix0
        or jx.max() >= coarse.ix0 + coarse.nx
        or jy.min() < coarse.iy0
        or jy.max() >= coarse.iy0 + coarse.ny
    ):
        raise ConfigError("grids do not cover the same domain")
    return (jy - coarse.iy0) * coarse.nx + (jx - coarse.ix0)


def l2_difference(
    field_a: np.ndarray, grid_a: Grid, field_b: np.ndarray, grid_b: Grid
) -> float:
    """Exact L^2 distance of two cellwise-constant fields over the domain.

    Supported layouts: identical grids, or nested grids with mesh ratio 2
    sharing the domain rectangle (the refinement-study configuration).
    Anything else raises ConfigError.
    """
    if _same_lattice(grid_a, grid_b):
        diff = np.asarray(field_a, dtype=float) - field_b
        if diff.ndim == 1:
            diff = diff[:, None]
        lo, hi = grid_a.clipped_cells()
        area = np.prod(hi - lo, axis=1)
        return math.sqrt(float(np.sum(diff * diff * area[:, None])))

    if grid_a.h > grid_b.h:
        return l2_difference(field_b, grid_b, field_a, grid_a)
    fine, coarse = grid_a, grid_b
    f_fine = np.asarray(field_a, dtype=float)
    f_coarse = np.asarray(field_b, dtype=float)
    if not math.isclose(coarse.h, 2.0 * fine.h, rel_tol=1e-12):
        raise ConfigError(
            f"unsupported grid pair: mesh sizes {fine.h} and {coarse.h} "
            "are neither equal nor in ratio 2"
        )
    if fine.ix0 != 2 * coarse.ix0 or fine.iy0 != 2 * coarse.iy0:
        raise ConfigError("grids are not anchored on the same lattice")
    if f_fine.ndim == 1:
        f_fine = f_fine[:, None]
        f_coarse = f_coarse[:, None]
    acc = 0.0
    for sx in (-1, 1):
        for sy in (-1, 1):
            owner = _coarse_node_ids(fine, coarse, sx, sy)
            diff = f_fine - f_coarse[owner]
            area = _clipped_quadrant_areas(fine, sx, sy)
            acc += float(np.sum(diff * diff * area[:, None]))
    return math.sqrt(acc)


def convergence_rate(e12: float, e23: float, r: float = 2.0) -> float:
    """alpha = log(e12 / e23) / log(r)."""
    if not (e12 > 0.0 and e23 > 0.0):
        raise ValueError(f"convergence rate needs positive errors, got {e12}, {e23}")
    if not r > 1.0:
        raise ValueError(f"mesh ratio must exceed 1, got {r}")
    return math.log(e12 / e23) / math.log(r)


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityReport:
    """Energy-growth summary of a run.

    `fitted_c` is the smallest constant closing the softening-material
    envelope sqrt(E(t)) <= sqrt(E(0)) + t c / eps^2 + int_0^t ||b|| ds over
    the sampled series; `fitted_c2` the smallest exponent constant closing
    the quadratic-material envelope on the augmented energy.  Both are
    reported, never asserted against: the continuum constants are unknown.
    """

    stable: bool
    blew_up: bool
    energy0: float
    max_ratio: float
    fitted_c: float
    fitted_c2: float
    times: Tuple[float, ...]
    ratios: Tuple[float, ...]


def stability_report(
    series: Sequence[DiagnosticRecord],
    b_series: Optional[Iterable[Tuple[float, float]]],
    eps: float,
    tol: float = 1.01,
    blew_up: bool = False,
) -> StabilityReport:
    """Check energy growth of a diagnostics series against tol.

    `b_series` holds (t, ||b(t)||_L2) samples, or None when b = 0.  A run
    whose integration aborted should be passed with blew_up=True; it is
    reported unstable regardless of the truncated series content.
    """
    if not series:
        raise ConfigError("stability report needs at least one record")
    times = np.array([rec.t for rec in series])
    energy = np.array([rec.total for rec in series])
    augmented = np.array([rec.augmented for rec in series])
    e0 = float(energy[0])

    if b_series is None:
        b_int = np.zeros_like(times)
    else:
        bt = np.array(sorted(b_series))
        if len(bt) < 2:
            b_int = np.zeros_like(times)
        else:
            # Cumulative trapezoid of ||b|| resampled onto the record times.
            b_on_times = np.interp(times, bt[:, 0], bt[:, 1])
            b_int = np.concatenate(
                ([0.0], np.cumsum(np.diff(times) * 0.5 * (b_on_times[1:] + b_on_times[:-1])))
            )

    with np.errstate(over="ignore"):
        if e0 > 0.0:
            ratios = energy / e0
        else:
            # Growth from zero initial energy cannot hide behind the ratio.
            ratios = np.where(energy <= 0.0, 1.0, math.inf)
    max_ratio = float(ratios.max()) if not blew_up else math.inf

    mask = times > 0.0
    if mask.any() and e0 >= 0.0:
        slack = np.sqrt(np.maximum(energy[mask], 0.0)) - math.sqrt(max(e0, 0.0))
        slack -= b_int[mask]
        fitted_c = float(np.max(slack * eps**2 / times[mask]))
        fitted_c = max(fitted_c, 0.0)
    else:
        fitted_c = 0.0

    a0 = float(augmented[0])
    if mask.any() and a0 > 0.0:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            need = np.log(np.maximum(augmented[mask], a0 * 1e-300) / a0)
        c2 = np.max(eps**2 * (need / (3.0 * times[mask]) - 1.0))
        fitted_c2 = max(float(c2), 0.0)
    else:
        fitted_c2 = 0.0

    return StabilityReport(
        stable=(not blew_up) and max_ratio <= tol,
        blew_up=blew_up,
        energy0=e0,
        max_ratio=max_ratio,
        fitted_c=fitted_c,
        fitted_c2=fitted_c2,
        times=tuple(float(t) for t in times),
        ratios=tuple(float(r) for r in ratios),
    )
