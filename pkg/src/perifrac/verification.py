"""Independent oracles and study drivers.

The brute-force assembler recomputes everything from scratch — no neighbor
binning, no cached bond data, extended-precision accumulation — so agreement
with the production path is meaningful.  The studies (spatial/temporal
refinement, projection bound, Lipschitz bound, relaxation stability) drive
full runs and reduce them to the numbers the theory makes claims about.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import StabilityReport, convergence_rate, l2_difference, l2_norm, stability_report
from .errors import ConfigError, NumericalError, PropertyViolation
from .geometry import DomainSpec, Grid, build_grid, build_neighbors, boundary_weight
from .integrator import Scenario, run
from .materials import MaterialModel, lipschitz_l3, material_preset
from .operators import ForceAssembler

__all__ = [
    "StudySpec",
    "SpatialRow",
    "TemporalRow",
    "TemporalStudy",
    "ProjectionRow",
    "ProjectionReport",
    "LipschitzReport",
    "OracleReport",
    "brute_force_force",
    "oracle_equivalence_suite",
    "spatial_convergence_study",
    "temporal_convergence_study",
    "projection_error_suite",
    "lipschitz_l2_suite",
    "relaxation_stability",
]

_BRUTE_LIMIT = 4096


# ---------------------------------------------------------------------------
# brute-force assembly oracle


def _segment_blocks(ax, ay, bx, by, crack) -> np.ndarray:
    """True where the open segment a-b properly crosses the crack segment."""
    (px, py), (qx, qy) = crack
    d1 = (qx - px) * (ay - py) - (qy - py) * (ax - px)
    d2 = (qx - px) * (by - py) - (qy - py) * (bx - px)
    d3 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d4 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    return (d1 * d2 < 0.0) & (d3 * d4 < 0.0)


def brute_force_force(
    u: np.ndarray,
    grid: Grid,
    model: MaterialModel,
    omega: np.ndarray,
    cracks: Sequence = (),
    body: Optional[np.ndarray] = None,
) -> np.ndarray:
    """All-pairs O(N^2) force evaluation with fsum accumulation.

    Recomputes distances, visibility, partial volumes, strains and weights
    from their definitions; refuses grids above 4096 nodes.
    """
    n = grid.n_nodes
    if n > _BRUTE_LIMIT:
        raise ConfigError(f"brute-force oracle is capped at {_BRUTE_LIMIT} nodes, got {n}")
    eps = model.horizon
    h = grid.h
    vol = grid.cell_volume
    cutoff = eps + 0.5 * h
    norm = 1.0 / (eps**model.dimension * model.ball_volume)
    coords = grid.coords

    rows = []
    theta = np.empty(n)
    for i in range(n):
        dx = coords[:, 0] - coords[i, 0]
        dy = coords[:, 1] - coords[i, 1]
        d = np.hypot(dx, dy)
        near = d <= cutoff
        near[i] = False
        for crack in cracks:
            near &= ~_segment_blocks(
                coords[i, 0], coords[i, 1], coords[:, 0], coords[:, 1], crack
            )
        idx = np.nonzero(near)[0]
        dd = d[idx]
        ex = dx[idx] / dd
        ey = dy[idx] / dd
        s = ((u[idx, 0] - u[i, 0]) * ex + (u[idx, 1] - u[i, 1]) * ey) / dd
        vbar = np.minimum(1.0, (cutoff - dd) / h)
        jv = model.influence(dd / eps)
        theta[i] = math.fsum(norm * omega[idx] * jv * s * dd * vbar * vol)
        rows.append((idx, dd, ex, ey, s, vbar, jv))

    gp = model.g.g_prime(theta)
    force = np.zeros((n, 2))
    for i, (idx, dd, ex, ey, s, vbar, jv) in enumerate(rows):
        if len(idx) == 0:
            continue
        rt = np.sqrt(dd)
        tens = 2.0 * norm * omega[i] * omega[idx] * jv / (eps * dd) * rt * model.f.f_prime(rt * s)
        dil = norm * omega[i] * omega[idx] * jv / eps**2 * (gp[idx] + gp[i])
        w = (tens + dil) * vbar * vol
        force[i, 0] = math.fsum(w * ex)
        force[i, 1] = math.fsum(w * ey)
    if body is not None:
        force = force + body
    return force


# ---------------------------------------------------------------------------
# production-vs-oracle equivalence


@dataclass(frozen=True)
class OracleReport:
    max_rel_err: float
    trials: int
    seed: int
    tol: float


def oracle_equivalence_suite(
    trials: int = 20,
    seed: int = 0,
    tol: float = 1e-12,
    threads: int = 1,
) -> OracleReport:
    """Compare the production assembler with the brute-force oracle.

    Random displacement fields on a cracked 16x16 grid (eps = 4h), both
    dilatational kinds.  Relative force error above `tol` raises
    PropertyViolation.
    """
    h = 1e-3
    n = 16
    eps = 4 * h
    crack = ((7.5 * h, 0.0), (7.5 * h, 6 * h))
    spec = DomainSpec(bounds=(0.0, (n - 1) * h, 0.0, (n - 1) * h), cracks=(crack,))
    grid = build_grid(spec, h)
    table = build_neighbors(grid, eps, spec.cracks)
    omega = boundary_weight(grid, spec, "linear-taper", eps)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for g_kind in ("quadratic", "convex-concave"):
        model = material_preset("nu0245", horizon=eps, g_kind=g_kind)
        asm = ForceAssembler(grid, table, model, omega, threads=threads)
        try:
            for trial in range(trials):
                scale = 10.0 ** rng.uniform(-7, -4)
                u = scale * rng.standard_normal((grid.n_nodes, 2))
                produced, _, _ = asm.assemble_total_force(u)
                expected = brute_force_force(u, grid, model, omega, cracks=spec.cracks)
                err = float(
                    np.linalg.norm(produced - expected) / np.linalg.norm(expected)
                )
                worst = max(worst, err)
                if err > tol:
                    raise PropertyViolation(
                        f"{g_kind} trial {trial}: relative force error {err:.3e} "
                        f"exceeds {tol:.1e}"
                    )
        finally:
            asm.close()
    return OracleReport(max_rel_err=worst, trials=trials, seed=seed, tol=tol)


# ---------------------------------------------------------------------------
# refinement studies


@dataclass(frozen=True)
class StudySpec:
    """Parameters of a mesh-refinement study: 3 levels per horizon, ratio 2."""

    scenario: str
    horizons: Tuple[float, ...]
    duration: float
    times: Tuple[float, ...]
    levels: int = 3
    ratio: float = 2.0

    def __post_init__(self):
        if self.levels != 3:
            raise ConfigError("refinement studies need exactly three mesh levels")
        if self.ratio != 2.0:
            raise ConfigError("only mesh ratio 2 is supported")
        if not self.horizons:
            raise ConfigError("study needs at least one horizon")
        if not self.times or max(self.times) > self.duration + 1e-15:
            raise ConfigError("comparison times must lie inside the study duration")


@dataclass(frozen=True)
class SpatialRow:
    eps: float
    t: float
    e12: float
    e23: float
    rate: float
    degenerate: bool = False


def _state_difference(state_a, grid_a, state_b, grid_b) -> float:
    """E = ||u_a - u_b|| + ||v_a - v_b||, the convergence-study error metric."""
    return l2_difference(state_a.u, grid_a, state_b.u, grid_b) + l2_difference(
        state_a.v, grid_a, state_b.v, grid_b
    )


def spatial_convergence_study(
    builder: Callable[[float], Scenario],
    eps: float,
    times: Sequence[float],
    threads: int = 1,
) -> Tuple[SpatialRow, ...]:
    """Run a scenario at h = eps/2, eps/4, eps/8 and rate the differences.

    `builder(h)` must return scenarios that differ only in mesh size, on
    nested grids, with plans covering max(times).
    """
    levels = (eps / 2.0, eps / 4.0, eps / 8.0)
    results = []
    grids = []
    for h in levels:
        scen = builder(h)
        results.append(run(scen, threads=threads, capture_times=tuple(times)))
        grids.append(scen.grid)
    rows = []
    for t in times:
        caps = [res.captures[t] for res in results]
        e12 = _state_difference(caps[0], grids[0], caps[1], grids[1])
        e23 = _state_difference(caps[1], grids[1], caps[2], grids[2])
        if e12 > 0.0 and e23 > 0.0:
            rows.append(SpatialRow(eps=eps, t=t, e12=e12, e23=e23, rate=convergence_rate(e12, e23)))
        else:
            rows.append(
                SpatialRow(eps=eps, t=t, e12=e12, e23=e23, rate=math.nan, degenerate=True)
            )
    return tuple(rows)


@dataclass(frozen=True)
class TemporalRow:
    dt: float
    error: float
    order: float  # vs the previous (coarser) row; nan on the first


@dataclass(frozen=True)
class TemporalStudy:
    rows: Tuple[TemporalRow, ...]
    fitted_order: float  # least-squares slope of log error vs log dt
    degenerate: bool = False


def temporal_convergence_study(
    builder: Callable[[float], Scenario],
    dts: Sequence[float],
    dt_ref: float,
    threads: int = 1,
) -> TemporalStudy:
    """Error at the final time against a fine-step reference run.

    `builder(dt)` must return the same scenario up to the step size; the
    reference step must be at least 8x finer than the smallest study step.
    """
    dts = sorted(dts, reverse=True)
    if not dt_ref <= min(dts) / 8.0:
        raise ConfigError(
            f"reference step {dt_ref} must be at least 8x finer than min study step {min(dts)}"
        )
    ref_scen = builder(dt_ref)
    ref = run(ref_scen, threads=threads)
    grid = ref_scen.grid

    errors = []
    for dt in dts:
        res = run(builder(dt), threads=threads)
        if abs(res.state.t - ref.state.t) > min(dts) / 2.0:
            raise ConfigError(
                f"study runs end at different times: {res.state.t} vs {ref.state.t}"
            )
        errors.append(_state_difference(res.state, grid, ref.state, grid))

    rows = []
    for k, (dt, err) in enumerate(zip(dts, errors)):
        if k == 0 or errors[k - 1] <= 0.0 or err <= 0.0:
            order = math.nan
        else:
            order = math.log(errors[k - 1] / err) / math.log(dts[k - 1] / dt)
        rows.append(TemporalRow(dt=dt, error=err, order=order))

    positive = [(dt, e) for dt, e in zip(dts, errors) if e > 0.0]
    if len(positive) >= 2:
        ldt = np.log([p[0] for p in positive])
        lerr = np.log([p[1] for p in positive])
        fitted = float(np.polyfit(ldt, lerr, 1)[0])
        return TemporalStudy(rows=tuple(rows), fitted_order=fitted)
    return TemporalStudy(rows=tuple(rows), fitted_order=math.nan, degenerate=True)


# ---------------------------------------------------------------------------
# projection bound (piecewise-constant L^2 projection vs Hölder fields)

_LACUNARY_BASE = 2.0
_LACUNARY_MODES = 12


def _lacunary_terms(gamma: float):
    k = np.arange(_LACUNARY_MODES + 1)
    amp = _LACUNARY_BASE ** (-gamma * k)
    freq = _LACUNARY_BASE**k * math.pi
    return amp, freq


def lacunary_field(points: np.ndarray, gamma: float) -> np.ndarray:
    """W(x) + W(y) with W a lacunary cosine sum: rough at every scale.

    The field is genuinely C^{0,gamma} and no smoother, so its projection
    error actually decays like h^gamma; a single |x-x0|^gamma cusp would be
    in H^1 and decay like h instead.
    """
    amp, freq = _lacunary_terms(gamma)
    out = np.zeros(len(points))
    for a, w in zip(amp, freq):
        out += a * (np.cos(w * points[:, 0]) + np.cos(w * points[:, 1]))
    return out


def lacunary_seminorm(gamma: float) -> float:
    """Certified Hölder-gamma seminorm bound for `lacunary_field`.

    Per axis, splitting the sum at the scale of |s-t| gives
    |W(s)-W(t)| <= [pi lam^(1-g)/(lam^(1-g)-1) + 2/(1-lam^-g)] |s-t|^g;
    the two axes add (|dx|^g + |dy|^g <= 2 |dx,dy|^g).
    """
    lam = _LACUNARY_BASE
    per_axis = math.pi * lam ** (1.0 - gamma) / (lam ** (1.0 - gamma) - 1.0) + 2.0 / (
        1.0 - lam**-gamma
    )
    return 2.0 * per_axis


def _cell_intervals(grid: Grid) -> np.ndarray:
    """(n, 2) clipped 1-d cell intervals along x (the grid is square here)."""
    x0, x1, _, _ = grid.bounds
    xs = grid.coords[: grid.nx, 0]
    lo = np.maximum(xs - grid.h / 2.0, x0)
    hi = np.minimum(xs + grid.h / 2.0, x1)
    return np.stack([lo, hi], axis=1)


def _lacunary_projection_error(grid: Grid, gamma: float) -> float:
    """Exact L^2 projection error of the separable lacunary field.

    Cell means and squared integrals reduce to closed-form cosine integrals
    per axis; the cross term vanishes because each factor has zero cell mean.
    The 2-d error is sqrt(2) times the 1-d one on the unit square.
    """
    amp, freq = _lacunary_terms(gamma)
    iv = _cell_intervals(grid)
    a, b = iv[:, 0], iv[:, 1]
    length = b - a

    sin_b = np.sin(np.outer(freq, b))
    sin_a = np.sin(np.outer(freq, a))
    means = (amp[:, None] * (sin_b - sin_a) / freq[:, None]).sum(axis=0) / length

    total = 0.0
    for k in range(len(amp)):
        for l in range(len(amp)):
            wk, wl = freq[k], freq[l]
            if k == l:
                iw = 0.5 * (length + (np.sin(2 * wk * b) - np.sin(2 * wk * a)) / (2 * wk))
            else:
                iw = 0.5 * (
                    (np.sin((wk - wl) * b) - np.sin((wk - wl) * a)) / (wk - wl)
                    + (np.sin((wk + wl) * b) - np.sin((wk + wl) * a)) / (wk + wl)
                )
            total += amp[k] * amp[l] * float(iw.sum())
    err_sq_1d = total - float((length * means * means).sum())
    return math.sqrt(2.0 * max(err_sq_1d, 0.0))


def _gauss_nodes(iv: np.ndarray, subdivisions: int = 6, order: int = 3):
    """Composite Gauss nodes/weights per interval: (n, subdivisions*order)."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    a, b = iv[:, 0:1], iv[:, 1:2]
    step = (b - a) / subdivisions
    offs = a + step * np.arange(subdivisions)[None, :]
    mid = offs[:, :, None] + 0.5 * step[:, :, None] * (gx[None, None, :] + 1.0)
    wts = 0.5 * step[:, :, None] * gw[None, None, :] * np.ones_like(mid)
    n = len(iv)
    return mid.reshape(n, -1), wts.reshape(n, -1)


def _radial_projection_error(grid: Grid, center=(0.5, 0.5)) -> float:
    """L^2 projection error of |x - center| by composite Gauss quadrature."""
    iv = _cell_intervals(grid)
    pts, wts = _gauss_nodes(iv)
    n, m = pts.shape
    xx = pts[:, None, :, None] - center[0]
    yy = pts[None, :, None, :] - center[1]
    u = np.hypot(np.broadcast_to(xx, (n, n, m, m)), np.broadcast_to(yy, (n, n, m, m)))
    w2 = wts[:, None, :, None] * wts[None, :, None, :]
    int_u = np.einsum("ijkl,ijkl->ij", u, w2)
    int_u2 = np.einsum("ijkl,ijkl->ij", u * u, w2)
    area = np.outer(iv[:, 1] - iv[:, 0], iv[:, 1] - iv[:, 0])
    err_sq = float((int_u2 - int_u * int_u / area).sum())
    return math.sqrt(max(err_sq, 0.0))


@dataclass(frozen=True)
class ProjectionRow:
    gamma: float
    h: float
    measured: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class ProjectionReport:
    rows: Tuple[ProjectionRow, ...]
    exponents: Tuple[Tuple[float, float], ...]  # (gamma, fitted slope)

    def exponent(self, gamma: float) -> float:
        for g, slope in self.exponents:
            if g == gamma:
                return slope
        raise KeyError(gamma)


def projection_error_suite(
    gammas: Sequence[float] = (0.5, 1.0),
    hs: Sequence[float] = (1.0 / 16, 1.0 / 32, 1.0 / 64),
) -> ProjectionReport:
    """Measure projection errors on [0,1]^2 against c^gamma sqrt(|D|) |u| h^gamma.

    gamma = 1 uses the radial distance field (Lipschitz seminorm exactly 1);
    fractional gamma uses the lacunary field with its certified seminorm.
    """
    rows = []
    slopes = []
    for gamma in gammas:
        if not 0.0 < gamma <= 1.0:
            raise ConfigError(f"Hölder exponent must be in (0, 1], got {gamma}")
        if gamma == 1.0:
            seminorm = 1.0
        else:
            seminorm = lacunary_seminorm(gamma)
        errs = []
        for h in hs:
            grid = build_grid(DomainSpec(bounds=(0.0, 1.0, 0.0, 1.0), cracks=()), h)
            if gamma == 1.0:
                measured = _radial_projection_error(grid)
            else:
                measured = _lacunary_projection_error(grid, gamma)
            bound = math.sqrt(2.0) ** gamma * 1.0 * seminorm * h**gamma
            rows.append(
                ProjectionRow(
                    gamma=gamma, h=h, measured=measured, bound=bound, ratio=measured / bound
                )
            )
            errs.append(measured)
        slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        slopes.append((gamma, slope))
    return ProjectionReport(rows=tuple(rows), exponents=tuple(slopes))


# ---------------------------------------------------------------------------
# Lipschitz bound


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    trials: int
    seed: int
    l3: float


def lipschitz_l2_suite(
    model: Optional[MaterialModel] = None,
    n: int = 24,
    eps_over_h: int = 4,
    h: float = 1.0e-3,
    trials: int = 50,
    seed: int = 0,
    out_dir: Optional[Path] = None,
    threads: int = 1,
) -> LipschitzReport:
    """Check ||L(u) - L(v)|| <= (L3/eps^2) ||u - v|| on random field pairs.

    Amplitudes sweep from the linear regime deep into bond saturation.  A
    violation serializes the offending pair (when out_dir is given) and
    raises PropertyViolation.
    """
    if n > 32:
        raise ConfigError("Lipschitz suite grids are capped at 32x32")
    eps = eps_over_h * h
    if model is None:
        model = material_preset("nu0245", horizon=eps)
    spec = DomainSpec(bounds=(0.0, (n - 1) * h, 0.0, (n - 1) * h), cracks=())
    grid = build_grid(spec, h)
    table = build_neighbors(grid, eps, ())
    omega = boundary_weight(grid, spec, "linear-taper", eps)
    asm = ForceAssembler(grid, table, model, omega, threads=threads)
    l3 = lipschitz_l3(model)

    rng = np.random.default_rng(seed)
    scales = np.logspace(-7, -3, trials)
    max_ratio = 0.0
    try:
        for k in range(trials):
            u = scales[k] * rng.standard_normal((grid.n_nodes, 2))
            v = scales[(k * 7 + 3) % trials] * rng.standard_normal((grid.n_nodes, 2))
            lu, _, _ = asm.assemble_total_force(u)
            lv, _, _ = asm.assemble_total_force(v)
            num = l2_norm(lu - lv, grid)
            den = l2_norm(u - v, grid)
            if den == 0.0:
                continue
            ratio = num * eps**2 / (l3 * den)
            if ratio > max_ratio:
                max_ratio = ratio
            if ratio > 1.0:
                detail = f"trial {k}: ratio {ratio:.6f} exceeds 1"
                if out_dir is not None:
                    path = Path(out_dir) / "lipschitz_violation.npz"
                    np.savez(path, u=u, v=v, ratio=ratio, seed=seed, trial=k)
                    detail += f"; offending pair saved to {path}"
                raise PropertyViolation(detail)
    finally:
        asm.close()
    return LipschitzReport(max_ratio=max_ratio, trials=trials, seed=seed, l3=l3)


# ---------------------------------------------------------------------------
# relaxation stability harness


def relaxation_stability(
    scenario: Scenario, threads: int = 1, tol: float = 1.01
) -> StabilityReport:
    """Run a free relaxation and summarize its energy growth.

    A run that aborts on non-finite values is reported with blew_up=True
    from the records collected up to the failure.
    """
    records = []
    b_norms = None
    blew_up = False
    try:
        result = run(scenario, threads=threads, on_record=records.append)
        b_norms = result.b_norms if scenario.body is not None else None
    except NumericalError:
        blew_up = True
    return stability_report(
        records, b_norms, scenario.model.horizon, tol=tol, blew_up=blew_up
    )
