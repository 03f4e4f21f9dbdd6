"""Time stepping: forward Euler in velocity, with boundary collars.

The update per step is

    v_{k+1} = v_k + dt (L(u_k) + b_k) / rho
    u_{k+1} = u_k + dt v_{k+1}

which is equivalent to the central-difference scheme for u.  Constraints
are enforced strongly after each half of the update: velocity collars
overwrite v before u advances (so collar nodes move with the prescribed
velocity), displacement collars overwrite u afterwards and zero the
constrained velocity component.
"""

from __future__ import annotations

import math
import time as _time
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .diagnostics import DiagnosticRecord, damage_field, l2_norm, snapshot_record
from .errors import ConfigError, NumericalError
from .geometry import DomainSpec, Grid, NeighborTable
from .materials import MaterialModel, lipschitz_l3
from .operators import FieldState, ForceAssembler

__all__ = [
    "CollarCondition",
    "TimePlan",
    "Scenario",
    "RunResult",
    "step",
    "run",
]


@dataclass(frozen=True)
class TimePlan:
    """Step size, duration and output cadence of a run."""

    dt: float
    duration: float
    diagnostic_stride: int = 1
    snapshot_stride: int = 0  # 0 disables intermediate state snapshots

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.duration < self.dt:
            raise ConfigError("duration must cover at least one step")
        if self.diagnostic_stride < 1:
            raise ConfigError("diagnostic stride must be at least 1")
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot stride must be non-negative")

    @property
    def steps(self) -> int:
        return round(self.duration / self.dt)


ValueFn = Union[float, Callable[[float], float]]


@dataclass(frozen=True, eq=False)
class CollarCondition:
    """Strongly enforced boundary values on an axis-aligned node box.

    kind "velocity" prescribes v on the listed components (a constant or a
    function of time); kind "displacement" prescribes u and zeroes the
    corresponding v.
    """

    box: Tuple[float, float, float, float]
    components: Tuple[int, ...]
    kind: str
    value: ValueFn = 0.0

    def __post_init__(self):
        if self.kind not in ("velocity", "displacement"):
            raise ConfigError(f"unknown collar kind {self.kind!r}")
        if not self.components or any(c not in (0, 1) for c in self.components):
            raise ConfigError("collar components must be a subset of (0, 1)")
        x0, x1, y0, y1 = self.box
        if x0 > x1 or y0 > y1:
            raise ConfigError(f"collar box is empty: {self.box}")

    def node_mask(self, grid: Grid) -> np.ndarray:
        x0, x1, y0, y1 = self.box
        tol = 1e-9 * grid.h
        c = grid.coords
        return (
            (c[:, 0] >= x0 - tol)
            & (c[:, 0] <= x1 + tol)
            & (c[:, 1] >= y0 - tol)
            & (c[:, 1] <= y1 + tol)
        )

    def value_at(self, t: float) -> float:
        return self.value(t) if callable(self.value) else self.value


class _BoundCollar:
    """Collar with its node mask resolved against a grid."""

    def __init__(self, collar: CollarCondition, grid: Grid):
        self.collar = collar
        self.mask = collar.node_mask(grid)
        if not self.mask.any():
            raise ConfigError(f"collar box {collar.box} contains no grid nodes")

    def apply_velocity(self, v: np.ndarray, t: float):
        if self.collar.kind == "velocity":
            val = self.collar.value_at(t)
            for c in self.collar.components:
                v[self.mask, c] = val

    def apply_displacement(self, u: np.ndarray, v: np.ndarray, t: float):
        if self.collar.kind == "displacement":
            val = self.collar.value_at(t)
            for c in self.collar.components:
                u[self.mask, c] = val
                v[self.mask, c] = 0.0


def step(
    state: FieldState,
    force: np.ndarray,
    plan: TimePlan,
    collars: Sequence[_BoundCollar],
    rho: float,
) -> FieldState:
    """Advance one step given the force density assembled from `state`."""
    dt = plan.dt
    t_next = state.t + dt
    with np.errstate(over="ignore", invalid="ignore"):
        v = state.v + (dt / rho) * force
        for collar in collars:
            collar.apply_velocity(v, t_next)
        u = state.u + dt * v
    for collar in collars:
        collar.apply_displacement(u, v, t_next)
    return FieldState(u=u, v=v, t=t_next)


@dataclass(eq=False)
class Scenario:
    """Everything a run needs, fully resolved against a grid."""

    name: str
    domain: DomainSpec
    grid: Grid
    table: NeighborTable
    model: MaterialModel
    omega: np.ndarray
    plan: TimePlan
    collars: Tuple[CollarCondition, ...] = ()
    body: Optional[Callable[[float], np.ndarray]] = None
    u0: Optional[np.ndarray] = None
    v0: Optional[np.ndarray] = None
    gc: float = 0.0
    crack_tip: Optional[Tuple[float, float]] = None
    initial_crack_length: float = 0.0
    # The sheet proper when the grid carries a prescribed-motion pad around
    # it; fracture energy is only collected here.
    physical_bounds: Optional[Tuple[float, float, float, float]] = None

    def physical_mask(self) -> Optional[np.ndarray]:
        if self.physical_bounds is None:
            return None
        x0, x1, y0, y1 = self.physical_bounds
        tol = 1e-9 * self.grid.h
        c = self.grid.coords
        return (
            (c[:, 0] >= x0 - tol)
            & (c[:, 0] <= x1 + tol)
            & (c[:, 1] >= y0 - tol)
            & (c[:, 1] <= y1 + tol)
        )


@dataclass(eq=False)
class RunResult:
    state: FieldState
    records: List[DiagnosticRecord]
    captures: Dict[float, FieldState]
    b_norms: List[Tuple[float, float]]
    steps: int
    wall_time: float


def _stability_heuristic(model: MaterialModel, dt: float):
    """Warn when dt exceeds the softening-stiffness estimate 2 sqrt(rho eps^2 / L3).

    L3 / eps^2 bounds the operator's Lipschitz constant, so it acts as a
    stiffness scale; the factor 2 is the forward-Euler oscillator limit.
    """
    l3 = lipschitz_l3(model)
    if l3 <= 0.0:
        return
    dt_est = 2.0 * math.sqrt(model.rho * model.horizon**2 / l3)
    if dt > dt_est:
        warnings.warn(
            f"time step {dt:.3e} exceeds the stability estimate {dt_est:.3e}; "
            "the integration may blow up",
            stacklevel=3,
        )


def run(
    scenario: Scenario,
    threads: int = 1,
    snapshot_stride: Optional[int] = None,
    capture_times: Sequence[float] = (),
    on_record: Optional[Callable[[DiagnosticRecord], None]] = None,
    on_state: Optional[Callable[[FieldState, np.ndarray, int], None]] = None,
) -> RunResult:
    """Integrate a scenario to its final time.

    Diagnostics are recorded every plan.diagnostic_stride steps (plus step 0
    and the final step) and streamed to `on_record`.  Full states go to
    `on_state` every snapshot stride.  States at `capture_times` are copied
    into the result (matched to the nearest step within dt/2).  Damage is
    tracked as a running maximum: bonds do not heal.
    """
    plan = scenario.plan
    grid = scenario.grid
    n = grid.n_nodes
    _stability_heuristic(scenario.model, plan.dt)
    stride = plan.snapshot_stride if snapshot_stride is None else snapshot_stride

    asm = ForceAssembler(
        grid, scenario.table, scenario.model, scenario.omega, threads=threads
    )
    bound = [_BoundCollar(c, grid) for c in scenario.collars]

    u0 = np.zeros((n, 2)) if scenario.u0 is None else np.array(scenario.u0, dtype=float)
    v0 = np.zeros((n, 2)) if scenario.v0 is None else np.array(scenario.v0, dtype=float)
    state = FieldState(u=u0, v=v0, t=0.0)
    for collar in bound:
        collar.apply_velocity(state.v, 0.0)
    for collar in bound:
        collar.apply_displacement(state.u, state.v, 0.0)

    pe_mask = scenario.physical_mask()

    def diag(state, damage, strains):
        return snapshot_record(
            state,
            asm,
            gc=scenario.gc,
            initial_tip=scenario.crack_tip,
            initial_length=scenario.initial_crack_length,
            damage=damage,
            strains=strains,
            pe_mask=pe_mask,
        )

    t_start = _time.perf_counter()
    records: List[DiagnosticRecord] = []
    b_norms: List[Tuple[float, float]] = []
    captures: Dict[float, FieldState] = {}
    pending = sorted(capture_times)

    try:
        s0 = asm.bond_strains(state.u)
        damage = damage_field(state.u, asm, strains=s0)
        records.append(diag(state, damage, s0))
        if on_record:
            on_record(records[-1])
        if on_state and stride:
            on_state(state, damage, 0)

        for k in range(1, plan.steps + 1):
            t_body = state.t
            body = scenario.body(t_body) if scenario.body is not None else None
            try:
                force, theta, strains = asm.assemble_total_force(state.u, body=body)
            except NumericalError as err:
                raise NumericalError(f"step {k} (t = {state.t:.6e} s): {err}") from err
            state = step(state, force, plan, bound, scenario.model.rho)

            is_diag = (k % plan.diagnostic_stride == 0) or k == plan.steps
            is_snap = stride and (k % stride == 0 or k == plan.steps)
            hit = pending and abs(state.t - pending[0]) <= 0.5 * plan.dt
            if is_diag or is_snap or hit:
                s_new = asm.bond_strains(state.u)
                damage = np.maximum(damage, damage_field(state.u, asm, strains=s_new))
                if is_diag or hit:
                    records.append(diag(state, damage, s_new))
                    if on_record:
                        on_record(records[-1])
                    if body is not None:
                        b_norms.append((t_body, l2_norm(body, grid)))
                if is_snap and on_state:
                    on_state(state, damage, k)
                if hit:
                    captures[pending.pop(0)] = state.copy()
    finally:
        asm.close()

    return RunResult(
        state=state,
        records=records,
        captures=captures,
        b_norms=b_norms,
        steps=plan.steps,
        wall_time=_time.perf_counter() - t_start,
    )
