"""Scenario configuration files: flat sectioned key=value text.

The grammar is deliberately tiny so the parser can be total: any byte
sequence either yields a validated ScenarioConfig or a ConfigError naming
the offending key and line.  Sections are `[name]` headers; entries are
`key = value`; `#` and `;` start comments.  Unknown sections and keys are
hard errors — typos never pass silently.

A file either references a preset (`[scenario] preset = ...`) with a few
overridable knobs, or describes a custom scenario in full.  See the README
for the key reference and the shipped preset files for worked examples.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError
from .geometry import DomainSpec, build_grid, build_neighbors, boundary_weight
from .integrator import CollarCondition, Scenario, TimePlan
from .materials import (
    DilatationalPotential,
    InfluenceFunction,
    MaterialModel,
    PRESET_NAMES,
    TensilePotential,
    material_preset,
)
from .scenarios import (
    CRACK_PRESETS,
    CRACK_SHEET_X,
    build_bending_scenario,
    build_crack_scenario,
    crack_preset_grid,
    manufactured_scenario,
    relaxation_scenario,
)

__all__ = ["ScenarioConfig", "parse_config", "build_scenario", "SCENARIO_PRESETS"]

SCENARIO_PRESETS = CRACK_PRESETS + (
    "bending-single",
    "bending-double",
    "relax",
    "manufactured",
)

# Geometry and stepping each non-crack preset resolves to (the crack presets
# resolve through their name).
_PRESET_RESOLUTION = {
    "bending-single": dict(epsilon=0.010, h=0.0025, dt=1.4e-9, duration=3.5e-4),
    "bending-double": dict(epsilon=0.010, h=0.0025, dt=1.4e-9, duration=3.5e-4),
    "relax": dict(epsilon=1e-3, h=0.25e-3, dt=4e-9, duration=4e-5),
    "manufactured": dict(epsilon=8e-3, h=2e-3, dt=4e-9, duration=2e-6),
}

_COMPONENTS = {"x": (0,), "y": (1,), "xy": (0, 1)}


@dataclass(frozen=True)
class _Entry:
    value: str
    line: int


class _Table:
    """Parsed key/value pairs with consumption tracking.

    Every key that survives to the end unconsumed is unknown by definition
    and reported with its location.
    """

    def __init__(self, path: str):
        self.path = path
        self.sections: Dict[str, Dict[str, _Entry]] = {}
        self.section_lines: Dict[str, int] = {}
        self.consumed: set = set()

    def err(self, line: int, message: str) -> ConfigError:
        return ConfigError(f"{self.path}:{line}: {message}")

    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str) -> Optional[_Entry]:
        entry = self.sections.get(section, {}).get(key)
        if entry is not None:
            self.consumed.add((section, key))
        return entry

    def require(self, section: str, key: str) -> _Entry:
        entry = self.get(section, key)
        if entry is None:
            line = self.section_lines.get(section, 0)
            raise self.err(line, f"missing required key {key!r} in [{section}]")
        return entry

    def floats(self, section: str, key: str, count: int) -> Optional[Tuple[float, ...]]:
        entry = self.get(section, key)
        if entry is None:
            return None
        parts = entry.value.split()
        try:
            vals = tuple(float(p) for p in parts)
        except ValueError:
            raise self.err(entry.line, f"{key}: expected numbers, got {entry.value!r}")
        if len(vals) != count:
            raise self.err(entry.line, f"{key}: expected {count} numbers, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise self.err(entry.line, f"{key}: values must be finite")
        return vals

    def number(self, section: str, key: str) -> Optional[float]:
        vals = self.floats(section, key, 1)
        return None if vals is None else vals[0]

    def integer(self, section: str, key: str) -> Optional[int]:
        entry = self.get(section, key)
        if entry is None:
            return None
        try:
            return int(entry.value)
        except ValueError:
            raise self.err(entry.line, f"{key}: expected an integer, got {entry.value!r}")

    def word(self, section: str, key: str, choices=None) -> Optional[str]:
        entry = self.get(section, key)
        if entry is None:
            return None
        if choices is not None and entry.value not in choices:
            raise self.err(
                entry.line,
                f"{key}: expected one of {', '.join(sorted(choices))}, got {entry.value!r}",
            )
        return entry.value

    def reject_unconsumed(self):
        for section, entries in self.sections.items():
            for key, entry in entries.items():
                if (section, key) not in self.consumed:
                    raise self.err(
                        entry.line, f"unknown or unused key {key!r} in [{section}]"
                    )


_SECTION_RE = re.compile(r"\[([A-Za-z0-9_.:-]+)\]")
_KEY_RE = re.compile(r"[A-Za-z0-9_.]+")
_KNOWN_SECTIONS = (
    "scenario",
    "material",
    "grid",
    "cracks",
    "time",
    "load",
    "initial",
    "output",
    "study",
)


def _parse_text(text: str, path: str) -> _Table:
    table = _Table(path)
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.fullmatch(line)
        if m:
            section = m.group(1)
            if section not in _KNOWN_SECTIONS and not re.fullmatch(r"collar\d+", section):
                raise table.err(lineno, f"unknown section [{section}]")
            if section in table.sections:
                raise table.err(lineno, f"duplicate section [{section}]")
            table.sections[section] = {}
            table.section_lines[section] = lineno
            continue
        if "=" not in line:
            raise table.err(lineno, f"expected 'key = value' or '[section]', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.fullmatch(key):
            raise table.err(lineno, f"malformed key {key!r}")
        if section is None:
            raise table.err(lineno, f"key {key!r} appears before any [section]")
        if key in table.sections[section]:
            raise table.err(lineno, f"duplicate key {key!r} in [{section}]")
        table.sections[section][key] = _Entry(value=value, line=lineno)
    return table


@dataclass(frozen=True)
class LoadSpec:
    kind: str = "none"  # none | constant | ramp
    value: Tuple[float, float] = (0.0, 0.0)  # constant body force
    f_max: float = 0.0  # ramp rate (signed, N m^-3 s^-1)
    endpoints: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    direction: str = "-y"


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "zero"  # zero | bump
    amplitude: float = 0.0
    sigma: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    component: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario description.

    For preset files the geometry fields echo what the preset will build, so
    callers can inspect ε, h, Δt, T without constructing the grid.
    """

    name: str
    preset: Optional[str]
    epsilon: float
    h: float
    dt: float
    duration: float
    bounds: Tuple[float, float, float, float]
    cracks: Tuple = ()
    material: str = "nu0245"
    g_kind: str = "quadratic"
    explicit_material: Optional[Tuple[float, float, float]] = None  # c, beta, cbar
    rho: float = 1200.0
    gc: float = 500.0
    crack_tip: Optional[Tuple[float, float]] = None
    initial_crack_length: float = 0.0
    collars: Tuple[CollarCondition, ...] = ()
    load: LoadSpec = field(default_factory=LoadSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    out_dir: Path = Path("out")
    diagnostic_stride: int = 10
    snapshot_stride: int = 0
    formats: Tuple[str, ...] = ("csv",)
    study_times: Tuple[float, ...] = ()
    study_dts: Tuple[float, ...] = ()
    study_dt_ref: Optional[float] = None


def _box_intersects(box, bounds) -> bool:
    bx0, bx1, by0, by1 = box
    x0, x1, y0, y1 = bounds
    return bx0 <= x1 and bx1 >= x0 and by0 <= y1 and by1 >= y0


def _parse_collars(table: _Table, bounds) -> Tuple[CollarCondition, ...]:
    collars = []
    for section in table.sections:
        if not re.fullmatch(r"collar\d+", section):
            continue
        box = table.floats(section, "box", 4)
        if box is None:
            raise table.err(
                table.section_lines[section], f"missing required key 'box' in [{section}]"
            )
        kind = table.word(section, "kind", {"velocity", "displacement"})
        if kind is None:
            raise table.err(
                table.section_lines[section], f"missing required key 'kind' in [{section}]"
            )
        comp = table.word(section, "components", set(_COMPONENTS))
        value = table.number(section, "value")
        if not _box_intersects(box, bounds):
            raise table.err(
                table.section_lines[section],
                f"[{section}] box {box} does not intersect the domain {bounds}",
            )
        try:
            collars.append(
                CollarCondition(
                    box=box,
                    components=_COMPONENTS[comp or "x"],
                    kind=kind,
                    value=0.0 if value is None else value,
                )
            )
        except ConfigError as err:
            raise table.err(table.section_lines[section], str(err)) from err
    return tuple(collars)


def _parse_cracks(table: _Table, bounds):
    if not table.has("cracks"):
        return (), None, None
    cracks = []
    for key in table.sections["cracks"]:
        if not re.fullmatch(r"crack\d+", key):
            continue  # left unconsumed -> reported as unknown
        seg = table.floats("cracks", key, 4)
        cracks.append(((seg[0], seg[1]), (seg[2], seg[3])))
    tip = table.floats("cracks", "tip", 2)
    length = table.number("cracks", "initial_length")
    return tuple(cracks), tip, length


def _parse_load(table: _Table, bounds) -> LoadSpec:
    if not table.has("load"):
        return LoadSpec()
    kind = table.word("load", "kind", {"none", "constant", "ramp"}) or "none"
    if kind == "none":
        return LoadSpec()
    if kind == "constant":
        value = table.floats("load", "value", 2)
        if value is None:
            raise table.err(
                table.section_lines["load"], "constant load needs 'value = bx by'"
            )
        return LoadSpec(kind="constant", value=value)
    f_max = table.number("load", "f_max")
    ends = table.floats("load", "endpoints", 4)
    direction = table.word("load", "direction", {"+x", "-x", "+y", "-y"}) or "-y"
    if f_max is None or ends is None:
        raise table.err(
            table.section_lines["load"], "ramp load needs 'f_max' and 'endpoints = x0 y0 x1 y1'"
        )
    for px, py in ((ends[0], ends[1]), (ends[2], ends[3])):
        if not _box_intersects((px, px, py, py), bounds):
            raise table.err(
                table.section_lines["load"],
                f"load endpoint ({px}, {py}) lies outside the domain {bounds}",
            )
    return LoadSpec(kind="ramp", f_max=f_max, endpoints=ends, direction=direction)


def _parse_initial(table: _Table) -> InitialSpec:
    if not table.has("initial"):
        return InitialSpec()
    kind = table.word("initial", "kind", {"zero", "bump"}) or "zero"
    if kind == "zero":
        return InitialSpec()
    amplitude = table.number("initial", "amplitude")
    sigma = table.number("initial", "sigma")
    center = table.floats("initial", "center", 2)
    comp = table.word("initial", "component", set(_COMPONENTS) - {"xy"}) or "x"
    if amplitude is None or sigma is None or center is None:
        raise table.err(
            table.section_lines["initial"],
            "bump initial condition needs 'amplitude', 'sigma' and 'center = x y'",
        )
    if sigma <= 0.0:
        raise table.err(table.section_lines["initial"], "sigma must be positive")
    return InitialSpec(
        kind="bump",
        amplitude=amplitude,
        sigma=sigma,
        center=center,
        component=_COMPONENTS[comp][0],
    )


def _parse_output(table: _Table):
    out_dir = Path("out")
    diag, snap = 10, 0
    formats: Tuple[str, ...] = ("csv",)
    if table.has("output"):
        entry = table.get("output", "directory")
        if entry is not None:
            out_dir = Path(entry.value)
        d = table.integer("output", "diagnostic_stride")
        if d is not None:
            if d < 1:
                raise table.err(
                    table.sections["output"]["diagnostic_stride"].line,
                    "diagnostic_stride must be >= 1",
                )
            diag = d
        s = table.integer("output", "snapshot_stride")
        if s is not None:
            if s < 0:
                raise table.err(
                    table.sections["output"]["snapshot_stride"].line,
                    "snapshot_stride must be >= 0",
                )
            snap = s
        entry = table.get("output", "formats")
        if entry is not None:
            formats = tuple(entry.value.split())
            bad = set(formats) - {"csv", "vtk"}
            if bad:
                raise table.err(entry.line, f"unknown output formats: {', '.join(sorted(bad))}")
    return out_dir, diag, snap, formats


def _parse_study(table: _Table):
    times: Tuple[float, ...] = ()
    dts: Tuple[float, ...] = ()
    dt_ref = None
    if table.has("study"):
        entry = table.get("study", "times")
        if entry is not None:
            try:
                times = tuple(float(p) for p in entry.value.split())
            except ValueError:
                raise table.err(entry.line, f"times: expected numbers, got {entry.value!r}")
        entry = table.get("study", "dts")
        if entry is not None:
            try:
                dts = tuple(float(p) for p in entry.value.split())
            except ValueError:
                raise table.err(entry.line, f"dts: expected numbers, got {entry.value!r}")
        dt_ref = table.number("study", "dt_ref")
    return times, dts, dt_ref


def parse_config(path: Union[str, Path]) -> ScenarioConfig:
    """Parse and validate a scenario file.

    Raises ConfigError with file:line locations for every defect; never
    raises anything else, whatever the file contains.
    """
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except UnicodeDecodeError as err:
        raise ConfigError(f"{path} is not valid UTF-8: {err}") from err

    table = _parse_text(text, str(path))
    preset = table.word("scenario", "preset", set(SCENARIO_PRESETS)) if table.has("scenario") else None
    name = None
    if table.has("scenario"):
        entry = table.get("scenario", "name")
        name = entry.value if entry is not None else None

    dt = table.number("time", "dt") if table.has("time") else None
    duration = table.number("time", "duration") if table.has("time") else None
    out_dir, diag, snap, formats = _parse_output(table)
    study_times, study_dts, study_dt_ref = _parse_study(table)

    if preset is not None:
        cfg = _resolve_preset(
            table, preset, name, dt, duration, out_dir, diag, snap, formats
        )
    else:
        cfg = _resolve_custom(table, path, name, dt, duration, out_dir, diag, snap, formats)

    table.reject_unconsumed()
    return dataclasses.replace(
        cfg,
        study_times=study_times,
        study_dts=study_dts,
        study_dt_ref=study_dt_ref,
    )


def _resolve_preset(
    table, preset, name, dt, duration, out_dir, diag, snap, formats
) -> ScenarioConfig:
    h_override = table.number("grid", "h") if table.has("grid") else None
    if preset in CRACK_PRESETS:
        spec, grid, eps = crack_preset_grid(preset, h_override)
        base = dict(
            epsilon=eps,
            h=grid.h,
            dt=4e-9,
            duration=3.4e-5,
            bounds=spec.bounds,
            crack_tip=(CRACK_SHEET_X, 0.02),
            initial_crack_length=0.02,
            material="nu0245",
        )
    else:
        res = _PRESET_RESOLUTION[preset]
        if h_override is not None:
            raise ConfigError(f"preset {preset!r} does not take an h override")
        if preset.startswith("bending"):
            bounds = (0.0, 0.25, 0.0, 0.05)
            material = "nu022"
        elif preset == "relax":
            bounds = (0.0, 0.02, 0.0, 0.02)
            material = "nu0245"
        else:
            bounds = (0.0, 0.04, 0.0, 0.04)
            material = "nu0245"
        base = dict(
            epsilon=res["epsilon"],
            h=res["h"],
            dt=res["dt"],
            duration=res["duration"],
            bounds=bounds,
            material=material,
        )
    base["dt"] = dt if dt is not None else base["dt"]
    base["duration"] = duration if duration is not None else base["duration"]
    if base["dt"] <= 0 or base["duration"] <= 0:
        raise ConfigError("dt and duration must be positive")
    return ScenarioConfig(
        name=name or preset,
        preset=preset,
        out_dir=out_dir,
        diagnostic_stride=diag,
        snapshot_stride=snap,
        formats=formats,
        **base,
    )


def _resolve_custom(
    table, path, name, dt, duration, out_dir, diag, snap, formats
) -> ScenarioConfig:
    if not table.has("grid"):
        raise ConfigError(f"{path}: missing [grid] section (no preset given)")
    bounds = table.floats("grid", "bounds", 4)
    if bounds is None:
        raise table.err(table.section_lines["grid"], "missing required key 'bounds' in [grid]")
    epsilon = table.number("grid", "epsilon")
    h = table.number("grid", "h")
    if epsilon is None or h is None:
        raise table.err(
            table.section_lines["grid"], "custom scenarios need 'epsilon' and 'h' in [grid]"
        )
    if epsilon <= 0 or h <= 0:
        raise table.err(table.section_lines["grid"], "epsilon and h must be positive")
    if dt is None or duration is None:
        line = table.section_lines.get("time", 0)
        raise table.err(line, "custom scenarios need 'dt' and 'duration' in [time]")
    if dt <= 0 or duration <= 0:
        raise table.err(table.section_lines["time"], "dt and duration must be positive")

    material = "nu0245"
    g_kind = "quadratic"
    explicit = None
    rho = 1200.0
    gc = 500.0
    if table.has("material"):
        mp = table.word("material", "preset", set(PRESET_NAMES))
        g_kind = table.word("material", "g", {"quadratic", "convex-concave"}) or "quadratic"
        c = table.number("material", "c")
        beta = table.number("material", "beta")
        cbar = table.number("material", "cbar")
        rho_v = table.number("material", "rho")
        gc_v = table.number("material", "gc")
        if rho_v is not None:
            rho = rho_v
        if gc_v is not None:
            gc = gc_v
        if mp is not None:
            material = mp
            if c is not None or beta is not None or cbar is not None:
                raise table.err(
                    table.section_lines["material"],
                    "give either 'preset' or explicit c/beta/cbar, not both",
                )
        elif c is not None or beta is not None or cbar is not None:
            if c is None or beta is None or cbar is None:
                raise table.err(
                    table.section_lines["material"],
                    "explicit materials need all of c, beta and cbar",
                )
            explicit = (c, beta, cbar)

    cracks, tip, length = _parse_cracks(table, bounds)
    for (ax, ay), (bx, by) in cracks:
        spec_probe = (min(ax, bx), max(ax, bx), min(ay, by), max(ay, by))
        if not _box_intersects(spec_probe, bounds):
            raise ConfigError(f"{path}: crack {((ax, ay), (bx, by))} lies outside the domain")

    collars = _parse_collars(table, bounds)
    load = _parse_load(table, bounds)
    initial = _parse_initial(table)

    return ScenarioConfig(
        name=name or Path(path).stem,
        preset=None,
        epsilon=epsilon,
        h=h,
        dt=dt,
        duration=duration,
        bounds=bounds,
        cracks=cracks,
        material=material,
        g_kind=g_kind,
        explicit_material=explicit,
        rho=rho,
        gc=gc,
        crack_tip=tip,
        initial_crack_length=0.0 if length is None else length,
        collars=collars,
        load=load,
        initial=initial,
        out_dir=out_dir,
        diagnostic_stride=diag,
        snapshot_stride=snap,
        formats=formats,
    )


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Construct the runnable scenario a config describes."""
    if config.preset in CRACK_PRESETS:
        return build_crack_scenario(
            config.preset,
            h=config.h,
            duration=config.duration,
            dt=config.dt,
            diagnostic_stride=config.diagnostic_stride,
            snapshot_stride=config.snapshot_stride,
        )
    if config.preset in ("bending-single", "bending-double"):
        return build_bending_scenario(
            config.preset.split("-", 1)[1],
            duration=config.duration,
            dt=config.dt,
            diagnostic_stride=config.diagnostic_stride,
            snapshot_stride=config.snapshot_stride,
        )
    if config.preset == "relax":
        steps = max(1, round(config.duration / config.dt))
        return relaxation_scenario(
            dt=config.dt, steps=steps, diagnostic_stride=config.diagnostic_stride
        )
    if config.preset == "manufactured":
        return manufactured_scenario(dt=config.dt, duration=config.duration)

    spec = DomainSpec(bounds=config.bounds, cracks=config.cracks)
    grid = build_grid(spec, config.h)
    table = build_neighbors(grid, config.epsilon, config.cracks)
    omega = boundary_weight(grid, spec, "indicator", config.epsilon)
    if config.explicit_material is not None:
        c, beta, cbar = config.explicit_material
        if config.g_kind == "quadratic":
            g = DilatationalPotential.quadratic(cbar=cbar)
        else:
            g = DilatationalPotential.convex_concave(scale=abs(cbar), gbeta=beta)
        model = MaterialModel(
            rho=config.rho,
            horizon=config.epsilon,
            influence=InfluenceFunction.linear_decay(),
            f=TensilePotential(c=c, beta=beta),
            g=g,
            gc=config.gc,
        )
    else:
        model = material_preset(config.material, config.epsilon, g_kind=config.g_kind)

    body = None
    if config.load.kind == "constant":
        const = np.broadcast_to(np.array(config.load.value), (grid.n_nodes, 2))

        def body(t: float) -> np.ndarray:  # noqa: F811
            return const

    elif config.load.kind == "ramp":
        x0, y0, x1, y1 = config.load.endpoints
        mid = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
        axis = np.array([x1 - x0, y1 - y0])
        half = math.hypot(*axis)
        if half == 0.0:
            raise ConfigError("ramp load endpoints coincide")
        axis = axis / half
        half /= 2.0
        c = grid.coords
        along = (c - mid) @ axis
        perp = np.abs((c - mid) @ np.array([-axis[1], axis[0]]))
        on_line = (perp <= 0.5 * grid.h) & (np.abs(along) <= half + 0.5 * grid.h)
        shape = np.where(on_line, np.maximum(0.0, 1.0 - np.abs(along) / half), 0.0)
        comp = {"x": 0, "y": 1}[config.load.direction[1]]
        sign = 1.0 if config.load.direction[0] == "+" else -1.0
        profile = np.zeros((grid.n_nodes, 2))
        profile[:, comp] = sign * abs(config.load.f_max) * shape

        def body(t: float) -> np.ndarray:  # noqa: F811
            return profile * t

    u0 = None
    if config.initial.kind == "bump":
        cx, cy = config.initial.center
        r2 = (grid.coords[:, 0] - cx) ** 2 + (grid.coords[:, 1] - cy) ** 2
        u0 = np.zeros((grid.n_nodes, 2))
        u0[:, config.initial.component] = config.initial.amplitude * np.exp(
            -r2 / config.initial.sigma**2
        )

    plan = TimePlan(
        dt=config.dt,
        duration=config.duration,
        diagnostic_stride=config.diagnostic_stride,
        snapshot_stride=config.snapshot_stride,
    )
    return Scenario(
        name=config.name,
        domain=spec,
        grid=grid,
        table=table,
        model=model,
        omega=omega,
        plan=plan,
        collars=config.collars,
        body=body,
        u0=u0,
        gc=config.gc,
        crack_tip=config.crack_tip,
        initial_crack_length=config.initial_crack_length,
    )
