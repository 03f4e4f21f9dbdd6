"""Diagnostics CSV and legacy-VTK snapshot writers.

Numbers are printed with 17 significant digits so reading a file back
reproduces the in-memory float64 values exactly.  All files are plain ASCII
with '.' decimals regardless of locale.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .diagnostics import CSV_FIELDS, DiagnosticRecord
from .errors import ConfigError
from .geometry import Grid
from .operators import FieldState

__all__ = [
    "write_csv",
    "read_csv",
    "write_vtk",
    "snapshot_path",
]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(
    path: Union[str, Path],
    records: Sequence[DiagnosticRecord],
    append: bool = False,
) -> Path:
    """Write (or extend) a diagnostics series; the header appears once.

    An empty series still produces the header, so downstream tools always
    see the column contract.
    """
    path = Path(path)
    need_header = not (append and path.exists() and path.stat().st_size > 0)
    try:
        with open(path, "a" if append else "w", newline="") as fh:
            writer = csv.writer(fh)
            if need_header:
                writer.writerow(CSV_FIELDS)
            for rec in records:
                writer.writerow([_fmt(v) for v in rec.as_row()])
    except OSError as err:
        raise ConfigError(f"cannot write {path}: {err}") from err
    return path


def read_csv(path: Union[str, Path]) -> List[DiagnosticRecord]:
    """Read a diagnostics series written by `write_csv`."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(CSV_FIELDS):
                raise ConfigError(f"{path}: unexpected CSV header {header}")
            out = []
            for row in reader:
                if len(row) != len(CSV_FIELDS):
                    raise ConfigError(
                        f"{path}: row with {len(row)} fields, expected {len(CSV_FIELDS)}"
                    )
                out.append(DiagnosticRecord(**dict(zip(CSV_FIELDS, map(float, row)))))
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except ValueError as err:
        raise ConfigError(f"{path}: bad numeric field: {err}") from err
    return out


def snapshot_path(directory: Union[str, Path], name: str, step: int) -> Path:
    """Zero-padded per-step snapshot filename."""
    return Path(directory) / f"{name}_{step:08d}.vtk"


def write_vtk(
    path: Union[str, Path],
    grid: Grid,
    state: FieldState,
    damage: np.ndarray,
    theta: Optional[np.ndarray] = None,
) -> Path:
    """Write one snapshot as legacy VTK ASCII polydata (point cloud).

    Point data arrays: displacement and velocity as 3-vectors (zero z),
    damage and theta as scalars.
    """
    path = Path(path)
    n = grid.n_nodes
    for label, field in (("damage", damage), ("theta", theta)):
        if field is not None and len(field) != n:
            raise ConfigError(f"{label} array has {len(field)} entries for {n} points")
    coords = grid.coords
    if theta is None:
        theta = np.zeros(n)

    def vec_lines(fh, name, field):
        fh.write(f"VECTORS {name} double\n")
        for row in field:
            fh.write(f"{_fmt(row[0])} {_fmt(row[1])} 0\n")

    def scalar_lines(fh, name, field):
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in field:
            fh.write(f"{_fmt(v)}\n")

    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"t = {_fmt(state.t)} s\n")
            fh.write("ASCII\nDATASET POLYDATA\n")
            fh.write(f"POINTS {n} double\n")
            for x, y in coords:
                fh.write(f"{_fmt(x)} {_fmt(y)} 0\n")
            fh.write(f"VERTICES {n} {2 * n}\n")
            for i in range(n):
                fh.write(f"1 {i}\n")
            fh.write(f"POINT_DATA {n}\n")
            vec_lines(fh, "displacement", state.u)
            vec_lines(fh, "velocity", state.v)
            scalar_lines(fh, "damage", damage)
            scalar_lines(fh, "theta", theta)
    except OSError as err:
        raise ConfigError(f"cannot write {path}: {err}") from err
    return path
