"""Uniform grid, neighbor table and boundary geometry.

The material domain is a rectangle; its discretization is the lattice
D cap (h Z)^d, so node coordinates are exact integer multiples of the mesh
size.  Neighborhoods collect every node within eps + h/2 of a center with a
partial-volume correction for cells straddling the horizon ball, and a
per-bond visibility flag that encodes initial cracks as permanently broken
bonds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigError

__all__ = [
    "DomainSpec",
    "Grid",
    "NeighborTable",
    "build_grid",
    "build_neighbors",
    "boundary_weight",
    "project_to_cells",
    "bond_geometry",
    "crack_visibility",
]

Segment = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class DomainSpec:
    """Rectangular domain [x0, x1] x [y0, y1] with optional crack segments."""

    bounds: Tuple[float, float, float, float]
    cracks: Tuple[Segment, ...] = ()

    def __post_init__(self):
        x0, x1, y0, y1 = self.bounds
        if not (x0 < x1 and y0 < y1):
            raise ConfigError(f"domain extents must be strictly ordered: {self.bounds}")
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        for (ax, ay), (bx, by) in self.cracks:
            for px, py in ((ax, ay), (bx, by)):
                if not (x0 - tol <= px <= x1 + tol and y0 - tol <= py <= y1 + tol):
                    raise ConfigError(
                        f"crack endpoint ({px}, {py}) lies outside the domain"
                    )

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)


@dataclass(frozen=True)
class Grid:
    """Lattice D cap (h Z)^2 stored as index ranges.

    Node n (row-major, y outer) sits at lattice index
    (ix0 + n % nx, iy0 + n // nx) and coordinate (ix * h, iy * h).
    Every cell has volume h^2; cells of boundary nodes overhang the domain
    rectangle by up to h/2 (clipped versions are used by the projection
    helper only).
    """

    h: float
    ix0: int
    iy0: int
    nx: int
    ny: int
    bounds: Tuple[float, float, float, float]

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.h * self.h

    @cached_property
    def lattice(self) -> Tuple[np.ndarray, np.ndarray]:
        """Integer lattice indices (ix, iy) per node."""
        n = np.arange(self.n_nodes)
        ix = self.ix0 + (n % self.nx)
        iy = self.iy0 + (n // self.nx)
        return ix.astype(np.int64), iy.astype(np.int64)

    @cached_property
    def coords(self) -> np.ndarray:
        ix, iy = self.lattice
        out = np.empty((self.n_nodes, 2), dtype=float)
        out[:, 0] = ix * self.h
        out[:, 1] = iy * self.h
        out.setflags(write=False)
        return out

    def node_id(self, ix: int, iy: int) -> int:
        if not (self.ix0 <= ix < self.ix0 + self.nx):
            raise IndexError(f"lattice x index {ix} out of range")
        if not (self.iy0 <= iy < self.iy0 + self.ny):
            raise IndexError(f"lattice y index {iy} out of range")
        return (iy - self.iy0) * self.nx + (ix - self.ix0)

    def clipped_cells(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-node cell rectangles [lo, hi] clipped to the domain bounds.

        The clipped cells tile the domain exactly, which is what the
        piecewise-constant projection of Lemma-style error bounds needs.
        """
        x0, x1, y0, y1 = self.bounds
        c = self.coords
        lo = np.maximum(c - 0.5 * self.h, [x0, y0])
        hi = np.minimum(c + 0.5 * self.h, [x1, y1])
        return lo, hi


def _lattice_range(lo: float, hi: float, h: float) -> Tuple[int, int]:
    tol = 1e-9
    i_lo = math.ceil(lo / h - tol * (1.0 + abs(lo / h)))
    i_hi = math.floor(hi / h + tol * (1.0 + abs(hi / h)))
    return i_lo, i_hi


def build_grid(spec: DomainSpec, h: float) -> Grid:
    """Collect all lattice points of spacing h inside the closed rectangle."""
    if h <= 0.0:
        raise ConfigError(f"mesh size must be positive, got {h}")
    x0, x1, y0, y1 = spec.bounds
    ix0, ix1 = _lattice_range(x0, x1, h)
    iy0, iy1 = _lattice_range(y0, y1, h)
    if ix1 < ix0 or iy1 < iy0:
        raise ConfigError(
            f"grid is empty: no lattice points of spacing {h} inside {spec.bounds}"
        )
    return Grid(
        h=h, ix0=ix0, iy0=iy0, nx=ix1 - ix0 + 1, ny=iy1 - iy0 + 1, bounds=spec.bounds
    )


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """CSR neighbor lists with per-bond precomputations.

    For node i the bonds live in cols[offsets[i]:offsets[i+1]], sorted by
    neighbor id.  dist is the bond length, unit the direction e_ij from i to
    j, vbar the partial-volume correction in [0, 1] and visible false iff the
    bond crosses a crack segment.
    """

    offsets: np.ndarray
    cols: np.ndarray
    dist: np.ndarray
    unit: np.ndarray
    vbar: np.ndarray
    visible: np.ndarray

    @cached_property
    def rows(self) -> np.ndarray:
        counts = np.diff(self.offsets)
        return np.repeat(np.arange(len(counts), dtype=self.cols.dtype), counts)

    @property
    def n_nodes(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_bonds(self) -> int:
        return len(self.cols)


def _orient(ax, ay, bx, by, px, py):
    """Sign of the cross product (b - a) x (p - a)."""
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def crack_visibility(
    xi: np.ndarray, xj: np.ndarray, cracks: Sequence[Segment]
) -> np.ndarray:
    """visible[k] is False iff segment (xi[k], xj[k]) properly crosses a crack.

    Proper crossing requires the bond endpoints strictly on opposite sides of
    the crack line and vice versa; bonds or nodes merely touching the crack
    stay visible, which keeps the relation symmetric and orientation-free.
    """
    visible = np.ones(len(xi), dtype=bool)
    for (ax, ay), (bx, by) in cracks:
        s1 = _orient(ax, ay, bx, by, xi[:, 0], xi[:, 1])
        s2 = _orient(ax, ay, bx, by, xj[:, 0], xj[:, 1])
        s3 = _orient(xi[:, 0], xi[:, 1], xj[:, 0], xj[:, 1], ax, ay)
        s4 = _orient(xi[:, 0], xi[:, 1], xj[:, 0], xj[:, 1], bx, by)
        crossing = (s1 * s2 < 0.0) & (s3 * s4 < 0.0)
        visible &= ~crossing
    return visible


def bond_geometry(
    coords: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    eps: float,
    h: float,
    cracks: Sequence[Segment],
):
    """Distance, direction, volume correction and visibility for bond lists.

    Shared by the binned builder and the all-pairs oracle so both produce
    bitwise identical tables for identical pair sets.
    """
    xi = coords[rows]
    xj = coords[cols]
    delta = xj - xi
    dist = np.hypot(delta[:, 0], delta[:, 1])
    unit = delta / dist[:, None]
    inner = eps - 0.5 * h
    vbar = np.where(dist <= inner, 1.0, (eps + 0.5 * h - dist) / h)
    visible = crack_visibility(xi, xj, cracks)
    return dist, unit, vbar, visible


def _csr_from_pairs(n_nodes, rows, cols, coords, eps, h, cracks):
    order = np.lexsort((cols, rows))
    rows = np.ascontiguousarray(rows[order])
    cols = np.ascontiguousarray(cols[order])
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_nodes), out=offsets[1:])
    dist, unit, vbar, visible = bond_geometry(coords, rows, cols, eps, h, cracks)
    return NeighborTable(
        offsets=offsets,
        cols=cols.astype(np.int32),
        dist=dist,
        unit=unit,
        vbar=vbar,
        visible=visible,
    )


def build_neighbors(
    grid: Grid, eps: float, cracks: Sequence[Segment] = ()
) -> NeighborTable:
    """Cell-binned neighbor search with cutoff eps + h/2.

    Bins have width eps, so all neighbors of a node live in the 3 x 3 block
    of bins around it.  The resulting table is byte-identical to the
    all-pairs oracle (same cutoff test, same bond formulas).
    """
    if eps <= 0.0:
        raise ConfigError(f"horizon must be positive, got {eps}")
    if grid.h >= eps:
        warnings.warn(
            f"mesh size h={grid.h} is not smaller than the horizon eps={eps}; "
            "the nonlocal quadrature will be very coarse",
            stacklevel=2,
        )
    coords = grid.coords
    n = grid.n_nodes
    cutoff = eps + 0.5 * grid.h

    xmin = coords[:, 0].min()
    ymin = coords[:, 1].min()
    # Bins as wide as the cutoff keep every potential neighbor within the
    # 3 x 3 block of bins around a node.
    nbx = max(1, int(np.ceil((coords[:, 0].max() - xmin) / cutoff)))
    nby = max(1, int(np.ceil((coords[:, 1].max() - ymin) / cutoff)))
    bx = np.clip(((coords[:, 0] - xmin) / cutoff).astype(np.int64), 0, nbx - 1)
    by = np.clip(((coords[:, 1] - ymin) / cutoff).astype(np.int64), 0, nby - 1)
    bin_id = by * nbx + bx
    order = np.argsort(bin_id, kind="stable")
    bin_starts = np.searchsorted(bin_id[order], np.arange(nbx * nby + 1))

    row_parts = []
    col_parts = []
    cutoff_sq = cutoff * cutoff
    for b in range(nbx * nby):
        centers = order[bin_starts[b] : bin_starts[b + 1]]
        if len(centers) == 0:
            continue
        cy, cx = divmod(b, nbx)
        cand = []
        for dy in (-1, 0, 1):
            yy = cy + dy
            if yy < 0 or yy >= nby:
                continue
            for dx in (-1, 0, 1):
                xx = cx + dx
                if xx < 0 or xx >= nbx:
                    continue
                nb = yy * nbx + xx
                cand.append(order[bin_starts[nb] : bin_starts[nb + 1]])
        cand = np.concatenate(cand)
        delta = coords[cand][None, :, :] - coords[centers][:, None, :]
        within = (delta * delta).sum(axis=2) <= cutoff_sq
        ii, jj = np.nonzero(within)
        keep = centers[ii] != cand[jj]
        row_parts.append(centers[ii][keep])
        col_parts.append(cand[jj][keep])

    if row_parts:
        rows = np.concatenate(row_parts)
        cols = np.concatenate(col_parts)
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
    return _csr_from_pairs(n, rows, cols, coords, eps, grid.h, cracks)


def boundary_weight(grid: Grid, spec: DomainSpec, mode: str, eps: float) -> np.ndarray:
    """Per-node boundary function omega.

    "indicator" is identically 1 on the grid (the scenario default);
    "linear-taper" ramps from 0 on the rectangle boundary to 1 at distance
    eps, which is the profile the Lipschitz / Hoelder suites assume.
    """
    if mode == "indicator":
        return np.ones(grid.n_nodes)
    if mode == "linear-taper":
        x0, x1, y0, y1 = spec.bounds
        c = grid.coords
        edge = np.minimum.reduce(
            [c[:, 0] - x0, x1 - c[:, 0], c[:, 1] - y0, y1 - c[:, 1]]
        )
        return np.clip(edge / eps, 0.0, 1.0)
    raise ConfigError(f"unknown boundary weight mode {mode!r}")


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


def project_to_cells(fn, grid: Grid) -> np.ndarray:
    """Cell averages of an analytic field over the clipped grid cells.

    fn maps an (M, 2) array of points to (M,) or (M, k) values; a 3 x 3
    tensor-product Gauss rule is exact well beyond the piecewise-constant
    accuracy this feeds.  Used by the verification module only.
    """
    lo, hi = grid.clipped_cells()
    span = hi - lo
    # Affine map of [-1, 1] Gauss nodes into each cell; weights are already
    # normalized to integrate to the cell area, so dividing by the area gives
    # the average.
    result = None
    for wa, na in zip(_GAUSS_WEIGHTS, _GAUSS_NODES):
        for wb, nb in zip(_GAUSS_WEIGHTS, _GAUSS_NODES):
            points = np.empty_like(lo)
            points[:, 0] = lo[:, 0] + span[:, 0] * 0.5 * (na + 1.0)
            points[:, 1] = lo[:, 1] + span[:, 1] * 0.5 * (nb + 1.0)
            values = np.asarray(fn(points), dtype=float)
            contrib = 0.25 * wa * wb * values
            result = contrib if result is None else result + contrib
    return result
