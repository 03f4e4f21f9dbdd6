"""Nonlocal strain and force operators on a discretized body.

The force density at a node splits into a tensile part driven by bond
strain and a dilatational part driven by hydrostatic strain:

    L(u) = L_T(u) + L_D(u),
    L_T(u)_i = (2 / (eps^d w_d)) sum_j  w_i w_j J(d_ij/eps) / (eps d_ij)
               * d/dS f(sqrt(d_ij) S_ij) * e_ij * Vbar_ij V_j,
    L_D(u)_i = (1 / (eps^d w_d)) sum_j  w_i w_j J(d_ij/eps) / eps^2
               * [g'(theta_j) + g'(theta_i)] * e_ij * Vbar_ij V_j,

with S_ij the bond strain, theta the hydrostatic strain

    theta_i = (1 / (eps^d w_d)) sum_j w_j J(d_ij/eps) S_ij d_ij Vbar_ij V_j,

w_d the unit-ball volume and sums running over visible bonds only.  The
assembler folds everything static into per-bond weights once, so a force
evaluation is elementwise work over the bond arrays plus per-row
reductions.  Those reductions depend only on each row's own slice, which
makes multithreaded assembly bitwise identical to serial assembly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .geometry import Grid, NeighborTable
from .materials import MaterialModel
from .reductions import row_blocks, row_sums

__all__ = [
    "FieldState",
    "ForceAssembler",
    "bond_strain",
    "hydrostatic_strain",
]


@dataclass(eq=False)
class FieldState:
    """Displacement and velocity fields at one instant."""

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, n_nodes: int) -> "FieldState":
        return cls(u=np.zeros((n_nodes, 2)), v=np.zeros((n_nodes, 2)), t=0.0)

    def copy(self) -> "FieldState":
        return FieldState(u=self.u.copy(), v=self.v.copy(), t=self.t)


def bond_strain(u: np.ndarray, i: int, j: int, grid: Grid) -> float:
    """Strain of the bond from node i to node j: ((u_j - u_i) . e_ij) / d_ij.

    Scalar reference implementation; the assembler computes the same value
    for every bond at once.
    """
    delta = grid.coords[j] - grid.coords[i]
    d = math.hypot(delta[0], delta[1])
    return float((u[j] - u[i]) @ delta) / (d * d)


def hydrostatic_strain(
    u: np.ndarray,
    i: int,
    grid: Grid,
    table: NeighborTable,
    omega: np.ndarray,
    model: MaterialModel,
) -> float:
    """Hydrostatic strain at node i, summed bond by bond.

    Scalar reference implementation used as an oracle for the vectorized
    path; O(degree) per call.
    """
    eps = model.horizon
    norm = 1.0 / (eps**model.dimension * model.ball_volume)
    vol = grid.cell_volume
    total = 0.0
    for k in range(int(table.offsets[i]), int(table.offsets[i + 1])):
        if not table.visible[k]:
            continue
        j = int(table.cols[k])
        d = float(table.dist[k])
        s = bond_strain(u, i, j, grid)
        total += omega[j] * model.influence(d / eps) * s * d * table.vbar[k] * vol
    return norm * total


@dataclass(eq=False)
class _BondWeights:
    """Static per-bond factors; strain-dependent pieces multiply in later."""

    theta: np.ndarray  # theta_i = sum w.theta * S
    tensile: np.ndarray  # L_T_i = sum w.tensile * f'(q) * e
    dilat: np.ndarray  # L_D_i = sum w.dilat * (g'(th_j) + g'(th_i)) * e
    energy: np.ndarray  # bond energy density_i = sum w.energy * f(q)


class ForceAssembler:
    """Evaluates strains, forces and potential densities on bond arrays.

    Parameters
    ----------
    grid, table : discretization and neighbor structure
    model : material (horizon, influence, potentials, density)
    omega : per-node boundary weight
    threads : worker threads for the bond loops; results are bitwise
        identical for any thread count.
    """

    def __init__(
        self,
        grid: Grid,
        table: NeighborTable,
        model: MaterialModel,
        omega: np.ndarray,
        threads: int = 1,
    ):
        if model.dimension != 2:
            raise ConfigError("grid assembly supports dimension 2 only")
        self.grid = grid
        self.table = table
        self.model = model
        self.omega = np.asarray(omega, dtype=float)
        if self.omega.shape != (grid.n_nodes,):
            raise ConfigError("omega must hold one weight per node")

        eps = model.horizon
        vol = grid.cell_volume
        dist = table.dist
        norm = 1.0 / (eps**model.dimension * model.ball_volume)
        jvals = model.influence(dist / eps)
        vis = table.visible.astype(float)
        wi = self.omega[table.rows]
        wj = self.omega[table.cols]
        common = jvals * table.vbar * vol * vis
        self._w = _BondWeights(
            theta=norm * wj * dist * common,
            tensile=2.0 * norm * wi * wj * np.sqrt(dist) / (eps * dist) * common,
            dilat=norm * wi * wj / eps**2 * common,
            energy=norm * wi * wj / eps * common,
        )
        self._sqrt_dist = np.sqrt(dist)
        self._e0 = np.ascontiguousarray(table.unit[:, 0])
        self._e1 = np.ascontiguousarray(table.unit[:, 1])

        threads = max(1, int(threads))
        self._blocks = row_blocks(table.offsets, 4 * threads)
        self._pool = ThreadPoolExecutor(threads) if threads > 1 else None

    # -- plumbing ----------------------------------------------------------

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def _run_blocks(self, work):
        if self._pool is None:
            for a, b in self._blocks:
                work(a, b)
        else:
            list(self._pool.map(lambda ab: work(*ab), self._blocks))

    def _row_sums_into(self, out, values, a, b, lo):
        out[a:b] = row_sums(values, self.table.offsets[a : b + 1] - lo)

    # -- strain-level quantities -------------------------------------------

    def bond_strains(self, u: np.ndarray) -> np.ndarray:
        """S for every bond in table order (visibility not applied)."""
        s = np.empty(self.table.n_bonds)
        offsets, rows, cols = self.table.offsets, self.table.rows, self.table.cols
        # Component-wise gathers are far cheaper than gathering (B, 2) rows.
        u0 = np.ascontiguousarray(u[:, 0])
        u1 = np.ascontiguousarray(u[:, 1])

        def work(a, b):
            lo, hi = offsets[a], offsets[b]
            c, r = cols[lo:hi], rows[lo:hi]
            with np.errstate(all="ignore"):
                du0 = np.take(u0, c)
                du0 -= np.take(u0, r)
                du1 = np.take(u1, c)
                du1 -= np.take(u1, r)
                du0 *= self._e0[lo:hi]
                du1 *= self._e1[lo:hi]
                du0 += du1
                du0 /= self.table.dist[lo:hi]
            s[lo:hi] = du0

        self._run_blocks(work)
        return s

    def hydrostatic_strain(self, u: np.ndarray, strains=None) -> np.ndarray:
        """theta for every node."""
        s = self.bond_strains(u) if strains is None else strains
        theta = np.empty(self.grid.n_nodes)
        offsets = self.table.offsets

        def work(a, b):
            lo, hi = offsets[a], offsets[b]
            with np.errstate(all="ignore"):
                vals = self._w.theta[lo:hi] * s[lo:hi]
            self._row_sums_into(theta, vals, a, b, lo)

        self._run_blocks(work)
        return theta

    # -- forces --------------------------------------------------------------

    def tensile_force(self, u: np.ndarray, strains=None) -> np.ndarray:
        s = self.bond_strains(u) if strains is None else strains
        return self._bond_force(self._tensile_coef, s)

    def dilatational_force(self, u: np.ndarray, strains=None, theta=None) -> np.ndarray:
        s = self.bond_strains(u) if strains is None else strains
        if theta is None:
            theta = self.hydrostatic_strain(u, strains=s)
        with np.errstate(all="ignore"):
            gp = self.model.g.g_prime(theta)

        def coef(lo, hi, s_slice):
            return self._dilat_coef(lo, hi, gp)

        return self._bond_force(coef, s)

    def assemble_total_force(self, u: np.ndarray, body=None):
        """Total force density L(u) (+ body force), with its strains.

        Returns (force, theta, strains).  Raises NumericalError if the
        result is not finite, which is how a blown-up integration surfaces.
        Tensile and dilatational coefficients are fused into a single bond
        pass, so this is cheaper than calling the two parts separately.
        """
        s = self.bond_strains(u)
        theta = self.hydrostatic_strain(u, strains=s)
        with np.errstate(all="ignore"):
            gp = self.model.g.g_prime(theta)

        force = np.empty((self.grid.n_nodes, 2))
        offsets, rows, cols = self.table.offsets, self.table.rows, self.table.cols

        def work(a, b):
            lo, hi = offsets[a], offsets[b]
            with np.errstate(all="ignore"):
                q = self._sqrt_dist[lo:hi] * s[lo:hi]
                coef = self._w.tensile[lo:hi] * self.model.f.f_prime(q)
                gsum = np.take(gp, cols[lo:hi])
                gsum += np.take(gp, rows[lo:hi])
                gsum *= self._w.dilat[lo:hi]
                coef += gsum
                f0 = coef * self._e0[lo:hi]
                coef *= self._e1[lo:hi]
            local = offsets[a : b + 1] - lo
            force[a:b, 0] = row_sums(f0, local)
            force[a:b, 1] = row_sums(coef, local)

        self._run_blocks(work)
        if body is not None:
            force = force + body
        if not np.isfinite(force).all():
            bad = int(np.flatnonzero(~np.isfinite(force).all(axis=1))[0])
            raise NumericalError(
                f"non-finite force density at node {bad} "
                f"(coordinates {tuple(self.grid.coords[bad])})"
            )
        return force, theta, s

    def _tensile_coef(self, lo, hi, s_slice):
        q = self._sqrt_dist[lo:hi] * s_slice
        with np.errstate(all="ignore"):
            return self._w.tensile[lo:hi] * self.model.f.f_prime(q)

    def _dilat_coef(self, lo, hi, gp):
        cols = self.table.cols[lo:hi]
        rows = self.table.rows[lo:hi]
        with np.errstate(all="ignore"):
            return self._w.dilat[lo:hi] * (gp[cols] + gp[rows])

    def _bond_force(self, coef_fn, s):
        force = np.empty((self.grid.n_nodes, 2))
        offsets = self.table.offsets

        def work(a, b):
            lo, hi = offsets[a], offsets[b]
            with np.errstate(all="ignore"):
                c = coef_fn(lo, hi, s[lo:hi])
                contrib = np.empty((hi - lo, 2))
                contrib[:, 0] = c * self._e0[lo:hi]
                contrib[:, 1] = c * self._e1[lo:hi]
            self._row_sums_into(force, contrib, a, b, lo)

        self._run_blocks(work)
        return force

    # -- potential densities --------------------------------------------------

    def potential_rows(self, u: np.ndarray, strains=None, theta=None):
        """Per-node potential densities (bond part, dilatational part).

        Multiplying each by the cell volume and summing gives the potential
        energy; the bond part alone, restricted to damaged nodes, is the
        crack energy release diagnostic.
        """
        s = self.bond_strains(u) if strains is None else strains
        if theta is None:
            theta = self.hydrostatic_strain(u, strains=s)
        bond = np.empty(self.grid.n_nodes)
        offsets = self.table.offsets

        def work(a, b):
            lo, hi = offsets[a], offsets[b]
            q = self._sqrt_dist[lo:hi] * s[lo:hi]
            with np.errstate(all="ignore"):
                vals = self._w.energy[lo:hi] * self.model.f.f(q)
            self._row_sums_into(bond, vals, a, b, lo)

        self._run_blocks(work)
        with np.errstate(all="ignore"):
            dil = self.omega * self.model.g.g(theta) / self.model.horizon**2
        return bond, dil

    def stretch_ratio(self, u: np.ndarray, strains=None) -> np.ndarray:
        """Per-bond S / S_c, with invisible bonds mapped to -inf.

        S_c = rbar / sqrt(d_ij), so the ratio is sqrt(d_ij) S / rbar.
        """
        s = self.bond_strains(u) if strains is None else strains
        ratio = self._sqrt_dist * s / self.model.f.rbar
        return np.where(self.table.visible, ratio, -np.inf)
