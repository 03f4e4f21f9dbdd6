"""Force assembler vs scalar reference loops, symmetry and invariance checks."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from perifrac import (
    DilatationalPotential,
    DomainSpec,
    InfluenceFunction,
    MaterialModel,
    NumericalError,
    TensilePotential,
    boundary_weight,
    build_grid,
    build_neighbors,
    influence_moment,
)
from perifrac.errors import ConfigError
from perifrac.operators import ForceAssembler, bond_strain, hydrostatic_strain


def toy_model(eps, g_kind="quadratic", dimension=2):
    """Order-one material so strains of order one exercise the potentials."""
    if g_kind == "quadratic":
        g = DilatationalPotential.quadratic(cbar=1.0)
    else:
        g = DilatationalPotential.convex_concave(scale=1.0, gbeta=0.5)
    return MaterialModel(
        rho=1.0,
        horizon=eps,
        influence=InfluenceFunction.linear_decay(),
        f=TensilePotential(c=1.0, beta=0.5),
        g=g,
        dimension=dimension,
    )


def small_setup(n=7, h=0.1, eps=0.25, g_kind="quadratic", cracks=(), threads=1):
    spec = DomainSpec(bounds=(0.0, (n - 1) * h, 0.0, (n - 1) * h), cracks=cracks)
    grid = build_grid(spec, h)
    table = build_neighbors(grid, eps, cracks)
    model = toy_model(eps, g_kind)
    omega = boundary_weight(grid, spec, "indicator", eps)
    asm = ForceAssembler(grid, table, model, omega, threads=threads)
    return grid, table, model, omega, asm


def random_field(n_nodes, seed, scale=5e-3):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((n_nodes, 2))


def loop_forces(u, grid, table, omega, model):
    """Independent per-bond python loop for both force parts."""
    eps = model.horizon
    vol = grid.cell_volume
    norm = 1.0 / (eps**2 * math.pi)
    n = grid.n_nodes
    theta = np.array(
        [hydrostatic_strain(u, i, grid, table, omega, model) for i in range(n)]
    )
    lt = np.zeros((n, 2))
    ld = np.zeros((n, 2))
    for i in range(n):
        for k in range(int(table.offsets[i]), int(table.offsets[i + 1])):
            if not table.visible[k]:
                continue
            j = int(table.cols[k])
            d = float(table.dist[k])
            e = table.unit[k]
            w = omega[i] * omega[j] * model.influence(d / eps) * table.vbar[k] * vol
            s = bond_strain(u, i, j, grid)
            q = math.sqrt(d) * s
            lt[i] += 2.0 * norm * w / (eps * d) * math.sqrt(d) * model.f.f_prime(q) * e
            ld[i] += (
                norm
                * w
                / eps**2
                * (model.g.g_prime(theta[j]) + model.g.g_prime(theta[i]))
                * e
            )
    return lt, ld, theta


def test_zero_displacement_is_force_free():
    grid, table, model, omega, asm = small_setup()
    u = np.zeros((grid.n_nodes, 2))
    assert_array_equal(asm.bond_strains(u), 0.0)
    assert_array_equal(asm.hydrostatic_strain(u), 0.0)
    assert_array_equal(asm.tensile_force(u), 0.0)
    assert_array_equal(asm.dilatational_force(u), 0.0)


def test_uniform_translation_is_force_free():
    grid, table, model, omega, asm = small_setup()
    u = np.tile([0.003, -0.001], (grid.n_nodes, 1))
    assert_array_equal(asm.bond_strains(u), 0.0)
    force, theta, strains = asm.assemble_total_force(u)
    assert_array_equal(force, 0.0)
    assert_array_equal(theta, 0.0)


def test_rigid_rotation_gives_uniform_second_order_strain():
    # u = (R - I) x gives S = cos(phi) - 1 for every bond, exactly.
    grid, table, model, omega, asm = small_setup()
    phi = 1e-3
    rot = np.array(
        [[math.cos(phi) - 1.0, -math.sin(phi)], [math.sin(phi), math.cos(phi) - 1.0]]
    )
    u = grid.coords @ rot.T
    s = asm.bond_strains(u)
    assert_allclose(s, math.cos(phi) - 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("g_kind", ["quadratic", "convex-concave"])
@pytest.mark.parametrize(
    "cracks", [(), (((0.31, 0.05), (0.31, 0.55)),)], ids=["plain", "cracked"]
)
def test_assembler_matches_scalar_loops(g_kind, cracks):
    grid, table, model, omega, asm = small_setup(g_kind=g_kind, cracks=cracks)
    u = random_field(grid.n_nodes, seed=42, scale=0.05)
    if cracks:
        assert not table.visible.all()

    theta = asm.hydrostatic_strain(u)
    for i in range(grid.n_nodes):
        ref = hydrostatic_strain(u, i, grid, table, omega, model)
        assert theta[i] == pytest.approx(ref, rel=1e-12, abs=1e-15)

    lt_ref, ld_ref, _ = loop_forces(u, grid, table, omega, model)
    lt = asm.tensile_force(u)
    ld = asm.dilatational_force(u)
    scale = np.abs(lt_ref).max()
    assert_allclose(lt, lt_ref, rtol=1e-12, atol=1e-12 * scale)
    assert_allclose(ld, ld_ref, rtol=1e-12, atol=1e-12 * np.abs(ld_ref).max())
    total, _, _ = asm.assemble_total_force(u)
    assert_allclose(total, lt_ref + ld_ref, rtol=1e-12, atol=1e-12 * scale)


def test_invisible_bonds_carry_no_weight():
    cracks = (((0.31, 0.05), (0.31, 0.55)),)
    grid, table, model, omega, asm = small_setup(cracks=cracks)
    cut = ~table.visible
    assert cut.any()
    assert_array_equal(asm._w.theta[cut], 0.0)
    assert_array_equal(asm._w.tensile[cut], 0.0)
    assert_array_equal(asm._w.dilat[cut], 0.0)
    assert_array_equal(asm._w.energy[cut], 0.0)


def test_expansion_theta_approaches_continuum():
    # For u = a x the bond strain is a everywhere, so at interior nodes
    # theta -> a * eps * Jbar_{-1} as the mesh refines.
    a = 0.01
    eps = 0.2
    spec = DomainSpec(bounds=(0.0, 1.0, 0.0, 1.0))
    model = toy_model(eps)
    target = a * eps * influence_moment(model.influence, -1.0, 2)
    errs = []
    for h in (eps / 4, eps / 8):
        grid = build_grid(spec, h)
        table = build_neighbors(grid, eps)
        omega = boundary_weight(grid, spec, "indicator", eps)
        asm = ForceAssembler(grid, table, model, omega)
        u = a * grid.coords
        s = asm.bond_strains(u)
        assert_allclose(s, a, rtol=1e-12)
        theta = asm.hydrostatic_strain(u)
        center = grid.node_id(round(0.5 / h), round(0.5 / h))
        errs.append(abs(theta[center] - target) / target)
    assert errs[0] < 0.03
    assert errs[1] < 0.01
    assert errs[1] < errs[0]


def test_expansion_force_cancels_at_interior_nodes():
    grid, table, model, omega, asm = small_setup(n=11, h=0.1, eps=0.25)
    u = 0.02 * grid.coords
    force, theta, s = asm.assemble_total_force(u)
    mags = np.hypot(force[:, 0], force[:, 1])
    center = grid.node_id(5, 5)
    # Symmetric neighborhoods cancel; boundary nodes do not.
    assert mags[center] <= 1e-9 * mags.max()
    assert mags.max() > 0


@pytest.mark.parametrize("g_kind", ["quadratic", "convex-concave"])
def test_forces_conserve_momentum(g_kind):
    grid, table, model, omega, asm = small_setup(g_kind=g_kind)
    u = random_field(grid.n_nodes, seed=3, scale=0.05)
    for f in (asm.tensile_force(u), asm.dilatational_force(u)):
        total = f.sum(axis=0)
        assert np.abs(total).max() <= 1e-12 * np.abs(f).sum()


def test_body_force_is_added():
    grid, table, model, omega, asm = small_setup()
    u = random_field(grid.n_nodes, seed=9, scale=0.02)
    b = random_field(grid.n_nodes, seed=10, scale=1.0)
    bare, theta, s = asm.assemble_total_force(u)
    loaded, _, _ = asm.assemble_total_force(u, body=b)
    assert_array_equal(loaded, bare + b)


def test_thread_count_does_not_change_bits():
    grid, table, model, omega, asm1 = small_setup(n=12, h=0.05, eps=0.15)
    u = random_field(grid.n_nodes, seed=17, scale=0.05)
    f1, t1, s1 = asm1.assemble_total_force(u)
    b1, d1 = asm1.potential_rows(u)
    for threads in (4, 8):
        asm = ForceAssembler(grid, table, model, omega, threads=threads)
        f, t, s = asm.assemble_total_force(u)
        b, d = asm.potential_rows(u)
        asm.close()
        assert_array_equal(f, f1)
        assert_array_equal(t, t1)
        assert_array_equal(s, s1)
        assert_array_equal(b, b1)
        assert_array_equal(d, d1)


def test_nonfinite_forces_are_reported():
    grid, table, model, omega, asm = small_setup()
    u = np.zeros((grid.n_nodes, 2))
    u[5, 0] = np.inf
    with pytest.raises(NumericalError, match="node"):
        asm.assemble_total_force(u)


def test_potential_rows_vs_direct_sum():
    grid, table, model, omega, asm = small_setup(g_kind="convex-concave")
    u = random_field(grid.n_nodes, seed=11, scale=0.05)
    bond, dil = asm.potential_rows(u)
    eps = model.horizon
    vol = grid.cell_volume
    norm = 1.0 / (eps**2 * math.pi)
    theta = asm.hydrostatic_strain(u)
    for i in (0, grid.n_nodes // 2, grid.n_nodes - 1):
        acc = 0.0
        for k in range(int(table.offsets[i]), int(table.offsets[i + 1])):
            if not table.visible[k]:
                continue
            j = int(table.cols[k])
            d = float(table.dist[k])
            s = bond_strain(u, i, j, grid)
            acc += (
                norm
                * omega[i]
                * omega[j]
                * model.influence(d / eps)
                / eps
                * model.f.f(math.sqrt(d) * s)
                * table.vbar[k]
                * vol
            )
        assert bond[i] == pytest.approx(acc, rel=1e-12, abs=1e-18)
        assert dil[i] == pytest.approx(
            omega[i] * model.g.g(theta[i]) / eps**2, rel=1e-12, abs=1e-18
        )


def test_stretch_ratio_masks_invisible_bonds():
    cracks = (((0.31, 0.05), (0.31, 0.55)),)
    grid, table, model, omega, asm = small_setup(cracks=cracks)
    u = 0.05 * grid.coords
    ratio = asm.stretch_ratio(u)
    cut = ~table.visible
    assert np.all(np.isneginf(ratio[cut]))
    live = ratio[~cut]
    expect = np.sqrt(table.dist[~cut]) * 0.05 / model.f.rbar
    assert_allclose(live, expect, rtol=1e-12)


def test_three_dimensional_model_rejected():
    grid, table, model, omega, _ = small_setup()
    model3 = toy_model(model.horizon, dimension=3)
    with pytest.raises(ConfigError):
        ForceAssembler(grid, table, model3, omega)


def test_omega_shape_guard():
    grid, table, model, omega, _ = small_setup()
    with pytest.raises(ConfigError):
        ForceAssembler(grid, table, model, omega[:-1])
