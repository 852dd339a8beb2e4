import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from topoflock.errors import VacuumError
from topoflock.grid import TorusGrid
from topoflock.kernel import (CommGeometry, KernelParams, LatticeKernel, OffsetTable, bump_eval,
                              comm_mass, kernel_eval, lattice_zeta_constant, rotation, topo_distance)

from conftest import random_state


def test_params_validation():
    for bad in (dict(alpha=0), dict(alpha=2), dict(tau=-1), dict(r0=0), dict(Lambda=0), dict(kappa=1)):
        with pytest.raises(ValueError):
            KernelParams(**bad)
    assert KernelParams(tau=0).metric


def test_bump_examples():
    p = KernelParams(r0=0.8, Lambda=2.0)
    assert bump_eval(0.0, p) == 2.0
    assert bump_eval(0.8, p) == 0.0
    assert bump_eval(0.6, p) == pytest.approx(1.0, abs=1e-15)
    r = np.linspace(0, 1, 2001)
    h = bump_eval(r, p)
    assert np.all(np.diff(h) <= 1e-15)
    # C^1: one-sided slopes agree at the junctions
    eps = 1e-7
    for r0 in (0.4, 0.8):
        left = (bump_eval(r0, p) - bump_eval(r0 - eps, p)) / eps
        right = (bump_eval(r0 + eps, p) - bump_eval(r0, p)) / eps
        assert abs(left - right) < 1e-5


def test_geometry_tables():
    g1 = CommGeometry.build(1)
    assert g1.volume_weights.sum() == pytest.approx(1.0, abs=1e-12)
    for kappa in (0.3, 0.5, 0.9):
        g2 = CommGeometry.build(2, kappa, cells=8)
        assert g2.volume_weights.sum() == pytest.approx(kappa / 2, abs=1e-12)
        assert np.max(np.abs(g2.boundary_weights @ g2.boundary_normals)) < 1e-10
        # reflection xi -> e1 - xi maps both node sets onto themselves
        refl = np.array([1.0, 0.0]) - g2.volume_nodes
        d = np.min(np.linalg.norm(refl[:, None] - g2.volume_nodes[None], axis=-1), axis=1)
        assert np.max(d) < 1e-12
        bref = np.array([1.0, 0.0]) - g2.boundary_nodes
        d = np.min(np.linalg.norm(bref[:, None] - g2.boundary_nodes[None], axis=-1), axis=1)
        assert np.max(d) < 1e-12
        assert g2.boundary_weights.sum() == pytest.approx(4 * np.hypot(0.5, kappa / 2), rel=1e-12)


def test_rotation_properties(rng):
    for _ in range(50):
        z = rng.standard_normal(2)
        U = rotation(z)
        assert np.allclose(U @ [1, 0], z / np.linalg.norm(z), atol=1e-15)
        assert np.allclose(U.T @ U, np.eye(2), atol=1e-14)
        th = rng.standard_normal(2)
        assert np.allclose(rotation(-z) @ th, -(U @ th), atol=1e-14)
    assert rotation([-0.3])[0, 0] == -1


def test_comm_mass_examples():
    # linear interpolation of lattice values costs O(dx^2): refine the lattice
    g = TorusGrid(1, 4096)
    geom = CommGeometry.build(1, cells=64)
    rho = np.full(g.shape, 2.5)
    assert comm_mass(rho, g, geom, 10, [0.3]) == pytest.approx(2.5 * 0.3, rel=1e-12)
    (x,) = g.coords
    rho = 1 + 0.5 * np.sin(x)
    exact = integrate.quad(lambda s: 1 + 0.5 * np.sin(s), 0, 0.3)[0]
    assert comm_mass(rho, g, geom, 0, [0.3]) == pytest.approx(exact, abs=1e-6)


def test_comm_mass_symmetry(rng):
    for dim, n in ((1, 64), (2, 32)):
        g = TorusGrid(dim, n)
        geom = CommGeometry.build(dim, 0.5, cells=8)
        rho, _ = random_state(g, rng)
        for _ in range(20):
            i = rng.integers(0, n, size=dim)
            j = rng.integers(-3, 4, size=dim)
            if not np.any(j):
                continue
            a = comm_mass(rho, g, geom, i, j * g.spacing)
            b = comm_mass(rho, g, geom, (i + j) % n, -j * g.spacing)
            assert a == pytest.approx(b, rel=1e-12)


def test_topo_distance_examples(rng):
    g1 = TorusGrid(1, 64)
    geom1 = CommGeometry.build(1)
    assert topo_distance(np.ones(64), g1, geom1, 3, [0.4]) == pytest.approx(0.4, rel=1e-12)
    g2 = TorusGrid(2, 32)
    geom2 = CommGeometry.build(2, 0.5)
    z = np.array([0.3, -0.5])
    assert topo_distance(np.ones(g2.shape), g2, geom2, [1, 2], z) == pytest.approx(np.linalg.norm(z) / 2, rel=1e-12)
    # monotone in rho
    rho, _ = random_state(g2, rng)
    assert topo_distance(rho, g2, geom2, [4, 4], z) <= topo_distance(rho + 0.1, g2, geom2, [4, 4], z)


def test_topo_distance_general_oracle():
    g = TorusGrid(2, 1024)
    geom = CommGeometry.build(2, 0.5, cells=32)
    x, y = g.coords
    rho = 1 + 0.3 * np.cos(x) * np.sin(y)
    z = np.array([0.5, 0.2])
    node = np.array([5, 9])
    U = rotation(z)
    r = np.linalg.norm(z)
    a, b = np.array([0.5, -0.25]), np.array([0.5, 0.25])

    def integrand(t, s):
        pt = node * g.spacing + r * U @ (s * a + t * b)
        return 1 + 0.3 * np.cos(pt[0]) * np.sin(pt[1])
    jac = r ** 2 * abs(np.linalg.det(np.stack([a, b])))
    exact = integrate.dblquad(integrand, 0, 1, 0, 1, epsabs=1e-12)[0] * jac
    d = topo_distance(rho, g, geom, node, z)
    assert d == pytest.approx(np.sqrt(exact), rel=1e-6)


def test_comm_mass_vacuum():
    g = TorusGrid(1, 32)
    rho = np.ones(32)
    rho[2] = -0.1
    with pytest.raises(VacuumError):
        comm_mass(rho, g, CommGeometry.build(1), 1, [0.5])


def test_kernel_eval_examples(rng):
    g = TorusGrid(1, 64)
    geom = CommGeometry.build(1)
    p0 = KernelParams(alpha=0.7, tau=0.0)
    rho, _ = random_state(g, rng)
    z = 0.2
    assert kernel_eval(rho, g, geom, 5, [z], p0) == pytest.approx(bump_eval(z, p0) / z ** 1.7, rel=1e-14)
    p = KernelParams(alpha=0.7, tau=1.0)
    c = 1.7
    expect = bump_eval(z, p) / (z ** 1.7 * c ** 1.0)
    assert kernel_eval(np.full(64, c), g, geom, 5, [z], p) == pytest.approx(expect, rel=1e-12)
    assert kernel_eval(rho, g, geom, 5, [p.r0], p) == 0.0
    j = 4
    a = kernel_eval(rho, g, geom, 7, [j * g.spacing], p)
    b = kernel_eval(rho, g, geom, 7 + j, [-j * g.spacing], p)
    assert a == pytest.approx(b, rel=1e-12)


def test_kernel_bounds(rng):
    g = TorusGrid(2, 32)
    geom = CommGeometry.build(2, 0.5)
    p = KernelParams(alpha=1.0, tau=1.0, r0=1.2)
    rho, _ = random_state(g, rng)
    lo, hi = rho.min(), rho.max()
    for _ in range(50):
        z = rng.uniform(-0.4, 0.4, size=2)
        r = np.linalg.norm(z)
        if r >= p.r0 / 2 or r == 0:
            continue
        phi = kernel_eval(rho, g, geom, rng.integers(0, 32, size=2), z, p)
        vol = geom.volume
        assert p.Lambda * (hi * vol) ** -0.5 * r ** -3 <= phi * (1 + 1e-12)
        assert phi <= p.Lambda * (lo * vol) ** -0.5 * r ** -3 * (1 + 1e-12)


def test_offset_table_examples():
    g = TorusGrid(1, 64)
    t = OffsetTable.build(g, KernelParams(r0=0.5))
    assert sorted(t.shifts[:, 0]) == [-5, -4, -3, -2, -1, 1, 2, 3, 4, 5]
    assert np.all(t.shifts[t.partner] == -t.shifts)
    with pytest.raises(ValueError):
        OffsetTable.build(g, KernelParams(r0=0.15))
    g2 = TorusGrid(2, 128)
    t2 = OffsetTable.build(g2, KernelParams(r0=1.0))
    est = np.pi / g2.spacing ** 2
    assert abs(len(t2) - est) / est < 0.05


def test_mass_refinement_order():
    g = TorusGrid(2, 256)
    x, y = g.coords
    rho = 1 + 0.3 * np.sin(x + 0.3) * np.cos(y)
    node, z = np.array([3, 7]), np.array([0.6, 0.35])
    vals = [comm_mass(rho, g, CommGeometry.build(2, 0.5, cells=m), node, z) for m in (4, 8, 16, 32)]
    e = np.abs(np.diff(vals))
    assert np.all(np.log2(e[:-1] / e[1:]) > 1.8)


def test_lattice_masses_match_pointwise(ws2d, rng):
    g = ws2d.grid
    rho, _ = random_state(g, rng)
    masses = ws2d.masses(rho)
    for _ in range(20):
        k = rng.integers(len(ws2d.offsets))
        node = rng.integers(0, g.n, size=2)
        ref = comm_mass(rho, g, ws2d.geometry, node, ws2d.offsets.vectors[k])
        assert masses[(k,) + tuple(node)] == pytest.approx(ref, rel=1e-12)


def test_zeta_constants():
    assert lattice_zeta_constant(1, 1.0) == pytest.approx(-1.0)        # 2 zeta(0)
    assert lattice_zeta_constant(2, 1.0) < 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.8), st.floats(0.0, 2.0))
def test_lattice_weights_positive_and_symmetric(alpha, tau):
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams(alpha=alpha, tau=tau))
    (x,) = g.coords
    rho = 1 + 0.5 * np.cos(x)
    w = ws.weights(rho)
    assert np.all(w > 0)
    for i, j in enumerate(ws.offsets.partner):
        back = np.roll(w[j], -ws.offsets.shifts[i][0])
        assert np.allclose(w[i], back, rtol=1e-12)
