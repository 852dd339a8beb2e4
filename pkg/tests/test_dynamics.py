import numpy as np
import pytest

from topoflock import dynamics as dyn
from topoflock import operators as ops
from topoflock.dynamics import ShearSolver, SolverConfig, State
from topoflock.errors import InstabilityError, VacuumError
from topoflock.grid import TorusGrid
from topoflock.kernel import KernelParams, LatticeKernel

import reference
from conftest import random_state


def smooth_state(g):
    (x,) = g.coords
    return State(0.0, 1 + 0.3 * np.cos(x) + 0.1 * np.sin(2 * x), (0.5 * np.sin(x) + 0.2 * np.cos(3 * x))[None])


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(t_end=0)
    with pytest.raises(ValueError):
        SolverConfig(t_end=1, cfl=1.5)


def test_rhs_steady_states(ws2d, rng):
    g = ws2d.grid
    s = State(0.0, np.full(g.shape, 1.3), np.ones((2,) + g.shape) * np.array([0.2, -0.4])[:, None, None])
    drho, du, _ = dyn.rhs(s, ws2d)
    assert np.max(np.abs(drho)) < 1e-13 and np.max(np.abs(du)) < 1e-13
    rho, _ = random_state(g, rng)
    drho, du, _ = dyn.rhs(State(0.0, rho, g.vector_zeros()), ws2d)
    assert not np.any(drho) and not np.any(du)


def test_rhs_against_reference(rng):
    for g, p in ((TorusGrid(1, 32), KernelParams(alpha=0.8, tau=1.0)),
                 (TorusGrid(2, 16), KernelParams(alpha=1.0, tau=0.5, r0=1.2))):
        ws = LatticeKernel(g, p)
        rho, u = random_state(g, rng)
        drho, du, _ = dyn.rhs(State(0.0, rho, u), ws)
        ref_rho, ref_u = reference.rhs(rho, u, ws)
        assert np.max(np.abs(drho - ref_rho)) < 1e-12
        assert np.max(np.abs(du - ref_u)) < 1e-12


def test_rhs_vacuum(ws1d):
    rho = np.ones(ws1d.grid.shape)
    rho[5] = 1e-9
    with pytest.raises(VacuumError):
        dyn.rhs(State(0.0, rho, ws1d.grid.vector_zeros()), ws1d)


def test_cfl_examples():
    cfg = SolverConfig(t_end=1.0)
    g = TorusGrid(1, 128)
    ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=0.0))
    s = State(0.0, np.ones(g.shape), g.vector_zeros())
    dt = dyn.cfl_dt(s, ws, cfg)
    assert dt == pytest.approx(cfg.cfl * g.spacing / dyn.diffusion_rate(s.rho, ws))
    # doubling the mean density halves the metric diffusion budget
    s2 = State(0.0, 2 * np.ones(g.shape), g.vector_zeros())
    assert dyn.cfl_dt(s2, ws, cfg) == pytest.approx(dt / 2, rel=1e-12)
    # doubling N at alpha = 1 roughly halves dt
    g2 = TorusGrid(1, 256)
    ws2 = LatticeKernel(g2, KernelParams(alpha=1.0, tau=0.0))
    dt2 = dyn.cfl_dt(State(0.0, np.ones(g2.shape), g2.vector_zeros()), ws2, cfg)
    assert 0.4 < dt2 / dt < 0.6


def test_dt_floor():
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams())
    s = State(0.0, np.ones(g.shape), np.full((1, 64), 1e12))
    with pytest.raises(InstabilityError):
        dyn.cfl_dt(s, ws, SolverConfig(t_end=1.0))


def test_step_steady():
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams())
    s = State(0.0, np.full(g.shape, 0.7), np.full((1, 64), 0.25))
    out = dyn.step_ssprk3(s, 0.01, ws)
    assert np.max(np.abs(out.rho - s.rho)) < 1e-13 and np.max(np.abs(out.u - s.u)) < 1e-13


def test_step_local_error_order():
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams())
    s = smooth_state(g)

    def fine(dt, k=400):
        cur = s
        for _ in range(k):
            cur = dyn._euler(cur, dt / k, ws, True)
        return cur

    errs = []
    for dt in (4e-3, 2e-3):
        a = dyn.step_ssprk3(s, dt, ws, dealias=False)
        # forward Euler at two step counts, Richardson-extrapolated to O(h^2)
        e1, e2 = fine(dt, 200), fine(dt, 400)
        ref = 2 * e2.u - e1.u
        errs.append(np.max(np.abs(a.u - ref)))
    assert np.log2(errs[0] / errs[1]) > 2.5


def test_step_mass(ws1d):
    s = smooth_state(ws1d.grid)
    out = dyn.step_ssprk3(s, 1e-3, ws1d)
    g = ws1d.grid
    assert g.integrate(out.rho) == pytest.approx(g.integrate(s.rho), rel=1e-12)


def test_run_steady_and_deterministic(ws1d):
    g = ws1d.grid
    steady = State(0.0, np.full(g.shape, 1.1), np.full((1,) + g.shape, -0.2))
    res = dyn.run(steady, ws1d, SolverConfig(t_end=0.1))
    assert np.max(np.abs(res.state.u - steady.u)) < 1e-12
    assert res.state.t == pytest.approx(0.1)
    cfg = SolverConfig(t_end=0.05)
    a = dyn.run(smooth_state(g), ws1d, cfg).state
    b = dyn.run(smooth_state(g), ws1d, cfg).state
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.u, b.u)


def test_run_temporal_self_convergence(ws1d):
    g = ws1d.grid
    s = smooth_state(g)
    a = dyn.run(s, ws1d, SolverConfig(t_end=0.2, cfl=0.4)).state
    b = dyn.run(s, ws1d, SolverConfig(t_end=0.2, cfl=0.2)).state
    # spatial error of this run is ~1e-5 (see the convergence study)
    assert np.max(np.abs(a.u - b.u)) < 1e-6


def test_run_sink_cadence(ws1d):
    seen = []
    res = dyn.run(smooth_state(ws1d.grid), ws1d, SolverConfig(t_end=0.05, diag_every=3),
                  lambda s, k: seen.append(k) or k)
    assert seen[0] == 0 and seen[-1] == res.steps
    assert all(k % 3 == 0 for k in seen[:-1])
    assert res.history == seen


def test_run_reports_step_on_vacuum():
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams(), vacuum_threshold=0.8)
    (x,) = g.coords
    s = State(0.0, np.ones(g.shape), (0.5 * np.sin(x))[None])
    with pytest.raises(VacuumError) as info:
        dyn.run(s, ws, SolverConfig(t_end=2.0))
    assert info.value.step > 0 and info.value.time > 0


def test_galilean_normalize(ws1d, rng):
    g = ws1d.grid
    s = State(0.0, np.ones(g.shape) * 2.0, np.full((1,) + g.shape, 0.4))
    out, ubar = dyn.galilean_normalize(s, g)
    assert np.max(np.abs(out.u)) < 1e-15 and ubar[0] == pytest.approx(0.4)
    rho, u = random_state(g, rng)
    once, _ = dyn.galilean_normalize(State(0.0, rho, u), g)
    twice, ub2 = dyn.galilean_normalize(once, g)
    assert np.max(np.abs(twice.u - once.u)) < 1e-15 and abs(ub2[0]) < 1e-15
    assert abs(dyn.momentum(once, g)[0]) < 1e-13


@pytest.fixture(scope="module")
def shear_ws():
    return LatticeKernel(TorusGrid(2, 16), KernelParams(alpha=1.0, tau=1.0, r0=1.2))


def test_shear_constant_profile(shear_ws):
    y = shear_ws.grid.axes[1]
    solver = ShearSolver(shear_ws, 1 + 0.3 * np.cos(y))
    assert np.max(np.abs(solver.rhs(np.full(16, 0.4)))) < 1e-13


def test_shear_metric_matches_diffusion():
    g = TorusGrid(2, 32)
    ws = LatticeKernel(g, KernelParams(alpha=0.8, tau=0.0, r0=1.2))
    y = g.axes[1]
    U = np.sin(y) + 0.2 * np.cos(3 * y)
    solver = ShearSolver(ws, np.ones(32))
    full = ops.topo_diffusion(np.broadcast_to(U, g.shape).copy(), np.ones(g.shape), ws)
    assert np.max(np.abs(solver.rhs(U) - full[0])) < 1e-12


def test_shear_matches_full_solver(shear_ws):
    g = shear_ws.grid
    y = g.axes[1]
    U, rho0 = 0.5 * np.sin(y), 1 + 0.3 * np.cos(y)
    cfg = SolverConfig(t_end=0.1)
    full = dyn.run(dyn.lift_shear(U, rho0, g), shear_ws, cfg).state
    red, hist = ShearSolver(shear_ws, rho0).run(U, cfg, lambda t, v, k: np.max(np.abs(v)))
    assert np.max(np.abs(full.u[0] - red[None, :])) < 1e-13
    assert np.max(np.abs(full.u[1])) == 0.0
    assert np.all(np.diff(hist) <= 1e-15)


def test_shear_vacuum(shear_ws):
    with pytest.raises(VacuumError):
        ShearSolver(shear_ws, np.zeros(16))
