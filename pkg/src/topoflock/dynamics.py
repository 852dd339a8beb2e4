"""Explicit time integration of the alignment system and its reduced forms."""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import grid as sg
from . import operators as ops
from .errors import InstabilityError, VacuumError
from .kernel import LatticeKernel

DT_FLOOR = 1e-10
VELOCITY_EPS = 1e-12


@dataclass(frozen=True)
class State:
    t: float
    rho: np.ndarray
    u: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.rho.copy(), self.u.copy())


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    cfl: float = 0.4
    max_steps: int = 1_000_000
    dealias: bool = True
    diag_every: int = 10

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.max_steps < 1 or self.diag_every < 1:
            raise ValueError("max_steps and diag_every must be >= 1")


@dataclass
class StepReport:
    dt: float
    rhs_evals: int
    wall: float
    flags: tuple[str, ...] = ()


@dataclass
class RunResult:
    state: State
    history: list = field(default_factory=list)
    steps: int = 0
    rhs_evals: int = 0
    dt_min: float = np.inf
    dt_max: float = 0.0


def validate_state(s: State, ws: LatticeKernel) -> None:
    sg.check_scalar(s.rho, ws.grid)
    sg.check_vector(s.u, ws.grid)
    ws.check_density(s.rho)


def rhs(s: State, ws: LatticeKernel, dealias: bool = True, snap: ops.KernelSnapshot | None = None):
    """Return ``(drho, du, snap)``; ``snap`` is the kernel snapshot at ``s.rho``."""
    g = ws.grid
    rho, u = s.rho, s.u
    snap = snap if snap is not None else ops.snapshot(rho, ws)
    flux = rho * u
    adv = np.einsum("ij...,j...->i...", sg.jacobian(u, g), u)
    if dealias:
        flux = sg.dealias(flux, g)
        adv = sg.dealias(adv, g)
    drho = -sg.divergence(flux, g)
    du = -adv + ops.alignment_force(u, rho, ws, snap)
    if not (np.all(np.isfinite(drho)) and np.all(np.isfinite(du))):
        raise InstabilityError("non-finite right-hand side")
    return drho, du, snap


def diffusion_rate(rho: np.ndarray, ws: LatticeKernel) -> float:
    """``D_hat = Lambda rho_max (rho_min |Omega_0|)^(-tau/n) c_geom``."""
    p, n = ws.params, ws.dim
    lo, hi = float(np.min(rho)), float(np.max(rho))
    return p.Lambda * hi * (lo * ws.geometry.volume) ** (-p.tau / n) * ws.symbol_bound()


def cfl_dt(s: State, ws: LatticeKernel, cfg: SolverConfig) -> float:
    dx, alpha = ws.grid.spacing, ws.params.alpha
    umax = float(np.max(np.abs(s.u)))
    dt = cfg.cfl * min(dx / (umax + VELOCITY_EPS), dx ** alpha / diffusion_rate(s.rho, ws))
    if not dt >= DT_FLOOR:
        raise InstabilityError(f"time step {dt:.3e} below floor {DT_FLOOR:.0e}", time=s.t)
    return dt


def _filter(s: State, ws: LatticeKernel, on: bool) -> State:
    if not on:
        return s
    g = ws.grid
    return State(s.t, sg.dealias(s.rho, g), sg.dealias(s.u, g))


def _euler(s: State, dt: float, ws: LatticeKernel, dealias: bool) -> State:
    drho, du, _ = rhs(s, ws, dealias)
    return State(s.t + dt, s.rho + dt * drho, s.u + dt * du)


def step_ssprk3(s: State, dt: float, ws: LatticeKernel, dealias: bool = True) -> State:
    """Shu-Osher three-stage SSP Runge-Kutta step."""
    s1 = _filter(_euler(s, dt, ws, dealias), ws, dealias)
    e2 = _euler(s1, dt, ws, dealias)
    s2 = _filter(State(s.t + 0.5 * dt, 0.75 * s.rho + 0.25 * e2.rho, 0.75 * s.u + 0.25 * e2.u),
                 ws, dealias)
    e3 = _euler(s2, dt, ws, dealias)
    out = State(s.t + dt, s.rho / 3 + 2 * e3.rho / 3, s.u / 3 + 2 * e3.u / 3)
    out = _filter(out, ws, dealias)
    ws.check_density(out.rho)
    if not (np.all(np.isfinite(out.rho)) and np.all(np.isfinite(out.u))):
        raise InstabilityError("non-finite state after step")
    return out


Sink = Callable[[State, int], object]


def run(initial: State, ws: LatticeKernel, cfg: SolverConfig, sink: Sink | None = None,
        on_step: Callable[[StepReport], None] | None = None) -> RunResult:
    """Advance ``initial`` to ``cfg.t_end``.

    ``sink(state, step)`` is called at step 0, every ``diag_every`` steps and at
    the final step; non-None return values are collected in ``history``.
    Errors are re-raised with the step index and time of the failing step.
    """
    validate_state(initial, ws)
    res = RunResult(initial)
    s = initial

    def emit(state, step):
        if sink is not None:
            rec = sink(state, step)
            if rec is not None:
                res.history.append(rec)

    emit(s, 0)
    step = 0
    while s.t < cfg.t_end * (1 - 1e-14):
        if step >= cfg.max_steps:
            raise InstabilityError(f"max_steps={cfg.max_steps} exhausted at t={s.t:.6g}",
                                   step=step, time=s.t)
        t0 = _time.perf_counter()
        try:
            dt = min(cfl_dt(s, ws, cfg), cfg.t_end - s.t)
            s = step_ssprk3(s, dt, ws, cfg.dealias)
        except VacuumError as exc:
            raise VacuumError(f"step {step + 1}, t={s.t:.6g}: {exc}", step=step + 1, time=s.t,
                              value=exc.value) from exc
        except InstabilityError as exc:
            raise InstabilityError(f"step {step + 1}, t={s.t:.6g}: {exc}", step=step + 1,
                                   time=s.t) from exc
        step += 1
        res.rhs_evals += 3
        res.dt_min = min(res.dt_min, dt)
        res.dt_max = max(res.dt_max, dt)
        if on_step is not None:
            on_step(StepReport(dt, 3, _time.perf_counter() - t0))
        done = s.t >= cfg.t_end * (1 - 1e-14)
        if step % cfg.diag_every == 0 or done:
            emit(s, step)
    res.state = s
    res.steps = step
    return res


def momentum(s: State, g: sg.TorusGrid) -> np.ndarray:
    return np.array([g.integrate(s.rho * c) for c in s.u])


def galilean_normalize(s: State, g: sg.TorusGrid) -> tuple[State, np.ndarray]:
    """Remove the mean velocity ``P / M``; returns the new state and the removed velocity."""
    ubar = momentum(s, g) / g.integrate(s.rho)
    u = s.u - ubar.reshape((-1,) + (1,) * g.dim)
    return replace(s, u=u), ubar


def lift_shear(U: np.ndarray, rho0: np.ndarray, g2: sg.TorusGrid, t: float = 0.0) -> State:
    """2D state ``u = (U(x2), 0)``, ``rho = rho0(x2)`` from 1D profiles."""
    if g2.dim != 2:
        raise ValueError("shear data lives on a 2D grid")
    rho = np.broadcast_to(rho0[None, :], g2.shape).copy()
    u = g2.vector_zeros()
    u[0] = U[None, :]
    return State(t, rho, u)


class ShearSolver:
    """Reduced solver for parallel shear flocks ``u = (U(x2), 0)``, ``rho = rho0(x2)``.

    The density is frozen, so the 2D kernel weights collapse onto an N x N
    matrix on the transverse line, assembled once at construction.
    """

    def __init__(self, ws: LatticeKernel, rho0: np.ndarray):
        g = ws.grid
        if g.dim != 2:
            raise ValueError("shear reduction requires a 2D workspace")
        n = g.n
        self.ws = ws
        self.line = sg.TorusGrid(1, n, g.side_length)
        self.rho0 = np.asarray(rho0, dtype=float)
        if self.rho0.shape != (n,):
            raise ValueError(f"rho0 must have shape ({n},)")
        lifted = lift_shear(np.zeros(n), self.rho0, g)
        ws.check_density(lifted.rho)
        snap = ops.snapshot(lifted.rho, ws)
        # every x1 column carries identical weights; use x1 = 0
        wr = (snap.weights * snap.rho_shifted)[:, 0, :]
        mat = np.zeros((n, n))
        cols = (np.arange(n)[None, :] + ws.offsets.shifts[:, 1:2]) % n
        rows = np.broadcast_to(np.arange(n), cols.shape)
        np.add.at(mat, (rows, cols), wr)
        self.matrix = mat
        self.rowsum = mat.sum(axis=1)
        self._rho_lifted = lifted.rho

    def rhs(self, U: np.ndarray) -> np.ndarray:
        """``U_t = int phi(x, x+z) rho0(x+z) delta_z U dz``."""
        return self.matrix @ U - self.rowsum * U

    def cfl_dt(self, U: np.ndarray, cfg: SolverConfig) -> float:
        u = np.zeros((2,) + self.ws.grid.shape)
        u[0] = U[None, :]
        return cfl_dt(State(0.0, self._rho_lifted, u), self.ws, cfg)

    def step(self, U: np.ndarray, dt: float, dealias: bool = True) -> np.ndarray:
        f = (lambda v: sg.dealias(v, self.line)) if dealias else (lambda v: v)
        u1 = f(U + dt * self.rhs(U))
        u2 = f(0.75 * U + 0.25 * (u1 + dt * self.rhs(u1)))
        return f(U / 3 + 2 * (u2 + dt * self.rhs(u2)) / 3)

    def run(self, U0: np.ndarray, cfg: SolverConfig, sink: Callable[[float, np.ndarray, int], object] | None = None):
        """Advance ``U0`` to ``cfg.t_end`` with the full solver's step-size rule."""
        U, t, step, hist = np.asarray(U0, dtype=float).copy(), 0.0, 0, []
        if sink is not None:
            hist.append(sink(t, U, 0))
        while t < cfg.t_end * (1 - 1e-14):
            if step >= cfg.max_steps:
                raise InstabilityError("max_steps exhausted", step=step, time=t)
            dt = min(self.cfl_dt(U, cfg), cfg.t_end - t)
            U = self.step(U, dt, cfg.dealias)
            t += dt
            step += 1
            if not np.all(np.isfinite(U)):
                raise InstabilityError("non-finite shear profile", step=step, time=t)
            if sink is not None and (step % cfg.diag_every == 0 or t >= cfg.t_end * (1 - 1e-14)):
                hist.append(sink(t, U, step))
        return U, [h for h in hist if h is not None]
