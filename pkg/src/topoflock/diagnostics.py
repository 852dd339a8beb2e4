"""Per-record diagnostics, identity residuals, decay fits and CSV output."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy import spatial, stats

from . import grid as sg
from . import operators as ops
from .dynamics import State, momentum, rhs
from .kernel import LatticeKernel

EXACT_AMPLITUDE_MAX_N = 128


@dataclass
class DiagRecord:
    t: float
    mass: float
    momentum: tuple
    energy: float
    dissipation: float
    energy_residual: float
    amplitude: float
    rho_min: float
    rho_max: float
    grad_u_inf: float
    grad_rho_inf: float
    e_inf: float
    Y_m: float
    e_eq_residual: float
    flocking_residual: float

    def row(self) -> list[float]:
        vals = astuple(self)
        return [vals[0], vals[1], *self.momentum, *vals[3:]]


def columns(dim: int) -> list[str]:
    names = [f.name for f in fields(DiagRecord)]
    i = names.index("momentum")
    return names[:i] + [f"momentum_{k + 1}" for k in range(dim)] + names[i + 1:]


def auto_stride(g: sg.TorusGrid) -> int:
    if g.dim == 1 or g.n <= EXACT_AMPLITUDE_MAX_N:
        return 1
    return g.n // EXACT_AMPLITUDE_MAX_N


def _diameter(points: np.ndarray) -> float:
    pts = np.unique(points, axis=0)
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] == 1:
        return float(pts[-1, 0] - pts[0, 0])
    try:
        pts = pts[spatial.ConvexHull(pts).vertices]
    except spatial.QhullError:
        pass  # collinear clouds (e.g. shear flows): fall through to the pair scan
    best = 0.0
    for i in range(0, len(pts), 512):
        d = spatial.distance.cdist(pts[i:i + 512], pts)
        best = max(best, float(d.max()))
    return best


def amplitude(u: np.ndarray, g: sg.TorusGrid, stride: int | None = None) -> float:
    """``max_{x,y} |u(x) - u(y)|`` over grid nodes (every ``stride``-th node per axis).

    The maximal pair lies on the convex hull of the velocity cloud, so the
    scan over hull vertices is exact for the sampled set.
    """
    stride = auto_stride(g) if stride is None else stride
    sub = u[(slice(None),) + (slice(None, None, stride),) * g.dim]
    return _diameter(sub.reshape(g.dim, -1).T)


def amplitude_error_bound(u: np.ndarray, g: sg.TorusGrid, stride: int) -> float:
    """Lipschitz bound on ``amplitude(u) - amplitude(u, stride)``."""
    return 2.0 * grad_inf(u, g) * stride * g.spacing


def grad_inf(u: np.ndarray, g: sg.TorusGrid) -> float:
    """Max over nodes of the Frobenius norm of ``grad u``; ``u`` is (components, *grid)."""
    jac = np.stack([sg.gradient(c, g) for c in u])
    return float(np.sqrt(np.max(np.sum(jac ** 2, axis=(0, 1)))))


def energy_and_dissipation(s: State, ws: LatticeKernel, snap: ops.KernelSnapshot | None = None):
    """``E = 1/2 int rho |u|^2`` and ``D = 1/2 sum_{x,z} W rho rho' |delta_z u|^2 dx^n``.

    ``D`` uses the alignment-force weights, so ``int rho u . C = -D`` holds at
    the quadrature level.
    """
    g = ws.grid
    energy = 0.5 * g.integrate(s.rho * np.sum(s.u ** 2, axis=0))
    snap = snap if snap is not None else ops.snapshot(s.rho, ws)
    du2 = sum((ws.shifted(c) - c) ** 2 for c in s.u)
    diss = 0.5 * g.cell_volume * float(np.sum(snap.weights * snap.rho_shifted * s.rho * du2))
    return energy, diss


def e_time_derivative(s: State, drho: np.ndarray, du: np.ndarray, ws: LatticeKernel,
                      snap: ops.KernelSnapshot) -> np.ndarray:
    """Chain rule ``e_t = div u_t + L(rho_t) + L_{phi_t} rho``."""
    g, p, n = ws.grid, ws.params, ws.dim
    out = sg.divergence(du, g) + ops.topo_diffusion(drho, s.rho, ws, snap)
    if p.tau > 0:
        dmass = ws.domain_integrals(drho)
        dweights = -(p.tau / n) * snap.weights * dmass / snap.masses
        out = out + np.sum(dweights * (snap.rho_shifted - s.rho), axis=0)
    return out


def e_equation_residual(s: State, drho: np.ndarray, du: np.ndarray, ws: LatticeKernel,
                        snap: ops.KernelSnapshot | None = None) -> float:
    """L2 norm of ``e_t + div(u e) - (div u)^2 + Tr((grad u)^2) - T``."""
    g = ws.grid
    snap = snap if snap is not None else ops.snapshot(s.rho, ws)
    e = ops.compute_e(s.u, s.rho, ws, snap)
    jac = sg.jacobian(s.u, g)
    div = np.trace(jac)
    tr2 = np.einsum("ij...,ji...->...", jac, jac)
    source = div ** 2 - tr2 + ops.t_decomposed(s.rho, s.u, ws, snap)
    res = e_time_derivative(s, drho, du, ws, snap) + sg.divergence(s.u * e, g) - source
    return sg.l2_norm(res, g)


class FlockTracker:
    """Co-moving density drift ``||rho(x + t ubar, t) - rho_ref||_inf``.

    ``rho_ref`` is the co-moving density at the latest checkpoint; a new
    checkpoint is taken whenever ``checkpoint_dt`` has elapsed.
    """

    def __init__(self, g: sg.TorusGrid, ubar, checkpoint_dt: float = 1.0):
        self.grid = g
        self.ubar = np.broadcast_to(np.asarray(ubar, dtype=float), (g.dim,))
        self.checkpoint_dt = checkpoint_dt
        self.ref = None
        self.ref_t = None
        self.checkpoints: list[tuple[float, float]] = []

    def comoving(self, s: State) -> np.ndarray:
        if not np.any(self.ubar):
            return s.rho
        return sg.shift(s.rho, self.grid, s.t * self.ubar)

    def __call__(self, s: State) -> float:
        rho_c = self.comoving(s)
        if self.ref is None:
            self.ref, self.ref_t = rho_c, s.t
            return 0.0
        res = float(np.max(np.abs(rho_c - self.ref)))
        if s.t - self.ref_t >= self.checkpoint_dt * (1 - 1e-9):
            self.checkpoints.append((s.t, res))
            self.ref, self.ref_t = rho_c, s.t
        return res


def flocking_residual(s: State, ubar, rho_ref: np.ndarray, g: sg.TorusGrid) -> float:
    """``||rho(x + t ubar, t) - rho_ref||_inf`` with a spectral phase shift."""
    ubar = np.broadcast_to(np.asarray(ubar, dtype=float), (g.dim,))
    rho_c = sg.shift(s.rho, g, s.t * ubar) if np.any(ubar) else s.rho
    return float(np.max(np.abs(rho_c - rho_ref)))


class Diagnostics:
    """Diagnostics sink for :func:`dynamics.run`; call :meth:`finalize` after the run."""

    def __init__(self, ws: LatticeKernel, m: int = 3, ubar=0.0, checkpoint_dt: float = 1.0,
                 e_residual: bool = True, stride: int | None = None):
        self.ws = ws
        self.m = m
        self.e_residual = e_residual
        self.stride = auto_stride(ws.grid) if stride is None else stride
        self.flock = FlockTracker(ws.grid, ubar, checkpoint_dt)
        self.records: list[DiagRecord] = []

    def __call__(self, s: State, step: int = 0) -> DiagRecord:
        ws, g = self.ws, self.ws.grid
        snap = ops.snapshot(s.rho, ws)
        energy, diss = energy_and_dissipation(s, ws, snap)
        e = ops.compute_e(s.u, s.rho, ws, snap)
        if self.e_residual:
            drho, du, _ = rhs(s, ws, True, snap)
            e_res = e_equation_residual(s, drho, du, ws, snap)
        else:
            e_res = math.nan
        rec = DiagRecord(
            t=s.t,
            mass=g.integrate(s.rho),
            momentum=tuple(float(v) for v in momentum(s, g)),
            energy=energy,
            dissipation=diss,
            energy_residual=math.nan,
            amplitude=amplitude(s.u, g, self.stride),
            rho_min=float(np.min(s.rho)),
            rho_max=float(np.max(s.rho)),
            grad_u_inf=grad_inf(s.u, g),
            grad_rho_inf=grad_inf(s.rho[None], g),
            e_inf=float(np.max(np.abs(e))),
            Y_m=ops.grand_quantity(s.u, s.rho, self.m, ws, snap, e),
            e_eq_residual=e_res,
            flocking_residual=self.flock(s),
        )
        self.records.append(rec)
        return rec

    def finalize(self) -> list[DiagRecord]:
        fill_energy_residual(self.records)
        return self.records


def fill_energy_residual(records: list[DiagRecord]) -> None:
    """``|dE/dt + D|`` with dE/dt from centred differences over the record times."""
    if len(records) < 2:
        for r in records:
            r.energy_residual = 0.0 if len(records) else r.energy_residual
        return
    t = np.array([r.t for r in records])
    e = np.array([r.energy for r in records])
    dedt = np.gradient(e, t, edge_order=2 if len(records) > 2 else 1)
    for r, v in zip(records, dedt):
        r.energy_residual = abs(float(v) + r.dissipation)


def fit_exponential_decay(t, a) -> tuple[float, float]:
    """Least-squares line through ``(t, log A)``; returns ``(rate, R^2)``."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    keep = a > 1e-14
    if np.count_nonzero(keep) < 10:
        raise ValueError("need at least 10 samples with A > 1e-14")
    fit = stats.linregress(t[keep], np.log(a[keep]))
    return float(-fit.slope), float(fit.rvalue ** 2)


def nonincreasing(values, tol: float) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= tol)) if v.size > 1 else True


def density_growth_violation(records: list[DiagRecord], dim: int, tol: float = 1e-6,
                             slack: float = 0.05) -> float:
    """Largest excess of ``|d/dt log rho_max|``-type growth over ``sqrt(n) ||grad u||_inf``.

    Checks both ``d/dt log rho_max`` and ``d/dt log(1/rho_min)``; a value
    ``<= 0`` means the bound holds on every record interval. ``slack`` absorbs the
    variation of ``||grad u||_inf`` inside an interval (only endpoints are sampled).
    """
    if len(records) < 2:
        return -math.inf
    t = np.array([r.t for r in records])
    lo = np.log([r.rho_min for r in records])
    hi = np.log([r.rho_max for r in records])
    g = np.array([r.grad_u_inf for r in records])
    bound = math.sqrt(dim) * np.maximum(g[1:], g[:-1]) * (1 + slack) + tol
    dt = np.diff(t)
    growth = np.maximum(np.diff(hi) / dt, -np.diff(lo) / dt)
    return float(np.max(growth - bound))


def csv_emit(records: list[DiagRecord], path, dim: int) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns(dim))
            for r in records:
                w.writerow([f"{v:.17g}" for v in r.row()])
    except OSError as exc:
        raise OSError(f"cannot write diagnostics CSV {path}: {exc}") from exc


def csv_load(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, data
