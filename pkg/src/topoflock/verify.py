"""Operator identity suite behind ``topoflock verify``."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import grid as sg
from . import operators as ops
from .dynamics import State, rhs
from .grid import TorusGrid
from .kernel import CommGeometry, KernelParams, LatticeKernel, rotation
from .presets import band_limited
from .symbols import metric_symbol

MUTATIONS = ("t2-sign",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        rel = "<=" if self.passed else ">"
        return f"{mark}  {self.name:<26} {self.value:.3e} {rel} {self.tol:.1e}  {self.detail}"


def _random_pair(g, rng, kmax=4):
    rho = 1 + 0.4 * band_limited(g, kmax, rng)
    u = 0.5 * np.stack([band_limited(g, kmax, rng) for _ in range(g.dim)])
    return rho, u


def check_commutator(trials: int = 100, seed: int = 1) -> CheckResult:
    """``C(u, rho) = L(u rho) - u L rho`` with shared weights."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((1, 64), (2, 16)):
        g = TorusGrid(dim, n)
        ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=1.0, r0=0.6 if dim == 1 else 1.2))
        for _ in range(trials // 2):
            rho, u = _random_pair(g, rng)
            snap = ops.snapshot(rho, ws)
            c = ops.alignment_force(u, rho, ws, snap)
            for i in range(dim):
                ref = ops.topo_diffusion(u[i] * rho, rho, ws, snap) - u[i] * ops.topo_diffusion(rho, rho, ws, snap)
                scale = max(1.0, float(np.max(np.abs(ref))))
                worst = max(worst, float(np.max(np.abs(c[i] - ref))) / scale)
    return CheckResult("commutator_identity", worst <= 1e-12, worst, 1e-12, f"{trials} random pairs")


def _analytic_field(rng, dim):
    a = rng.uniform(-1.5, 1.5, size=(dim, dim))
    b = rng.uniform(0, 2 * np.pi, size=dim)

    def F(pts):
        # pts (..., dim); F_i = sin(a_i . x + b_i)
        return np.sin(pts @ a.T + b)

    def divF(pts):
        return np.sum(np.cos(pts @ a.T + b) * np.diag(a), axis=-1)

    return F, divF, float(np.max(np.abs(a)))


def divergence_theorem_error(geom: CommGeometry, rng, trials: int) -> float:
    """Worst ``|vol - bdry| / (C_F |z|^n (|z| h)^2)`` with ``h`` the reference cell size."""
    dim = geom.volume_nodes.shape[1]
    worst = 0.0
    for _ in range(trials):
        F, divF, amax = _analytic_field(rng, dim)
        x = rng.uniform(0, 2 * np.pi, size=dim)
        r = rng.uniform(0.05, 1.0)
        ang = rng.uniform(0, 2 * np.pi)
        z = np.array([r * np.cos(ang), r * np.sin(ang)])[:dim] if dim == 2 else np.array([r * rng.choice([-1, 1])])
        vol = r ** dim * np.sum(geom.volume_weights * divF(x + geom.map_nodes(z, "volume")))
        pts = x + geom.map_nodes(z, "boundary")
        nu = geom.boundary_normals @ rotation(z).T
        bdry = r ** (dim - 1) * np.sum(geom.boundary_weights * np.sum(F(pts) * nu, axis=-1))
        scale = amax ** 3 * r ** dim * (r * geom.spacing) ** 2
        worst = max(worst, abs(vol - bdry) / scale)
    return worst


def check_divergence_theorem(trials: int = 1000, seed: int = 2, const: float = 1.0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = max(divergence_theorem_error(CommGeometry.build(1, cells=16), rng, trials // 2),
                divergence_theorem_error(CommGeometry.build(2, 0.5, cells=8), rng, trials - trials // 2))
    return CheckResult("divergence_theorem", worst <= const, worst, const,
                       f"{trials} random (x, z); error / (C |z|^n (|z| h)^2)")


def check_t_forms(inject: tuple[str, ...] = (), seed: int = 3) -> CheckResult:
    """Volume and boundary forms of T agree: 2D relative to ||T||, 1D relative to max ||T_i||."""
    signs = (1.0, 1.0, 1.0, -1.0) if "t2-sign" in inject else (1.0, -1.0, 1.0, -1.0)
    worst = 0.0
    for dim, n, r0 in ((1, 256, 1.0), (2, 32, 1.2)):
        g = TorusGrid(dim, n)
        ws = LatticeKernel(g, KernelParams(alpha=0.5 if dim == 1 else 1.0, tau=1.0, r0=r0))
        if dim == 1:
            (x,) = g.coords
            rho, u = 1 + 0.3 * np.cos(x), (0.1 * np.sin(x))[None]
        else:
            x, y = g.coords
            rho = 1 + 0.3 * np.cos(x) * np.cos(y) + 0.1 * np.sin(x + y)
            u = np.stack([0.4 * np.sin(y) + 0.2 * np.cos(x), 0.3 * np.sin(x)])
        snap = ops.snapshot(rho, ws)
        direct = ops.t_direct(rho, u, ws, snap)
        total, parts = ops.t_decomposed(rho, u, ws, snap, components=True, signs=signs)
        diff = sg.l2_norm(direct - total, g)
        if dim == 1:
            scale = max(sg.l2_norm(t, g) for t in parts)
        else:
            scale = sg.l2_norm(direct, g)
        worst = max(worst, diff / scale)
    return CheckResult("t_direct_vs_decomposed", worst <= 1e-2, worst, 1e-2,
                       "1D N=256 alpha=0.5, 2D N=32" + (" [mutated]" if inject else ""))


def check_metric_symbol(n: int = 512, tol: float = 1e-3) -> CheckResult:
    """tau = 0 diffusion of cos(kx) against adaptive quadrature of m(k), k = 1..8."""
    g = TorusGrid(1, n)
    p = KernelParams(alpha=1.0, tau=0.0)
    ws = LatticeKernel(g, p)
    (x,) = g.coords
    rho = np.ones(g.shape)
    worst = 0.0
    for k in range(1, 9):
        f = np.cos(k * x)
        lf = ops.topo_diffusion(f, rho, ws)
        m_num = -float(np.sum(lf * f) / np.sum(f * f))
        worst = max(worst, abs(m_num / metric_symbol(k, p) - 1))
    return CheckResult("metric_symbol", worst <= tol, worst, tol, f"N={n}, alpha=1, k=1..8")


def check_coercivity(trials: int = 20, seed: int = 4, n: int = 128) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = TorusGrid(1, n)
    ws = LatticeKernel(g, KernelParams(alpha=0.5, tau=1.0))
    ratios = []
    for _ in range(trials):
        rho = 1.25 + 0.75 * band_limited(g, 6, rng)
        ratios.append(ops.coercivity_ratio(rho, 0, ws))
    spread = max(ratios) / min(ratios)
    return CheckResult("coercivity_envelope", spread <= 10, spread, 10.0,
                       f"C/c over {trials} densities in [0.5, 2]")


def check_max_principle(trials: int = 100, seed: int = 5) -> CheckResult:
    """Alignment force is <= 0 at a discrete max and >= 0 at a discrete min."""
    rng = np.random.default_rng(seed)
    g = TorusGrid(1, 64)
    ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=1.0))
    worst = -np.inf
    for _ in range(trials):
        rho, u = _random_pair(g, rng)
        c = ops.alignment_force(u, rho, ws)[0]
        worst = max(worst, float(c[np.argmax(u[0])]), float(-c[np.argmin(u[0])]))
    return CheckResult("max_principle_sign", worst <= 0.0, worst, 0.0, f"{trials} random pairs")


def check_pairing(seed: int = 6) -> CheckResult:
    """``int (L f) g + 1/2 sum phi delta f delta g = 0`` (discrete integration by parts)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((1, 128), (2, 16)):
        g = TorusGrid(dim, n)
        ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=1.0, r0=1.0 if dim == 1 else 1.2))
        rho, _ = _random_pair(g, rng)
        f, h = band_limited(g, 4, rng), band_limited(g, 4, rng)
        snap = ops.snapshot(rho, ws)
        lhs = g.integrate(ops.topo_diffusion(f, rho, ws, snap) * h)
        pr = ops.pairing(f, h, rho, ws, snap)
        worst = max(worst, abs(lhs + pr) / max(abs(pr), 1e-300))
    return CheckResult("pairing_identity", worst <= 1e-10, worst, 1e-10, "1D and 2D")


def check_steady(seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((1, 64), (2, 16)):
        g = TorusGrid(dim, n)
        ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=1.0, r0=1.2))
        v = rng.uniform(-1, 1, size=dim).reshape((-1,) + (1,) * dim)
        s = State(0.0, np.full(g.shape, 1.7), np.broadcast_to(v, (dim,) + g.shape).copy())
        drho, du, _ = rhs(s, ws)
        worst = max(worst, float(np.max(np.abs(drho))), float(np.max(np.abs(du))))
        rho, _ = _random_pair(g, rng)
        drho, du, _ = rhs(State(0.0, rho, g.vector_zeros()), ws)
        worst = max(worst, float(np.max(np.abs(drho))), float(np.max(np.abs(du))))
    return CheckResult("steady_states", worst <= 1e-12, worst, 1e-12, "constant state; u = 0")


def check_kernel_symmetry(seed: int = 8) -> CheckResult:
    """``W(x, z) = W(x + z, -z)`` on the lattice, 1D and 2D."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((1, 64), (2, 16)):
        g = TorusGrid(dim, n)
        ws = LatticeKernel(g, KernelParams(alpha=1.0, tau=1.0, r0=1.2))
        rho, _ = _random_pair(g, rng)
        w = ws.weights(rho)
        for i, j in enumerate(ws.offsets.partner):
            back = np.roll(w[j], tuple(-ws.offsets.shifts[i]), axis=tuple(range(dim)))
            worst = max(worst, float(np.max(np.abs(w[i] - back) / np.abs(w[i]))))
    return CheckResult("kernel_symmetry", worst <= 1e-12, worst, 1e-12, "lattice weights")


FULL = (check_commutator, check_divergence_theorem, check_t_forms, check_metric_symbol,
        check_coercivity, check_max_principle, check_pairing, check_steady, check_kernel_symmetry)
QUICK = (check_steady, check_kernel_symmetry, check_pairing, check_max_principle, check_t_forms)

_TOLERANCES = {"commutator_identity": 1e-12, "divergence_theorem": 1.0, "t_direct_vs_decomposed": 1e-2,
               "metric_symbol": 1e-3, "coercivity_envelope": 10.0, "max_principle_sign": 0.0,
               "pairing_identity": 1e-10, "steady_states": 1e-12, "kernel_symmetry": 1e-12}


def suite_hash() -> str:
    text = __version__ + ";" + ";".join(f"{k}={v!r}" for k, v in sorted(_TOLERANCES.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_suite(quick: bool = False, inject: tuple[str, ...] = ()) -> list[CheckResult]:
    for m in inject:
        if m not in MUTATIONS:
            raise ValueError(f"unknown mutation '{m}' (known: {', '.join(MUTATIONS)})")
    out = []
    for check in (QUICK if quick else FULL):
        out.append(check(inject=inject) if check is check_t_forms else check())
    return out
