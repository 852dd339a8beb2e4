"""Nonlocal operators built on the lattice kernel tables.

Every operator accepts an optional :class:`KernelSnapshot` so that a single
right-hand-side assembly evaluates communication masses and kernel weights
once and shares them between diffusion, alignment and source terms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as sg
from .errors import InstabilityError
from .kernel import LatticeKernel, _corners, _split, rotation

OperatorWorkspace = LatticeKernel

BLOWUP_LIMIT = 1e12


@dataclass(frozen=True)
class KernelSnapshot:
    """Kernel data for one density snapshot.

    ``weights[z]`` already contains the lattice volume ``dx^n``, so
    ``L f = sum_z weights[z] * (f(x+z) - f(x))``.
    """

    rho: np.ndarray
    masses: np.ndarray | None
    weights: np.ndarray
    rho_shifted: np.ndarray


def snapshot(rho: np.ndarray, ws: LatticeKernel) -> KernelSnapshot:
    ws.check_density(rho)
    masses = ws.masses(rho) if ws.params.tau > 0 else None
    return KernelSnapshot(rho, masses, ws.weights(rho, masses), ws.shifted(rho))


def _snap(rho, ws, snap):
    return snap if snap is not None else snapshot(rho, ws)


def topo_diffusion(f: np.ndarray, rho: np.ndarray, ws: LatticeKernel,
                   snap: KernelSnapshot | None = None) -> np.ndarray:
    """Principal-value quadrature of ``int phi(x, y) (f(y) - f(x)) dy``."""
    snap = _snap(rho, ws, snap)
    out = np.sum(snap.weights * (ws.shifted(f) - f), axis=0)
    if not np.all(np.isfinite(out)):
        raise InstabilityError("non-finite topological diffusion")
    return out


def alignment_force(u: np.ndarray, rho: np.ndarray, ws: LatticeKernel,
                    snap: KernelSnapshot | None = None) -> np.ndarray:
    """``int phi(x, x+z) (u(x+z) - u(x)) rho(x+z) dz`` for each velocity component."""
    snap = _snap(rho, ws, snap)
    wr = snap.weights * snap.rho_shifted
    out = np.stack([np.sum(wr * (ws.shifted(c) - c), axis=0) for c in u])
    if not np.all(np.isfinite(out)):
        raise InstabilityError("non-finite alignment force")
    return out


def compute_e(u: np.ndarray, rho: np.ndarray, ws: LatticeKernel,
              snap: KernelSnapshot | None = None) -> np.ndarray:
    """``e = div u + L_phi rho``."""
    return sg.divergence(u, ws.grid) + topo_diffusion(rho, rho, ws, snap)


def pairing(f: np.ndarray, g: np.ndarray, rho: np.ndarray, ws: LatticeKernel,
            snap: KernelSnapshot | None = None) -> float:
    """``1/2 int int phi(x, x+z) delta_z f delta_z g dz dx`` with the shared lattice weights."""
    snap = _snap(rho, ws, snap)
    df = ws.shifted(f) - f
    dg = ws.shifted(g) - g
    return 0.5 * ws.grid.cell_volume * float(np.sum(snap.weights * df * dg))


def _singular_coefficient(ws: LatticeKernel, snap: KernelSnapshot) -> np.ndarray:
    # h / (|z|^(n+alpha-tau) d^(tau+n)) dz == weights / mass
    return snap.weights / snap.masses


def _check_blowup(terms: np.ndarray, name: str) -> None:
    big = float(np.max(np.abs(terms))) if terms.size else 0.0
    if not np.isfinite(big) or big > BLOWUP_LIMIT:
        raise InstabilityError(f"{name}: quadrature summand {big:.3e} exceeds {BLOWUP_LIMIT:.0e}; "
                               "kernel under-resolved")


def t_direct(rho: np.ndarray, u: np.ndarray, ws: LatticeKernel,
             snap: KernelSnapshot | None = None) -> np.ndarray:
    """Topological source in volume form.

    ``(tau/n) sum_z [ (int_Omega div(rho u)) delta_z rho
    - (int_Omega grad rho) . delta_z(rho u) ] h / (|z|^(n+alpha-tau) d^(tau+n))``
    with the inner domain integrals taken by the volume quadrature table.
    """
    g, p, n = ws.grid, ws.params, ws.dim
    if p.tau == 0:
        return g.zeros()
    snap = _snap(rho, ws, snap)
    m = rho * u
    coef = _singular_coefficient(ws, snap)
    drho = snap.rho_shifted - rho
    vol_div = ws.domain_integrals(sg.divergence(m, g))
    grad_rho = sg.gradient(rho, g)
    terms = vol_div * drho
    for i in range(n):
        terms -= ws.domain_integrals(grad_rho[i]) * (ws.shifted(m[i]) - m[i])
    terms *= coef
    _check_blowup(terms, "t_direct")
    return (p.tau / n) * np.sum(terms, axis=0)


def _boundary_plan(ws: LatticeKernel):
    """Per boundary node: integer base shifts and interpolation weights for
    ``f(x + |z| U_z theta_k)`` over all offsets, plus the rotated normals."""
    cached = getattr(ws, "_boundary_plan_cache", None)
    if cached is not None:
        return cached
    g, geom = ws.grid, ws.geometry
    rots = np.stack([rotation(z) for z in ws.offsets.vectors])
    r = ws.offsets.norms[:, None]
    plan = []
    for theta, nu in zip(geom.boundary_nodes, geom.boundary_normals):
        pts = r * (rots @ theta)
        idx, frac = _split(pts / g.spacing)
        corners = [(c, w.reshape((-1,) + (1,) * g.dim)) for c, w in _corners(idx, frac, g.dim)]
        corners = [(c, w) for c, w in corners if np.any(w != 0)]
        plan.append((corners, rots @ nu))
    ws._boundary_plan_cache = plan
    return plan


def _take(f: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """``f(x + s dx)`` for each integer shift row of ``shifts``, stacked on axis 0."""
    n = f.shape[0]
    i = np.arange(n)
    if f.ndim == 1:
        return f[(i[None, :] + shifts[:, 0:1]) % n]
    a = (i[None, :, None] + shifts[:, 0, None, None]) % n
    b = (i[None, None, :] + shifts[:, 1, None, None]) % n
    return f[a, b]


def _sample(f: np.ndarray, corners) -> np.ndarray:
    return sum(w * _take(f, c) for c, w in corners)


def t_decomposed(rho: np.ndarray, u: np.ndarray, ws: LatticeKernel,
                 snap: KernelSnapshot | None = None, components: bool = False,
                 signs=(1.0, -1.0, 1.0, -1.0)):
    """Topological source as ``T1 - T2 + T3 - T4``, each a boundary integral over
    the reference domain boundary with nodes ``|z| U_z theta_k`` and normals ``U_z nu_k``.

    Returns the sum, or ``(sum, (T1, T2, T3, T4))`` when ``components`` is set.
    ``signs`` are the coefficients used to combine the four pieces.
    """
    g, p, n = ws.grid, ws.params, ws.dim
    if p.tau == 0:
        zero = g.zeros()
        return (zero, (zero,) * 4) if components else zero
    snap = _snap(rho, ws, snap)
    geom = ws.geometry
    shape = (len(ws.offsets),) + g.shape
    coef = _singular_coefficient(ws, snap) * (p.tau / n)
    r = ws.offsets.norms.reshape((-1,) + (1,) * n)
    drho_z = snap.rho_shifted - rho
    du_z = np.stack([ws.shifted(c) - c for c in u])
    # T1..T4 share the boundary sums below; only z-dependent factors remain outside
    s_rho_uxi = np.zeros(shape)                 # sum_k w delta_xi rho (delta_xi u . nu)
    s_uxi = np.zeros(shape)                     # sum_k w (delta_xi u . nu)
    s_rho_nu = np.zeros((n,) + shape)           # sum_k w delta_xi rho nu
    for k, (corners, normals) in enumerate(_boundary_plan(ws)):
        wk = geom.boundary_weights[k] * r ** (n - 1)
        wrho = wk * (_sample(rho, corners) - rho)
        nu = normals.T.reshape((n, -1) + (1,) * n)
        du_xi_nu = sum(nu[i] * (_sample(u[i], corners) - u[i]) for i in range(n))
        s_rho_uxi += wrho * du_xi_nu
        s_uxi += wk * du_xi_nu
        for i in range(n):
            s_rho_nu[i] += wrho * nu[i]
    rho_uz = sum(du_z[i] * s_rho_nu[i] for i in range(n))
    acc = [drho_z * s_rho_uxi, drho_z * rho_uz, rho * drho_z * s_uxi, rho * rho_uz]
    parts = []
    for a in acc:
        a *= coef
        _check_blowup(a, "t_decomposed")
        parts.append(np.sum(a, axis=0))
    total = sum(s * t for s, t in zip(signs, parts))
    return (total, tuple(parts)) if components else total


def coercivity_ratio(rho: np.ndarray, m: int, ws: LatticeKernel,
                     snap: KernelSnapshot | None = None) -> float:
    """``||L_phi rho||_{H^m} / ||rho||_{H^(m+alpha)}`` (homogeneous spectral norms)."""
    g = ws.grid
    denom = sg.sobolev_norm(rho, g, m + ws.params.alpha)
    if denom <= 1e-14 * max(abs(float(np.mean(rho))), 1.0):
        raise ValueError("coercivity ratio undefined for constant density")
    return sg.sobolev_norm(topo_diffusion(rho, rho, ws, snap), g, m) / denom


def grand_quantity(u: np.ndarray, rho: np.ndarray, m: int, ws: LatticeKernel,
                   snap: KernelSnapshot | None = None, e: np.ndarray | None = None) -> float:
    """``||u||^2_{H^(m+1)} + ||e||^2_{H^m}``."""
    g = ws.grid
    if e is None:
        e = compute_e(u, rho, ws, snap)
    return sg.sobolev_norm(u, g, m + 1) ** 2 + sg.sobolev_norm(e, g, m) ** 2
