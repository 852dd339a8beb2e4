"""Topological communication kernel: bump cutoff, communication domains,
topological distance and the lattice tables used by the nonlocal operators.

The communication domain between ``x`` and ``x + z`` is the image of a fixed
reference domain under ``xi -> x + |z| U_z xi``:

* 1D: the unit interval ``[0, 1]``;
* 2D: the rhombus with vertices ``(0,0), (1/2,-kappa/2), (1,0), (1/2,kappa/2)``.

Both are symmetric under ``xi -> e_1 - xi``, which makes the domain between
``x`` and ``y`` the same set as the domain between ``y`` and ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import mpmath
import numpy as np

from .errors import VacuumError
from .grid import TorusGrid


@dataclass(frozen=True)
class KernelParams:
    alpha: float = 1.0
    tau: float = 1.0
    r0: float = 1.0
    Lambda: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.Lambda > 0:
            raise ValueError("Lambda must be positive")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")

    @property
    def metric(self) -> bool:
        return self.tau == 0


def bump_eval(r, p: KernelParams):
    """Radial cutoff: plateau ``Lambda`` on ``r <= r0/2``, C^1 cosine ramp to 0 at ``r0``."""
    r = np.abs(np.asarray(r, dtype=float))
    ramp = 0.5 * p.Lambda * (1.0 + np.cos(np.pi * (2.0 * r / p.r0 - 1.0)))
    out = np.where(r <= 0.5 * p.r0, p.Lambda, np.where(r < p.r0, ramp, 0.0))
    return out if out.ndim else float(out)


def rotation(z) -> np.ndarray:
    """Orthogonal map sending ``e_1`` to ``z / |z|`` (1D: the sign of ``z``)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r = np.linalg.norm(z)
    if r == 0:
        raise ValueError("rotation undefined for z = 0")
    if z.size == 1:
        return np.array([[np.sign(z[0])]])
    c, s = z[0] / r, z[1] / r
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class CommGeometry:
    """Reference domain with volume and boundary quadrature tables.

    ``volume_nodes`` (P, dim) / ``volume_weights`` (P,) integrate over the
    reference domain; ``boundary_nodes`` (B, dim), ``boundary_normals``
    (B, dim) and ``boundary_weights`` (B,) integrate over its boundary.
    """

    dim: int
    kappa: float
    volume_nodes: np.ndarray
    volume_weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_normals: np.ndarray
    boundary_weights: np.ndarray
    spacing: float

    @property
    def volume(self) -> float:
        return 1.0 if self.dim == 1 else self.kappa / 2

    @classmethod
    def build(cls, dim: int, kappa: float = 0.5, cells: int = 16, edge_nodes: int = 4):
        """Midpoint (1D) / centroid-on-triangles (2D) volume rule with ``cells``
        subdivisions per axis; Gauss-Legendre with ``edge_nodes`` per rhombus edge."""
        if dim == 1:
            nodes = ((np.arange(cells) + 0.5) / cells)[:, None]
            weights = np.full(cells, 1.0 / cells)
            bnodes = np.array([[0.0], [1.0]])
            bnormals = np.array([[-1.0], [1.0]])
            bweights = np.ones(2)
            return cls(1, kappa, nodes, weights, bnodes, bnormals, bweights, 1.0 / cells)
        if dim != 2:
            raise ValueError("only dim 1 and 2 are supported")
        a = np.array([0.5, -kappa / 2])
        b = np.array([0.5, kappa / 2])
        m = cells
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        i, j = i.ravel(), j.ravel()
        # lower triangle (i,j),(i+1,j),(i+1,j+1); upper (i,j),(i+1,j+1),(i,j+1)
        s_lo, t_lo = (3 * i + 2) / (3 * m), (3 * j + 1) / (3 * m)
        s_up, t_up = (3 * i + 1) / (3 * m), (3 * j + 2) / (3 * m)
        s = np.concatenate([s_lo, s_up])
        t = np.concatenate([t_lo, t_up])
        nodes = s[:, None] * a + t[:, None] * b
        area = kappa / 2
        weights = np.full(nodes.shape[0], area / (2 * m * m))
        verts = np.array([[0.0, 0.0], a, [1.0, 0.0], b])
        gx, gw = np.polynomial.legendre.leggauss(edge_nodes)
        bn, bnu, bw = [], [], []
        for e in range(4):
            p0, p1 = verts[e], verts[(e + 1) % 4]
            d = p1 - p0
            length = np.linalg.norm(d)
            normal = np.array([d[1], -d[0]]) / length  # counter-clockwise -> outward
            for x, w in zip(gx, gw):
                bn.append(p0 + 0.5 * (x + 1) * d)
                bnu.append(normal)
                bw.append(0.5 * w * length)
        cell_diam = max(np.linalg.norm(a + b), np.linalg.norm(a - b)) / m
        return cls(2, kappa, nodes, weights, np.array(bn), np.array(bnu), np.array(bw), cell_diam)

    def map_nodes(self, z, which: str = "volume") -> np.ndarray:
        """Physical offsets ``|z| U_z xi`` of the reference nodes for offset ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        nodes = self.volume_nodes if which == "volume" else self.boundary_nodes
        return np.linalg.norm(z) * nodes @ rotation(z).T


def default_cells(grid: TorusGrid, p: KernelParams) -> int:
    """Reference subdivision tied to the lattice so node spacing never exceeds ``dx``."""
    base = 16 if grid.dim == 1 else 8
    return max(base, int(np.ceil(p.r0 / grid.spacing)))


def interpolate(f: np.ndarray, grid: TorusGrid, points: np.ndarray) -> np.ndarray:
    """Periodic (bi)linear interpolation of lattice values at physical points (M, dim)."""
    points = np.atleast_2d(points)
    idx, frac = _split(points / grid.spacing)
    out = np.zeros(points.shape[0])
    for corner, w in _corners(idx, frac, grid.dim):
        out += w * f[tuple((corner % grid.n).T)]
    return out


def _split(u: np.ndarray):
    base = np.floor(u)
    frac = u - base
    # snap round-off so lattice points are sampled exactly
    hi = frac > 1 - 1e-10
    base = np.where(hi, base + 1, base)
    frac = np.where(hi | (frac < 1e-10), 0.0, frac)
    return base.astype(int), frac


def _corners(idx: np.ndarray, frac: np.ndarray, dim: int):
    if dim == 1:
        yield idx, 1 - frac[:, 0]
        yield idx + 1, frac[:, 0]
        return
    fx, fy = frac[:, 0], frac[:, 1]
    yield idx, (1 - fx) * (1 - fy)
    yield idx + np.array([1, 0]), fx * (1 - fy)
    yield idx + np.array([0, 1]), (1 - fx) * fy
    yield idx + np.array([1, 1]), fx * fy


def comm_mass(rho: np.ndarray, grid: TorusGrid, geom: CommGeometry, x, z) -> float:
    """Quadrature of the density mass over the domain between node ``x`` and ``x + z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    x0 = np.asarray(np.atleast_1d(x), dtype=float) * grid.spacing
    pts = x0 + geom.map_nodes(z)
    vals = interpolate(rho, grid, pts)
    if np.any(vals <= 0):
        raise VacuumError(f"non-positive density sample {vals.min():.3e} in communication domain",
                          value=float(vals.min()))
    return float(np.linalg.norm(z) ** grid.dim * np.dot(geom.volume_weights, vals))


def topo_distance(rho, grid, geom, x, z) -> float:
    return comm_mass(rho, grid, geom, x, z) ** (1.0 / grid.dim)


def kernel_eval(rho, grid, geom, x, z, p: KernelParams) -> float:
    """``h(|z|) / (|z|^(n+alpha-tau) d^tau)``; zero outside the cutoff."""
    r = float(np.linalg.norm(np.atleast_1d(z)))
    if r == 0:
        raise ValueError("kernel undefined at z = 0")
    if r >= p.r0:
        return 0.0
    n = grid.dim
    h = bump_eval(r, p)
    if p.tau == 0:
        return h / r ** (n + p.alpha)
    d = topo_distance(rho, grid, geom, x, z)
    return h / (r ** (n + p.alpha - p.tau) * d ** p.tau)


def lattice_zeta_constant(dim: int, alpha: float) -> float:
    """Regularised lattice sum ``sum'_j j_1^2 |j|^(-dim-alpha)`` (analytic continuation).

    1D: ``2 zeta(alpha - 1)``; 2D: ``2 zeta(alpha/2) beta(alpha/2)`` with the
    Dirichlet beta function (sum of two squares).
    """
    if dim == 1:
        return float(2 * mpmath.zeta(alpha - 1))
    s = alpha / 2
    return float(2 * mpmath.zeta(s) * mpmath.dirichlet(s, [0, 1, 0, -1]))


@dataclass(frozen=True)
class OffsetTable:
    """Nonzero lattice offsets inside the kernel support, closed under ``z -> -z``."""

    shifts: np.ndarray    # (Nz, dim) integer lattice offsets
    vectors: np.ndarray   # (Nz, dim) physical offsets
    norms: np.ndarray     # (Nz,)
    partner: np.ndarray   # index of -z

    def __len__(self):
        return self.shifts.shape[0]

    @classmethod
    def build(cls, grid: TorusGrid, p: KernelParams):
        if p.r0 < 2 * grid.spacing:
            raise ValueError(f"r0={p.r0} < 2*spacing={2 * grid.spacing:.4g}: kernel support unresolved")
        if p.r0 >= grid.side_length / 2:
            raise ValueError("r0 must be smaller than half the torus side")
        jmax = int(np.ceil(p.r0 / grid.spacing))
        rng = np.arange(-jmax, jmax + 1)
        mesh = np.stack(np.meshgrid(*([rng] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
        norms = np.linalg.norm(mesh, axis=1) * grid.spacing
        keep = (norms > 0) & (norms < p.r0)
        shifts = mesh[keep]
        vectors = shifts * grid.spacing
        lookup = {tuple(s): i for i, s in enumerate(shifts)}
        partner = np.array([lookup[tuple(-s)] for s in shifts])
        return cls(shifts, vectors, norms[keep], partner)


class LatticeKernel:
    """Per-grid tables for evaluating the topological kernel on all (node, offset) pairs.

    Communication masses are lattice convolutions of the density with fixed
    stencils (reference quadrature nodes + linear interpolation), so they are
    evaluated with one batched FFT per call.
    """

    def __init__(self, grid: TorusGrid, p: KernelParams, cells: int | None = None,
                 edge_nodes: int = 4, singular_correction: bool = True,
                 vacuum_threshold: float = 1e-8):
        self.grid = grid
        self.params = p
        self.cells = cells or default_cells(grid, p)
        self.geometry = CommGeometry.build(grid.dim, p.kappa, self.cells, edge_nodes)
        self.offsets = OffsetTable.build(grid, p)
        self.singular_correction = singular_correction
        self.vacuum_threshold = vacuum_threshold

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def metric_weights(self) -> np.ndarray:
        """Quadrature weights ``dx^n h(|z|) |z|^-(n+alpha)`` plus the nearest-neighbour
        singular correction that accounts for the excluded ``z = 0`` cell."""
        g, p = self.grid, self.params
        r = self.offsets.norms
        w = g.cell_volume * bump_eval(r, p) / r ** (g.dim + p.alpha)
        if self.singular_correction:
            c = -0.5 * p.Lambda * lattice_zeta_constant(g.dim, p.alpha) * g.spacing ** (-p.alpha)
            nearest = np.sum(np.abs(self.offsets.shifts), axis=1) == 1
            w = w + np.where(nearest, c, 0.0)
        return w

    @cached_property
    def gather_index(self) -> np.ndarray:
        """Flat indices of ``x + z`` for every offset and node, shape (Nz, size)."""
        g = self.grid
        base = np.stack(np.meshgrid(*[np.arange(g.n)] * g.dim, indexing="ij"), axis=-1).reshape(-1, g.dim)
        out = np.empty((len(self.offsets), g.size), dtype=np.intp)
        for i, s in enumerate(self.offsets.shifts):
            out[i] = np.ravel_multi_index(tuple(((base + s) % g.n).T), g.shape)
        return out

    def shifted(self, f: np.ndarray) -> np.ndarray:
        """``f(x + z)`` for all table offsets, shape (Nz,) + grid.shape."""
        g = self.grid
        return f.reshape(-1)[self.gather_index].reshape((len(self.offsets),) + g.shape)

    def stencil_filter(self, rel_points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Spectral multiplier of ``f -> sum_i w_i f(x + p_i)`` with linear interpolation."""
        g = self.grid
        arr = np.zeros(g.shape)
        idx, frac = _split(rel_points / g.spacing)
        for corner, cw in _corners(idx, frac, g.dim):
            np.add.at(arr, tuple((corner % g.n).T), weights * cw)
        return np.conj(np.fft.rfftn(arr))

    @cached_property
    def volume_filters(self) -> np.ndarray:
        """Multipliers producing ``int_{Omega(x, x+z)} f`` for every offset."""
        geom, n = self.geometry, self.dim
        out = np.empty((len(self.offsets),) + self.grid.spectral_shape, dtype=complex)
        for i, z in enumerate(self.offsets.vectors):
            out[i] = self.stencil_filter(geom.map_nodes(z), geom.volume_weights * self.offsets.norms[i] ** n)
        return out

    def domain_integrals(self, f: np.ndarray) -> np.ndarray:
        """Quadrature of ``int_{Omega(x,x+z)} f`` for all nodes and offsets."""
        axes = tuple(range(-self.dim, 0))
        fh = np.fft.rfftn(f, axes=axes)
        return np.fft.irfftn(fh[None] * self.volume_filters, s=self.grid.shape, axes=axes)

    def masses(self, rho: np.ndarray) -> np.ndarray:
        return self.domain_integrals(rho)

    def check_density(self, rho: np.ndarray) -> None:
        low = float(np.min(rho))
        if not np.isfinite(low):
            raise VacuumError("density contains non-finite values", value=low)
        if low <= self.vacuum_threshold:
            raise VacuumError(f"vacuum: min density {low:.3e} <= threshold {self.vacuum_threshold:.1e}",
                              value=low)

    def weights(self, rho: np.ndarray, masses: np.ndarray | None = None) -> np.ndarray:
        """Lattice kernel weights ``W_z |z|^tau M_z(x)^(-tau/n)`` (include ``dx^n``)."""
        p, n = self.params, self.dim
        w = self.metric_weights.reshape((-1,) + (1,) * n)
        if p.tau == 0:
            return np.broadcast_to(w, (len(self.offsets),) + self.grid.shape).copy()
        self.check_density(rho)
        if masses is None:
            masses = self.masses(rho)
        r = self.offsets.norms.reshape((-1,) + (1,) * n)
        return w * r ** p.tau * masses ** (-p.tau / n)

    def symbol_bound(self) -> float:
        """``dx^alpha * sum_z W_z / Lambda``: normaliser of the largest diffusion rate."""
        p = self.params
        return float(self.grid.spacing ** p.alpha * np.sum(self.metric_weights) / p.Lambda)
