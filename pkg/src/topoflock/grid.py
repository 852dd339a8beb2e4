"""Periodic torus grids, spectral calculus and Sobolev diagnostics.

Fields are plain numpy arrays. A scalar field on a ``dim``-dimensional grid
with ``n`` points per axis has shape ``(n,) * dim``; a vector field carries a
leading component axis, shape ``(dim,) + (n,) * dim``. Axis ``i`` of a scalar
field is the coordinate ``x_{i+1}``.

Spectra use the half-complex (``rfftn``) layout normalised so that the
coefficient of ``exp(i k.x)`` is returned directly, i.e. ``f_hat[0] == mean(f)``.
All norms use the normalised measure ``(2 pi)^-dim dx``, so ``||1||_2 == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MAX_DERIVATIVE_ORDER = 6


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus ``[0, side_length)^dim``."""

    dim: int
    n: int
    side_length: float = 2 * np.pi
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")

    @property
    def spacing(self) -> float:
        return self.side_length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.spacing
        return (x,) * self.dim

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays, each of shape ``grid.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable wavevector components in the ``rfftn`` layout."""
        scale = 2 * np.pi / self.side_length
        ks = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                k = np.fft.rfftfreq(self.n, 1.0 / self.n)
            else:
                k = np.fft.fftfreq(self.n, 1.0 / self.n)
            shape = [1] * self.dim
            shape[axis] = k.size
            ks.append(scale * k.reshape(shape))
        return tuple(ks)

    @cached_property
    def integer_wavenumbers(self) -> tuple[np.ndarray, ...]:
        scale = self.side_length / (2 * np.pi)
        return tuple(np.rint(k * scale).astype(int) for k in self.wavenumbers)

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.shape[:-1] + (self.n // 2 + 1,)

    @cached_property
    def kmag(self) -> np.ndarray:
        k2 = sum(np.broadcast_to(k, self.spectral_shape) ** 2 for k in self.wavenumbers)
        return np.sqrt(k2)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Parseval weights for the half spectrum (conjugate modes counted twice)."""
        last = np.full(self.n // 2 + 1, 2.0)
        last[0] = 1.0
        last[-1] = 1.0
        shape = [1] * self.dim
        shape[-1] = last.size
        return np.broadcast_to(last.reshape(shape), self.spectral_shape).copy()

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cutoff = self.n / 3.0
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.integer_wavenumbers:
            mask &= np.abs(k) <= cutoff
        return mask

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def vector_zeros(self) -> np.ndarray:
        return np.zeros((self.dim,) + self.shape)

    def integrate(self, f: np.ndarray) -> float:
        """Lebesgue integral over the torus (trapezoidal, spectrally exact)."""
        return float(np.sum(f) * self.cell_volume)

    def mean(self, f: np.ndarray) -> float:
        return float(np.mean(f))


def check_scalar(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"scalar field has shape {f.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    return f


def check_vector(v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.dim,) + grid.shape:
        raise ValueError(f"vector field has shape {v.shape}, grid expects {(grid.dim,) + grid.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("field contains non-finite values")
    return v


def spectrum(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Normalised half spectrum of a real scalar field."""
    return np.fft.rfftn(f, axes=_axes(grid)) / grid.size


def from_spectrum(fh: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.fft.irfftn(fh * grid.size, s=grid.shape, axes=_axes(grid))


def _axes(grid: TorusGrid) -> tuple[int, ...]:
    return tuple(range(-grid.dim, 0))


def derivative(f: np.ndarray, grid: TorusGrid, axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative ``d^order f / dx_axis^order``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {order} exceeds cap {MAX_DERIVATIVE_ORDER}")
    k = grid.wavenumbers[axis]
    symbol = (1j * k) ** order
    if order % 2:
        # odd derivatives of the Nyquist mode are not real-representable
        kint = grid.integer_wavenumbers[axis]
        symbol = np.where(np.abs(kint) == grid.n // 2, 0.0, symbol)
    return from_spectrum(spectrum(f, grid) * symbol, grid)


def gradient(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    fh = spectrum(f, grid)
    out = np.empty((grid.dim,) + grid.shape)
    for axis in range(grid.dim):
        out[axis] = from_spectrum(fh * _odd_symbol(grid, axis), grid)
    return out


def divergence(v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for axis in range(grid.dim):
        acc += spectrum(v[axis], grid) * _odd_symbol(grid, axis)
    return from_spectrum(acc, grid)


def jacobian(v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``J[i, j] = d v_i / d x_j``."""
    return np.stack([gradient(v[i], grid) for i in range(grid.dim)])


def _odd_symbol(grid: TorusGrid, axis: int) -> np.ndarray:
    key = ("ik", axis)
    if key not in grid._cache:
        k = grid.wavenumbers[axis]
        kint = grid.integer_wavenumbers[axis]
        grid._cache[key] = np.where(np.abs(kint) == grid.n // 2, 0.0, 1j * k)
    return grid._cache[key]


def dealias(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """2/3-rule truncation; vector fields are truncated component-wise."""
    if f.ndim == grid.dim + 1:
        return np.stack([dealias(c, grid) for c in f])
    return from_spectrum(spectrum(f, grid) * grid.dealias_mask, grid)


def shift(f: np.ndarray, grid: TorusGrid, a) -> np.ndarray:
    """Return ``f(x + a)`` by spectral phase multiplication."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (grid.dim,))
    phase = sum(k * a[i] for i, k in enumerate(grid.wavenumbers))
    fh = spectrum(f, grid) * np.exp(1j * phase)
    for axis in range(grid.dim):
        # the Nyquist mode cannot carry a real phase shift
        nyq = np.abs(grid.integer_wavenumbers[axis]) == grid.n // 2
        fh = np.where(nyq, 0.0, fh)
    return from_spectrum(fh, grid)


def _power(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    if f.ndim == grid.dim + 1:
        return sum(_power(c, grid) for c in f)
    return grid.multiplicity * np.abs(spectrum(f, grid)) ** 2


def sobolev_norm(f: np.ndarray, grid: TorusGrid, s: float, homogeneous: bool = True) -> float:
    """Spectral ``H^s`` (or homogeneous ``\\dot H^s``) norm, normalised measure."""
    if s < 0:
        raise ValueError("s must be non-negative")
    k = grid.kmag
    if homogeneous:
        with np.errstate(divide="ignore"):
            w = np.where(k > 0, k ** (2 * s), 0.0 if s > 0 else 1.0)
    else:
        w = (1.0 + k ** 2) ** s
    return float(np.sqrt(np.sum(w * _power(f, grid))))


def l2_norm(f: np.ndarray, grid: TorusGrid) -> float:
    """``L^2`` norm from grid values, normalised measure."""
    return float(np.sqrt(np.mean(np.sum(np.reshape(f, (-1,) + grid.shape) ** 2, axis=0))))


def shell_mask(grid: TorusGrid, q: int) -> np.ndarray:
    if q < 0:
        raise ValueError("shell index must be >= 0")
    k = grid.kmag * grid.side_length / (2 * np.pi)
    if q == 0:
        return k < 0.5
    return (k >= 2.0 ** (q - 1)) & (k < 2.0 ** q)


def lp_project(f: np.ndarray, grid: TorusGrid, q: int) -> np.ndarray:
    """Sharp Littlewood-Paley projection onto ``2^(q-1) <= |k| < 2^q`` (``q=0``: mean)."""
    return from_spectrum(spectrum(f, grid) * shell_mask(grid, q), grid)


def max_shell(grid: TorusGrid) -> int:
    kmax = float(np.max(grid.kmag)) * grid.side_length / (2 * np.pi)
    return int(np.floor(np.log2(kmax))) + 1
