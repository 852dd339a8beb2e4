"""Initial-data presets. All presets are band-limited and deterministic given the seed."""
from __future__ import annotations

import numpy as np

from .config import ScenarioConfig
from .dynamics import State, galilean_normalize
from .errors import ConfigError
from .grid import TorusGrid

RHO_FLOOR = 0.1

DESCRIPTIONS = {
    "steady": "uniform density rho_mean, constant velocity `velocity` along e1",
    "smooth": "low-mode density and velocity (1D or 2D)",
    "random": "seeded band-limited density and velocity up to `wavenumber`",
    "shear": "2D parallel shear flock u = (U(x2), 0), rho = rho0(x2)",
    "nearly_aligned": "large density variation, velocity of size epsilon, zero mean velocity",
    "expansion": "uniform density, strong expanding velocity; drives the density to vacuum",
    "metric_mode": "uniform density, single velocity mode cos(wavenumber x1)",
}


def band_limited(g: TorusGrid, kmax: int, rng: np.random.Generator, decay: float = 1.0) -> np.ndarray:
    """Random real field with modes ``1 <= |k|_inf <= kmax``, zero mean, peak about 1.

    The coefficients and the peak normalisation do not depend on the grid, so
    the same seed yields the same continuous field at every resolution.
    """
    if 2 * kmax >= g.n:
        raise ValueError(f"wavenumber {kmax} not resolved on {g.n} points")
    base = np.arange(-kmax, kmax + 1)
    ks = np.meshgrid(*([base] * (g.dim - 1) + [np.arange(kmax + 1)]), indexing="ij")
    kinf = np.max(np.abs(np.stack(ks)), axis=0)
    draw = rng.standard_normal(kinf.shape) + 1j * rng.standard_normal(kinf.shape)
    kmag = np.maximum(np.sqrt(sum(k ** 2 for k in ks)), 1.0)
    draw *= ((kinf >= 1) & (kinf <= kmax)) * kmag ** (-decay)

    def sample(n):
        spec = np.zeros((n,) * (g.dim - 1) + (n // 2 + 1,), dtype=complex)
        idx = tuple(k % n for k in ks)
        spec[idx] = draw
        f = np.fft.irfftn(spec, s=(n,) * g.dim, axes=tuple(range(-g.dim, 0)))
        return f * n ** g.dim

    n_ref = max(64, 1 << int(np.ceil(np.log2(16 * kmax))))
    peak = np.max(np.abs(sample(n_ref)))
    return sample(g.n) / peak if peak > 0 else sample(g.n)


def _smooth(cfg, g):
    if g.dim == 1:
        (x,) = g.coords
        rho = cfg.rho_mean * (1 + cfg.rho_amp * np.cos(x) + cfg.rho_amp / 3 * np.sin(2 * x))
        u = cfg.amplitude * (np.sin(x) + 0.4 * np.cos(3 * x))
        return rho, u[None]
    x, y = g.coords
    rho = cfg.rho_mean * (1 + cfg.rho_amp * np.cos(x) * np.cos(y) + cfg.rho_amp / 3 * np.sin(x + y))
    u = cfg.amplitude * np.stack([np.sin(y) + 0.3 * np.cos(x), 0.5 * np.sin(x) - 0.2 * np.cos(2 * y)])
    return rho, u


def _random(cfg, g):
    rng = np.random.default_rng(cfg.seed)
    rho = cfg.rho_mean * (1 + cfg.rho_amp * band_limited(g, cfg.wavenumber, rng))
    u = cfg.amplitude * np.stack([band_limited(g, cfg.wavenumber, rng) for _ in range(g.dim)])
    return rho, u


def shear_profiles(cfg, g: TorusGrid):
    """Transverse profiles ``(U, rho0)`` sampled on the x2 axis."""
    y = g.axes[-1]
    rho0 = cfg.rho_mean * (1 + cfg.rho_amp * np.cos(y))
    U = cfg.amplitude * (np.sin(y) + 0.3 * np.cos(2 * y))
    return U, rho0


def _shear(cfg, g):
    if g.dim != 2:
        raise ConfigError("preset shear requires dim = 2", line=cfg.lines.get("preset"))
    U, rho0 = shear_profiles(cfg, g)
    u = g.vector_zeros()
    u[0] = U[None, :]
    return np.broadcast_to(rho0[None, :], g.shape).copy(), u


def preset_nearly_aligned(g: TorusGrid, r_scale: float, epsilon: float, seed: int = 0,
                          wavenumber: int = 4) -> State:
    """Density ``1 + 0.8 * (low-mode mixture)`` with modes up to ``round(r_scale)``;
    velocity ``epsilon`` times a band-limited field, Galilean-normalized."""
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    rng = np.random.default_rng(seed)
    kmax = max(1, int(round(r_scale)))
    rho = 1 + 0.8 * band_limited(g, kmax, rng, decay=0.0)
    u = epsilon * np.stack([band_limited(g, wavenumber, rng) for _ in range(g.dim)])
    s, _ = galilean_normalize(State(0.0, rho, u), g)
    return s


def _expansion(cfg, g):
    rho = np.full(g.shape, cfg.rho_mean)
    u = g.vector_zeros()
    u[0] = cfg.amplitude * np.sin(g.coords[0])
    return rho, u


def _steady(cfg, g):
    u = g.vector_zeros()
    u[0] = cfg.velocity
    return np.full(g.shape, cfg.rho_mean), u


def _metric_mode(cfg, g):
    u = g.vector_zeros()
    u[0] = cfg.amplitude * np.cos(cfg.wavenumber * g.coords[0])
    return np.full(g.shape, cfg.rho_mean), u


_BUILDERS = {"steady": _steady, "smooth": _smooth, "random": _random, "shear": _shear,
             "expansion": _expansion, "metric_mode": _metric_mode}


def build(cfg: ScenarioConfig, g: TorusGrid | None = None) -> State:
    g = g or TorusGrid(cfg.dim, cfg.N)
    if cfg.preset == "nearly_aligned":
        s = preset_nearly_aligned(g, cfg.r_scale, cfg.epsilon, cfg.seed, cfg.wavenumber)
    else:
        rho, u = _BUILDERS[cfg.preset](cfg, g)
        s = State(0.0, rho, u)
    low = float(np.min(s.rho))
    if low < RHO_FLOOR:
        key = "rho_amp" if "rho_amp" in cfg.lines else "preset"
        raise ConfigError(f"preset '{cfg.preset}' gives min density {low:.3g} < {RHO_FLOOR}",
                          line=cfg.lines.get(key))
    return s
