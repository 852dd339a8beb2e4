"""Adaptive-quadrature symbols of the metric (tau = 0) operator."""
from __future__ import annotations

import numpy as np
from scipy import integrate, special

from .kernel import KernelParams, bump_eval


def metric_symbol(k: float, p: KernelParams, dim: int = 1) -> float:
    """``m(k) = int (1 - cos(k.z)) h(|z|) |z|^-(n+alpha) dz`` over ``|z| < r0``.

    In 2D the angular integral is ``2 pi (1 - J0(k r))``, leaving a radial
    integral with integrable endpoint behaviour ``r^(1-alpha)``.
    """
    a, r0 = p.alpha, p.r0
    if dim == 1:
        def f(r):
            return 2.0 * (1 - np.cos(k * r)) * bump_eval(r, p) * r ** (-1 - a)
    elif dim == 2:
        def f(r):
            return 2 * np.pi * (1 - special.j0(k * r)) * bump_eval(r, p) * r ** (-1 - a)
    else:
        raise ValueError("dim must be 1 or 2")
    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(integrate.quad(f, 0, r0 / 2, **opts)[0] + integrate.quad(f, r0 / 2, r0, **opts)[0])
