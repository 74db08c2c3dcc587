"""Smooth transition functions built from ``exp(-1/x)``.

``step(x)`` rises from 0 (x <= 0) to 1 (x >= 1) and is flat to infinite order
at both ends.  Every cutoff, bump and collar in the package is assembled from
it, so all of them share the same derivative bounds.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import jets

_TINY_LOG = -700.0


def _psi_jet(x: np.ndarray, order: int) -> np.ndarray:
    """Jet of ``exp(-1/x)`` (zero for x <= 0)."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1)
    out = np.zeros((order + 1, x.size))
    pos = x > 0
    if not np.any(pos):
        return out.reshape((order + 1,) + shape)
    xp = x[pos]
    logpsi = -1.0 / xp
    poly = np.polynomial.Polynomial([1.0])
    for n in range(order + 1):
        if n > 0:
            xpoly = np.polynomial.Polynomial([0.0, 0.0, 1.0])
            poly = xpoly * poly.deriv() - np.polynomial.Polynomial([-1.0, 2.0 * (n - 1)]) * poly
        logmag = logpsi - 2.0 * n * np.log(xp)
        val = np.where(logmag > _TINY_LOG, np.exp(np.maximum(logmag, _TINY_LOG)), 0.0)
        out[n][pos] = val * poly(xp)
    return out.reshape((order + 1,) + shape)


def _lower_jet(x: np.ndarray, order: int) -> np.ndarray:
    a = _psi_jet(x, order)
    b = _psi_jet(1.0 - x, order)
    for n in range(1, order + 1, 2):
        b[n] = -b[n]
    return jets.div(a, a + b)


def step_jet(x, order: int = 2) -> np.ndarray:
    """Jet of the smooth step ``psi(x) / (psi(x) + psi(1 - x))``.

    Evaluated on the lower half and reflected (``step(x) = 1 - step(1 - x)``)
    so the tail near 1 keeps full relative precision.
    """
    x = np.asarray(x, dtype=float)
    upper = x > 0.5
    out = _lower_jet(np.where(upper, 1.0 - x, x), order)
    out[0] = np.where(upper, 1.0 - out[0], out[0])
    for n in range(2, order + 1, 2):
        out[n] = np.where(upper, -out[n], out[n])
    out[0] = np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, out[0]))
    return out


def step(x) -> np.ndarray:
    return step_jet(x, 0)[0]


@lru_cache(maxsize=1)
def _gl_nodes(count: int = 48):
    return np.polynomial.legendre.leggauss(count)


def step_integral(x) -> np.ndarray:
    """``int_0^x step(u) du`` for any real x (equals x - 1/2 for x >= 1)."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, x - 0.5, 0.0)
    inner = (x > 0.0) & (x < 1.0)
    if np.any(inner):
        nodes, weights = _gl_nodes()
        xc = x[inner]
        lo = np.minimum(xc, 1.0 - xc)
        half = 0.5 * lo[..., None] * (nodes + 1.0)
        core = 0.5 * lo * np.sum(weights * step(half), axis=-1)
        out[inner] = np.where(xc <= 0.5, core, xc - 0.5 + core)
    return out


@lru_cache(maxsize=1)
def max_step_slope() -> float:
    """Maximum of ``step'`` on [0, 1]; attained at 1/2 by symmetry."""
    xs = np.linspace(0.0, 1.0, 20001)
    return float(np.max(step_jet(xs, 1)[1]))


def ramp_jet(x, a: float, b: float, order: int = 2) -> np.ndarray:
    """Jet (in x) of the step rescaled to rise on [a, b]."""
    w = b - a
    base = step_jet((np.asarray(x, dtype=float) - a) / w, order)
    for n in range(1, order + 1):
        base[n] = base[n] / w**n
    return base


def plateau_bump_jet(x, a: float, b: float, c: float, d: float, order: int = 2) -> np.ndarray:
    """Jet of a bump rising on [a, b], equal to 1 on [b, c], falling on [c, d]."""
    up = ramp_jet(x, a, b, order)
    down = ramp_jet(x, c, d, order)
    out = up.copy()
    out[0] = up[0] * (1.0 - down[0])
    if order >= 1:
        out = jets.mul(up, jets.constant(1.0, x, order) - down)
    return out


def plateau_bump_integral(x, a: float, b: float, c: float, d: float) -> np.ndarray:
    """``int_{-inf}^x`` of the plateau bump (the ramps never overlap)."""
    x = np.asarray(x, dtype=float)
    rise = (b - a) * step_integral((x - a) / (b - a))
    fall = (d - c) * step_integral((x - c) / (d - c))
    return rise - fall
