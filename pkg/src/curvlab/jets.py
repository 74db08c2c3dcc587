"""Truncated derivative jets.

A jet is an array ``J`` of shape ``(K + 1, ...)`` where ``J[k]`` holds the
k-th derivative of a scalar function sampled at some points.  The helpers
below implement the Leibniz and Faa di Bruno rules up to order four, which is
all the warping-profile machinery needs.
"""

from __future__ import annotations

from math import comb

import numpy as np

MAX_ORDER = 4


def constant(value, like: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((order + 1,) + np.shape(like))
    out[0] = value
    return out


def identity(x, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    out[0] = x
    if order >= 1:
        out[1] = 1.0
    return out


def mul(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    order = min(len(f), len(g)) - 1
    out = np.zeros((order + 1,) + np.broadcast_shapes(f.shape[1:], g.shape[1:]))
    for n in range(order + 1):
        for k in range(n + 1):
            out[n] = out[n] + comb(n, k) * f[k] * g[n - k]
    return out


def div(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    order = min(len(f), len(g)) - 1
    out = np.zeros((order + 1,) + np.broadcast_shapes(f.shape[1:], g.shape[1:]))
    for n in range(order + 1):
        acc = f[n].copy() if np.ndim(f[n]) else np.asarray(f[n], dtype=float)
        for k in range(n):
            acc = acc - comb(n, k) * out[k] * g[n - k]
        out[n] = acc / g[0]
    return out


def scale(f: np.ndarray, c: float) -> np.ndarray:
    return f * c


def compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Jet of ``F(g(x))`` given ``outer[k] = F^(k)(g(x))`` and the jet of g."""
    order = min(len(outer), len(inner)) - 1
    if order > MAX_ORDER:
        raise ValueError("composition implemented up to order 4")
    f = outer
    g1 = inner[1] if order >= 1 else None
    out = np.zeros((order + 1,) + np.broadcast_shapes(outer.shape[1:], inner.shape[1:]))
    out[0] = f[0]
    if order >= 1:
        out[1] = f[1] * g1
    if order >= 2:
        g2 = inner[2]
        out[2] = f[2] * g1**2 + f[1] * g2
    if order >= 3:
        g3 = inner[3]
        out[3] = f[3] * g1**3 + 3.0 * f[2] * g1 * g2 + f[1] * g3
    if order >= 4:
        g4 = inner[4]
        out[4] = (
            f[4] * g1**4
            + 6.0 * f[3] * g1**2 * g2
            + f[2] * (3.0 * g2**2 + 4.0 * g1 * g3)
            + f[1] * g4
        )
    return out


def inverse(deriv_at_image: np.ndarray) -> np.ndarray:
    """Jet of ``A^{-1}`` at ``y = A(t)`` given the jet of A at t.

    ``deriv_at_image[0]`` is ignored except for shape; entry 0 of the result
    must be filled by the caller with ``t`` itself.
    """
    a = deriv_at_image
    order = len(a) - 1
    out = np.zeros_like(a)
    if order >= 1:
        out[1] = 1.0 / a[1]
    if order >= 2:
        out[2] = -a[2] / a[1] ** 3
    if order >= 3:
        out[3] = (3.0 * a[2] ** 2 - a[1] * a[3]) / a[1] ** 5
    if order >= 4:
        out[4] = (
            -15.0 * a[2] ** 3 + 10.0 * a[1] * a[2] * a[3] - a[1] ** 2 * a[4]
        ) / a[1] ** 7
    return out
