"""Pure numpy implementations of the hot kernels (fallback backend)."""

from __future__ import annotations

import numpy as np


def cumquad4(f: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral of uniformly sampled ``f`` with spacing ``h``.

    Each cell uses the four-point cubic rule (one-sided at the two boundary
    cells), giving a fourth-order, smoothly varying error.
    """
    f = np.ascontiguousarray(f, dtype=float)
    n = f.shape[0]
    out = np.zeros(n)
    if n < 2:
        return out
    if n == 2:
        out[1] = 0.5 * h * (f[0] + f[1])
        return out
    if n == 3:
        cells = np.array(
            [h / 12.0 * (5 * f[0] + 8 * f[1] - f[2]), h / 12.0 * (-f[0] + 8 * f[1] + 5 * f[2])]
        )
        out[1:] = np.cumsum(cells)
        return out
    cells = np.empty(n - 1)
    cells[0] = h / 24.0 * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3])
    cells[-1] = h / 24.0 * (f[-4] - 5 * f[-3] + 19 * f[-2] + 9 * f[-1])
    if n >= 4:
        cells[1:-1] = h / 24.0 * (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:])[: n - 3]
    out[1:] = np.cumsum(cells)
    return out


def jacobi_stack(t4: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``M[r, b, i, k] = sum_{j,l} T[i, j, k, l] q[r, j, b] q[r, l, b]``."""
    return np.einsum("ijkl,rjb,rlb->rbik", t4, q, q, optimize=True)


def frame_values(t4: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``F(Q) = sum_{a,b} T(q_a, q_b, q_a, q_b)`` for a batch of frames."""
    m = jacobi_stack(t4, q)
    return np.einsum("ria,rbik,rka->r", q, m, q, optimize=True)


def frame_values_grad(t4: np.ndarray, q: np.ndarray):
    """Values of ``F`` and its Euclidean gradient ``4 sum_b M(q_b) q_a``."""
    m = jacobi_stack(t4, q)
    mq = np.einsum("rbik,rka->ria", m, q, optimize=True)
    vals = np.einsum("ria,ria->r", q, mq)
    return vals, 4.0 * mq
