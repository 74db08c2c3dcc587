"""Plane curves (r(s), t(s)) that bend a tube towards its core.

A curve is stored as a chain of segments, each on its own uniform local
grid.  The bending algorithm shrinks the radius geometrically (by ~1e-17 for
the default constants), so a single global grid could not resolve it; every
segment is instead parametrised relative to its own length scale.

Angles are measured against ``-d/dr``: ``r' = -cos(theta)``,
``t' = sin(theta)`` and ``kappa = theta'``.  Cosines are evaluated as
``sin(pi/2 - theta)`` so that ``theta == pi/2`` gives an exactly vertical
piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from . import smooth
from .conditions import Condition, cone_radius
from .curvature_algebra import BlockLayout, DomainError, l_operator, model_operator
from .kernels import cumquad4
from .trace import DeformationTrace
from .warped_metrics import WarpProfile, warped_curvature_mats

HALF_PI = 0.5 * math.pi
MIN_NODES = 9


class CurveError(ValueError):
    """A curve leaves its admissible class; ``witness`` is the offending s."""

    def __init__(self, message: str, witness: float | None = None):
        super().__init__(message if witness is None else f"{message} (s = {witness:.6g})")
        self.witness = witness


# ---------------------------------------------------------------------------
# segments and curves
# ---------------------------------------------------------------------------
Fn = Callable[[np.ndarray], np.ndarray]


@dataclass
class Segment:
    """A piece of curve on ``[0, length]`` in local arc length.

    Either ``kappa_fn`` (with optional exact ``theta_fn``) or ``samples``
    (theta, kappa arrays on the local grid) must be given.
    """

    role: str
    length: float
    nodes: int
    kappa_fn: Fn | None = None
    theta_fn: Fn | None = None
    samples: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.length > 0 or not math.isfinite(self.length):
            raise DomainError(f"segment length must be positive, got {self.length}")
        if self.samples is None:
            self.nodes = max(int(self.nodes), MIN_NODES)
        else:
            self.nodes = len(self.samples[0])

    @property
    def h(self) -> float:
        return self.length / (self.nodes - 1)

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.nodes)

    def angles(self, theta_start: float) -> tuple[np.ndarray, np.ndarray]:
        if self.samples is not None:
            return np.asarray(self.samples[0], float), np.asarray(self.samples[1], float)
        u = self.grid()
        kappa = np.asarray(self.kappa_fn(u), dtype=float) * np.ones_like(u)
        if self.theta_fn is not None:
            theta = np.asarray(self.theta_fn(u), dtype=float) * np.ones_like(u)
        else:
            theta = theta_start + cumquad4(kappa, self.h)
        return theta, kappa

    def truncated(self, length: float, nodes: int | None = None) -> "Segment":
        nodes = nodes or max(MIN_NODES, int(round(self.nodes * length / self.length)))
        return Segment(self.role, length, nodes, self.kappa_fn, self.theta_fn, None, dict(self.meta))

    def scaled(self, factor: float) -> "Segment":
        """Same piece with angle and curvature multiplied by ``factor``."""
        k, th = self.kappa_fn, self.theta_fn
        return Segment(
            self.role, self.length, self.nodes,
            (lambda u: factor * k(u)) if k is not None else None,
            (lambda u: factor * th(u)) if th is not None else None,
            None, dict(self.meta),
        )


def const_segment(theta: float, length: float, nodes: int = 65, role: str = "straight") -> Segment:
    return Segment(role, length, nodes, lambda u: np.zeros_like(u), lambda u: np.full_like(u, theta))


def ramp_segment(theta_a: float, theta_b: float, length: float, nodes: int = 513, role: str = "ramp") -> Segment:
    """Smooth monotone transition, flat to infinite order at both ends."""
    d = theta_b - theta_a

    def theta(u):
        return theta_a + d * smooth.step(u / length)

    def kappa(u):
        return d / length * smooth.step_jet(u / length, 1)[1]

    return Segment(role, length, nodes, kappa, theta)


def bend_step_segment(theta_l: float, r_l: float, amplitude: float, nodes: int, clip: bool = False) -> Segment:
    """One inductive bending step of length ``r_l / 2``.

    The curvature is ``amplitude`` times a bump supported in
    ``[r_l/16, r_l/2 - r_l/16]`` with plateau on ``[r_l/8, r_l/2 - r_l/8]``;
    the angle gained is ``amplitude * 5 r_l / 16``.
    """
    L = 0.5 * r_l
    a, b, c, d = r_l / 16.0, r_l / 8.0, L - r_l / 8.0, L - r_l / 16.0

    def theta(u):
        val = theta_l + amplitude * smooth.plateau_bump_integral(u, a, b, c, d)
        return np.minimum(val, HALF_PI) if clip else val

    def kappa(u):
        return amplitude * smooth.plateau_bump_jet(u, a, b, c, d, 0)[0]

    seg = Segment("bend", L, nodes, kappa, theta)
    seg.meta.update(r_l=r_l, theta_l=theta_l, amplitude=amplitude, support=(a, d))
    return seg


def descent_segment(theta_a: float, length: float, nodes: int = 257) -> Segment:
    """Non-increasing return from ``theta_a`` to 0."""
    return ramp_segment(theta_a, 0.0, length, nodes, role="descent")


@dataclass
class Piece:
    segment: Segment
    s0: float
    u: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    r: np.ndarray
    t: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return self.s0 + self.u


_CELL_WEIGHTS = {  # four-point cell rules on [x_i, x_i+1], by stencil start offset
    -2: np.array([1.0, -5.0, 19.0, 9.0]) / 24.0,
    -1: np.array([-1.0, 13.0, 13.0, -1.0]) / 24.0,
    0: np.array([9.0, 19.0, -5.0, 1.0]) / 24.0,
}


def cumquad_eno(f: np.ndarray, h: float, bias: float = 4.0) -> np.ndarray:
    """Cumulative four-point quadrature that steers its stencils around kinks.

    Each cell uses the centred stencil unless its third difference exceeds
    ``bias`` times that of a one-sided stencil, as happens when the centred
    stencil straddles a jump in the derivative.  Smooth data keep the
    centred rule, so the result is fourth order either way.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    if n < 4:
        raise DomainError("need at least 4 samples")
    d3 = np.abs(f[3:] - 3 * f[2:-1] + 3 * f[1:-2] - f[:-3])  # d3[a]: stencil a..a+3
    cells = np.arange(n - 1)
    big = np.inf
    cost = {}
    for off in _CELL_WEIGHTS:
        a = cells + off
        ok = (a >= 0) & (a + 3 <= n - 1)
        cost[off] = np.where(ok, d3[np.clip(a, 0, n - 4)], big)
    centred = cost[-1]
    side = np.minimum(cost[-2], cost[0])
    use_side = ~np.isfinite(centred) | (centred > bias * side)
    off = np.where(use_side, np.where(cost[-2] <= cost[0], -2, 0), -1)
    out = np.empty(n - 1)
    for o, w in _CELL_WEIGHTS.items():
        sel = off == o
        a = cells[sel] + o
        out[sel] = h * (w[0] * f[a] + w[1] * f[a + 1] + w[2] * f[a + 2] + w[3] * f[a + 3])
    return np.concatenate([[0.0], np.cumsum(out)])


def _integrate(seg: Segment, theta0: float, r0: float, t0: float, s0: float) -> Piece:
    theta, kappa = seg.angles(theta0)
    h = seg.h
    # sampled angles may carry kinks; closed-form segments are smooth
    quad = cumquad_eno if seg.samples is not None and theta.size >= 4 else cumquad4
    r = r0 - quad(np.sin(HALF_PI - theta), h)
    t = t0 + quad(np.sin(theta), h)
    return Piece(seg, s0, seg.grid(), theta, kappa, r, t)


class PlaneCurve:
    """Arc-length plane curve starting at ``(rbar, 0)`` with ``theta(0) = 0``."""

    def __init__(self, rbar: float, segments: list[Segment], meta: dict | None = None):
        if not rbar > 0:
            raise DomainError("rbar must be positive")
        if not segments:
            raise DomainError("a curve needs at least one segment")
        self.rbar = float(rbar)
        self.segments = list(segments)
        self.meta = dict(meta or {})
        self.pieces: list[Piece] = []
        theta, r, t, s = 0.0, self.rbar, 0.0, 0.0
        for seg in self.segments:
            piece = _integrate(seg, theta, r, t, s)
            self.pieces.append(piece)
            theta, r, t = float(piece.theta[-1]), float(piece.r[-1]), float(piece.t[-1])
            s += seg.length
        self._cache: dict = {}

    def _cat(self, name: str) -> np.ndarray:
        if name not in self._cache:
            parts = [getattr(self.pieces[0], name)]
            parts += [getattr(p, name)[1:] for p in self.pieces[1:]]
            self._cache[name] = np.concatenate(parts)
        return self._cache[name]

    s = property(lambda self: self._cat("s"))
    theta = property(lambda self: self._cat("theta"))
    kappa = property(lambda self: self._cat("kappa"))
    r = property(lambda self: self._cat("r"))
    t = property(lambda self: self._cat("t"))

    @property
    def length(self) -> float:
        return math.fsum(seg.length for seg in self.segments)

    @property
    def end(self) -> dict:
        p = self.pieces[-1]
        return {"theta": float(p.theta[-1]), "r": float(p.r[-1]), "t": float(p.t[-1])}

    def points(self) -> np.ndarray:
        return np.column_stack([self.r, self.t])

    def role_mask(self, exclude: tuple[str, ...] = ()) -> np.ndarray:
        masks = [np.full(len(self.pieces[0].u), self.pieces[0].segment.role not in exclude)]
        for p in self.pieces[1:]:
            masks.append(np.full(len(p.u) - 1, p.segment.role not in exclude))
        return np.concatenate(masks)

    @property
    def knots(self) -> dict:
        return dict(self.meta.get("knots", {}))

    def rows(self):
        return zip(self.s, self.theta, self.kappa, self.r, self.t)

    def to_csv(self) -> str:
        lines = ["s,theta,kappa,r,t"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.rows()]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def _check_range(s: np.ndarray, theta: np.ndarray, tol: float = 1e-12) -> None:
    bad = np.flatnonzero((theta < -tol) | (theta > HALF_PI + tol))
    if bad.size:
        raise CurveError("angle leaves [0, pi/2]", float(s[bad[0]]))


def fd_derivatives(f: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives on a uniform grid, fourth order throughout.

    Works in the dtype of ``f`` (extended precision is kept).
    """
    f = np.asarray(f)
    if f.dtype.kind != "f":
        f = f.astype(float)
    n = f.size
    if n < 6:
        raise DomainError("need at least 6 samples for fourth-order differences")
    h = f.dtype.type(h)
    d1 = np.empty(n, dtype=f.dtype)
    d2 = np.empty(n, dtype=f.dtype)
    d1[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d2[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)
    for i, offs in ((0, tuple(range(6))), (1, tuple(range(-1, 5)))):
        w1, w2 = (np.array([float(x.numerator) / 1.0 for x in w], dtype=f.dtype)
                  / np.array([x.denominator for x in w], dtype=f.dtype) for w in _fd_weights(offs))
        idx = np.array(offs) + i
        d1[i] = np.sum(w1 * f[idx]) / h
        d2[i] = np.sum(w2 * f[idx]) / h**2
        d1[n - 1 - i] = -np.sum(w1 * f[n - 1 - idx]) / h
        d2[n - 1 - i] = np.sum(w2 * f[n - 1 - idx]) / h**2
    return d1, d2


@lru_cache(maxsize=None)
def _fd_weights(offsets: tuple) -> tuple:
    """Exact rational weights for the first and second derivative at 0."""
    m = len(offsets)
    out = []
    for order in (1, 2):
        rows = [[Fraction(o) ** p for o in offsets] + [Fraction(math.factorial(p) if p == order else 0)]
                for p in range(m)]
        for col in range(m):
            piv = next(r for r in range(col, m) if rows[r][col] != 0)
            rows[col], rows[piv] = rows[piv], rows[col]
            pv = rows[col][col]
            rows[col] = [x / pv for x in rows[col]]
            for r in range(m):
                if r != col and rows[r][col] != 0:
                    fac = rows[r][col]
                    rows[r] = [a - fac * b for a, b in zip(rows[r], rows[col])]
        out.append(tuple(rows[r][m] for r in range(m)))
    return tuple(out)


def _cumquad4_ext(f: np.ndarray, h) -> np.ndarray:
    """Extended-precision twin of the cumulative four-point rule."""
    f = np.asarray(f, dtype=np.longdouble)
    h = np.longdouble(h)
    cells = np.empty(f.size - 1, dtype=np.longdouble)
    cells[0] = h / 24 * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3])
    cells[-1] = h / 24 * (f[-4] - 5 * f[-3] + 19 * f[-2] + 9 * f[-1])
    cells[1:-1] = h / 24 * (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:])[: f.size - 3]
    return np.concatenate([[np.longdouble(0)], np.cumsum(cells)])


def curve_from_theta(theta, rbar: float, s_max: float) -> PlaneCurve:
    """Curve from angle samples on the uniform grid of ``[0, s_max]``."""
    theta = np.asarray(theta, dtype=float)
    s = np.linspace(0.0, s_max, theta.size)
    _check_range(s, theta)
    kappa, _ = fd_derivatives(theta, s[1] - s[0])
    return PlaneCurve(rbar, [Segment("samples", s_max, theta.size, samples=(theta, kappa))])


def curve_from_kappa(kappa, rbar: float, s_max: float) -> PlaneCurve:
    """Curve from curvature samples; the angle is the running integral."""
    kappa = np.asarray(kappa, dtype=float)
    s = np.linspace(0.0, s_max, kappa.size)
    theta = cumquad4(kappa, s[1] - s[0])
    _check_range(s, theta)
    return PlaneCurve(rbar, [Segment("samples", s_max, kappa.size, samples=(theta, kappa))])


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------
PARTITION_NAMES = ("s0", "s1", "s2", "s3", "s4", "s5", "s6")


@dataclass
class CurveClass:
    tag: str  # "Gamma_inf", "Gamma_b", "Gamma_tilde_b" or "none"
    b: float | None = None
    partition: dict | None = None
    s_low: float | None = None
    reason: str = ""

    @property
    def length(self) -> float | None:
        """Arc length up to the axis, when the axis is reached."""
        return self.b

    def to_dict(self) -> dict:
        return {"tag": self.tag, "b": self.b, "partition": self.partition,
                "s_low": self.s_low, "reason": self.reason}


def _axis_hit(s: np.ndarray, r: np.ndarray) -> tuple[int, float] | None:
    """First axis crossing; a last sample that is zero up to rounding counts."""
    hit = np.flatnonzero(r <= 0.0)
    if hit.size == 0:
        if len(r) > 1 and abs(r[-1]) <= 1e-6 * abs(r[-2] - r[-1]):
            return len(r) - 1, float(s[-1])
        return None
    i = int(hit[0])
    if i == 0:
        return 0, float(s[0])
    if r[i] >= 0.0:
        return i, float(s[i])
    frac = r[i - 1] / (r[i - 1] - r[i])
    return i, float(s[i - 1] + frac * (s[i] - s[i - 1]))


def classify(c: PlaneCurve, tol: float = 1e-6, kappa_tol: float = 0.0) -> CurveClass:
    """Sort a curve into the never-reaching / axis-hitting / partitioned classes."""
    s, th, ka, r, t = c.s, c.theta, c.kappa, c.r, c.t
    if abs(th[0]) > tol or abs(t[0]) > tol or abs(r[0] - c.rbar) > tol * c.rbar:
        return CurveClass("none", reason="does not start at (rbar, 0) with zero angle")
    if np.any(th < -tol) or np.any(th > HALF_PI + tol):
        return CurveClass("none", reason="angle leaves [0, pi/2]")
    hit = _axis_hit(s, r)
    upto = len(s) if hit is None else hit[0] + 1
    if np.any(np.diff(r[:upto]) > tol * c.rbar) or np.any(np.diff(t[:upto]) < -tol):
        return CurveClass("none", reason="r increases or t decreases")
    if hit is None:
        vertical = np.abs(th - HALF_PI) <= tol
        if not vertical[-1]:
            return CurveClass("none", reason="neither reaches the axis nor turns vertical")
        tail = len(th) - int(np.argmin(vertical[::-1])) if not vertical.all() else 0
        return CurveClass("Gamma_inf", s_low=float(s[tail]))
    i_hit, b = hit
    if abs(th[i_hit]) > tol:
        return CurveClass("none", b=b, reason="axis reached at an oblique angle")
    part = _partition(s[:upto], th[:upto], ka[:upto], r[:upto], b, tol, kappa_tol)
    if isinstance(part, str):
        return CurveClass("Gamma_b", b=b, reason=part)
    return CurveClass("Gamma_tilde_b", b=b, partition=part)


def _partition(s, th, ka, r, b, tol, kappa_tol):
    pos = ka > kappa_tol
    nz = np.abs(ka) > kappa_tol
    idx = np.flatnonzero(pos)
    if idx.size == 0:
        return "no bending"
    i1 = int(idx[0])
    i2 = i1 + int(np.argmin(pos[i1:])) if not pos[i1:].all() else len(s) - 1
    later = np.flatnonzero(pos[i2:])
    i3 = i2 + int(later[0]) if later.size else i2
    vert = np.flatnonzero(th >= HALF_PI - 1e-9)
    if vert.size == 0:
        return "never vertical"
    bent = np.flatnonzero(pos[: int(vert[-1]) + 1])
    i4 = int(bent[-1]) + 1 if bent.size else int(vert[0])
    if i4 >= len(s) or th[i4] < HALF_PI - 1e-9:
        return "never vertical"
    moving = np.flatnonzero(nz[i4:])
    i5 = i4 + int(moving[0]) - 1 if moving.size else len(s) - 1
    if np.any(th[i4:i5 + 1] < HALF_PI - 1e-9):
        return "vertical stretch interrupted"
    if np.any(np.abs(ka[i4:i5 + 1]) > tol):
        return "curvature on the vertical stretch"
    if np.max(np.abs(r[i4:i5 + 1] - r[i4])) > tol * max(r[i4], 1e-300):
        return "radius moves on the vertical stretch"
    if np.any(ka[i3:i4] < -tol):
        return "angle decreases before turning vertical"
    if np.any(ka[i5:] > tol):
        return "angle increases after the vertical stretch"
    last = np.flatnonzero(nz)
    i6 = min(int(last[-1]) + 1, len(s) - 1)
    if i6 < i5:
        i6 = i5
    if np.any(np.abs(th[i6:]) > tol):
        return "angle not zero before the axis"
    prev = lambda i: float(s[max(i - 1, 0)])  # noqa: E731 - last flat sample before i
    vals = [0.0, prev(i1) if i1 > 0 else 0.0, float(s[i2]), prev(i3), float(s[i4]), float(s[i5]), float(s[i6])]
    return dict(zip(PARTITION_NAMES, vals)) | {"b": b}


# ---------------------------------------------------------------------------
# the bending construction
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BendParams:
    rho: float
    C2: float
    theta0: float = 0.1
    rbar: float = 1.0
    r_target: float | None = None
    s2: float | None = None
    plateau: float = 1.0
    descent_ratio: float = 0.5
    bend_grid: int = 4096
    ramp_nodes: int = 513
    descent_nodes: int = 257
    max_steps: int | None = None

    def __post_init__(self):
        if not (self.rho > 0 and self.C2 > 0 and self.rbar > 0):
            raise DomainError("rho, C2 and rbar must be positive")
        if not 0.0 <= self.theta0 < HALF_PI:
            raise DomainError("theta0 must lie in [0, pi/2)")
        if self.s2 is not None and not self.s2 > 0:
            raise DomainError("s2 must be positive")
        if self.r_target is not None and not self.r_target > 0:
            raise DomainError("r_target must be positive")
        if not 0 < self.descent_ratio < 1:
            raise DomainError("descent_ratio must lie in (0, 1)")
        if self.plateau <= 0:
            raise DomainError("plateau length must be positive")

    @property
    def ramp_length(self) -> float:
        return self.rbar / 4.0 if self.s2 is None else self.s2

    @property
    def step_gain(self) -> float:
        """Guaranteed angle gain per full step, relative to sin(theta0)."""
        return self.rho / (16.0 * self.C2)

    def step_bound(self) -> int:
        """Steps needed at most: each full step gains >= gain * sin(theta0)."""
        if self.theta0 == 0:
            raise DomainError("the step bound needs theta0 > 0")
        x = (HALF_PI - self.theta0) / (self.step_gain * math.sin(self.theta0))
        return math.floor(x) + 1

    def bend_bound_coefficient(self) -> float:
        """Plateau curvature coefficient: kappa <= coef * sin(theta_l) / r_l."""
        return self.rho / (4.0 * self.C2)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def bend_constants(condition: Condition, q: int, ambient: WarpProfile | None = None,
                   rbar: float = 1.0, samples: int = 6, seed: int | None = None) -> dict:
    """Cone opening and L-norm for bending inside ``ambient``.

    ``rho`` is the smallest certified cone radius of the ambient curvature at
    ``samples`` radii in ``(0, rbar]``; ``C2`` is the Frobenius norm of the
    L operator, the exact constant of the warped model.
    """
    n = condition.n
    lop = l_operator(n, BlockLayout.warped(n, q))
    C2 = lop.norm()
    if ambient is None:
        return {"rho": 0.0, "C2": C2, "radii": [], "note": "flat ambient has no cone opening"}
    rs = np.linspace(rbar / samples, rbar, samples)
    mats = warped_curvature_mats(ambient, rs, n, q)
    from .curvature_algebra import CurvOp

    radii = [cone_radius(condition, CurvOp(n, m), seed=seed).radius for m in mats]
    return {"rho": float(min(radii)), "C2": C2, "radii": [float(x) for x in radii]}


def initial_bend(p: BendParams, nodes: int | None = None) -> Segment:
    """Monotone ramp from 0 to theta0 on ``[0, s2]``, flat at both ends."""
    return ramp_segment(0.0, p.theta0, p.ramp_length, nodes or p.ramp_nodes)


@dataclass
class BendLog:
    steps: int
    bound: int
    r_start: list
    theta_start: list
    amplitude: list
    halving_ok: bool
    shrink_factor: float

    def to_dict(self) -> dict:
        return {"steps": self.steps, "bound": self.bound, "halving_ok": self.halving_ok,
                "shrink_factor": self.shrink_factor, "r_start": self.r_start,
                "theta_start": self.theta_start, "amplitude": self.amplitude}


def second_bend(p: BendParams, r2: float, nodes_per_step=65, plateau_nodes: int = 65):
    """Inductive bending from theta0 to pi/2, then the vertical stretch.

    Returns ``(segments, log)``; the last segment is the vertical plateau.
    ``nodes_per_step`` is an int or a sequence indexed by step.
    """
    if not r2 > 0:
        raise DomainError("bending needs r > 0")
    if not 0 < p.theta0 < HALF_PI:
        raise DomainError("bending needs theta0 in (0, pi/2)")
    coef = p.bend_bound_coefficient()
    max_steps = p.max_steps or p.step_bound() + 16
    theta, r, t = p.theta0, r2, 0.0
    segs, rs, ths, amps = [], [], [], []
    halving_ok = True
    for step in range(max_steps):
        nodes = nodes_per_step if isinstance(nodes_per_step, int) else nodes_per_step[min(step, len(nodes_per_step) - 1)]
        amp = coef * math.sin(theta) / r
        last = theta + amp * 5.0 * r / 16.0 >= HALF_PI
        if last:
            amp = (HALF_PI - theta) / (5.0 * r / 16.0)
        seg = bend_step_segment(theta, r, amp, nodes, clip=last)
        piece = _integrate(seg, theta, r, t, 0.0)
        segs.append(seg)
        rs.append(r)
        ths.append(theta)
        amps.append(amp)
        r_next = float(piece.r[-1])
        halving_ok &= bool(np.all(piece.r >= 0.5 * r))
        theta, r, t = (HALF_PI if last else float(piece.theta[-1])), r_next, float(piece.t[-1])
        if last:
            break
    else:
        raise CurveError(f"bending did not reach pi/2 within {max_steps} steps")
    segs.append(const_segment(HALF_PI, p.plateau, plateau_nodes, role="plateau"))
    log = BendLog(len(rs), p.step_bound(), rs, ths, amps, halving_ok, r / r2)
    return segs, log


def close_curve(segments: list[Segment], p: BendParams, descent_nodes: int = 257,
                axis_nodes: int = 257, meta: dict | None = None) -> PlaneCurve:
    """Append the descent back to angle 0 and the straight run to the axis."""
    head = PlaneCurve(p.rbar, segments)
    end = head.end
    if abs(end["theta"] - HALF_PI) > 1e-12:
        raise CurveError("closing needs a vertical end", head.length)
    r4 = end["r"]
    desc = descent_segment(HALF_PI, p.descent_ratio * r4, descent_nodes)
    tail = PlaneCurve(p.rbar, segments + [desc])
    r6 = tail.end["r"]
    if not r6 > 0:
        raise CurveError("descent reaches the axis before the angle returns to 0", tail.length)
    axis = const_segment(0.0, r6, axis_nodes, role="axis")
    return PlaneCurve(p.rbar, segments + [desc, axis], meta)


@dataclass
class BentCurve:
    curve: PlaneCurve
    log: BendLog
    params: BendParams
    r_tube: float
    r_target_exact: bool

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "log": self.log.to_dict(),
                "r_tube": self.r_tube, "r_target_exact": self.r_target_exact,
                "knots": self.curve.knots}


def _allocate(total: int, steps: int) -> list[int]:
    inner = total - 1
    base, extra = divmod(inner, steps)
    return [base + (1 if i < extra else 0) + 1 for i in range(steps)]


def build_curve(p: BendParams) -> BentCurve:
    """Ramp, optional straight run, inductive bend, plateau, descent, axis run.

    ``bend_grid`` points in total are spread over the bending steps.  When
    ``r_target`` is set and reachable, a straight run at angle theta0 is
    inserted so that the vertical stretch sits exactly at radius ``r_target``.
    The bend shrinks the radius by a fixed factor, so a target above
    ``factor * r(s2)`` cannot be met; the bend then starts immediately and the
    smaller radius is reported with ``r_target_exact = False``.
    """
    ramp = initial_bend(p)
    start = PlaneCurve(p.rbar, [ramp]).end
    r2 = start["r"]
    if p.theta0 == 0:
        raise DomainError("a bent curve needs theta0 > 0")
    _, probe = second_bend(p, 1.0, 129)
    factor = probe.shrink_factor
    lead = [ramp]
    r3 = r2
    exact = False
    if p.r_target is not None and p.r_target / factor < r2:
        run = (r2 - p.r_target / factor) / math.cos(p.theta0)
        lead.append(const_segment(p.theta0, run, 65, role="straight"))
        r3 = PlaneCurve(p.rbar, lead).end["r"]
        exact = True
    steps = probe.steps
    for _ in range(4):
        alloc = _allocate(p.bend_grid, steps)
        bend, log = second_bend(p, r3, alloc)
        if log.steps == steps:
            break
        steps = log.steps
    lengths = [seg.length for seg in lead]
    s2 = ramp.length
    s3 = math.fsum(lengths)
    first = bend[0]
    s3_eff = s3 + first.meta["support"][0]
    bend_len = math.fsum(seg.length for seg in bend[:-1])
    last = bend[-2]
    s4 = s3 + bend_len - (last.length - last.meta["support"][1])
    s5 = s3 + bend_len + p.plateau
    curve = close_curve(lead + bend, p, p.descent_nodes)
    desc, axis = curve.segments[-2], curve.segments[-1]
    s6 = s5 + desc.length
    knots = {"s0": 0.0, "s1": 0.0, "s2": s2, "s3": s3_eff, "s4": s4, "s5": s5, "s6": s6,
             "b": s6 + axis.length}
    curve.meta["knots"] = knots
    r_tube = curve.pieces[len(lead) + len(bend) - 1].r[0]
    return BentCurve(curve, log, p, float(r_tube), exact)


# ---------------------------------------------------------------------------
# the bending inequality
# ---------------------------------------------------------------------------
@dataclass
class InequalityReport:
    """``kappa * r <= bound * sin(theta)`` on the checked region."""

    coefficient: float
    max_excess: float
    max_ratio: float
    worst_s: float
    points: int

    def holds(self, slack: float = 1e-9) -> bool:
        return self.max_excess <= slack


def bending_inequality(c: PlaneCurve, rho: float, C2: float, factor: float = 2.0,
                       skip_roles: tuple[str, ...] = ("ramp",), only_roles: tuple[str, ...] | None = None) -> InequalityReport:
    """Check ``theta' r <= (rho / (factor C2)) sin(theta)`` pointwise.

    The ramp away from the start is excluded by default; the bound there is
    a smallness assumption on the ambient, not a property of the curve.
    """
    coef = rho / (factor * C2)
    if only_roles is not None:
        mask = np.concatenate([np.full(len(p.u), p.segment.role in only_roles) for p in c.pieces])
        arrs = [np.concatenate([getattr(p, a) for p in c.pieces]) for a in ("s", "theta", "kappa", "r")]
    else:
        mask = c.role_mask(skip_roles)
        arrs = [c.s, c.theta, c.kappa, c.r]
    s, th, ka, r = (a[mask] for a in arrs)
    lhs = ka * r
    rhs = coef * np.sin(th)
    excess = lhs - rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    i = int(np.argmax(excess)) if excess.size else 0
    return InequalityReport(coef, float(excess.max(initial=-np.inf)), float(ratio.max(initial=0.0)),
                            float(s[i]) if s.size else 0.0, int(mask.sum()))


# ---------------------------------------------------------------------------
# curvature of the bent tube
# ---------------------------------------------------------------------------
@dataclass
class FlatIdentity:
    max_abs: float
    max_rel: float
    worst_s: float
    points: int


def _profile_along(c: PlaneCurve, ambient: WarpProfile | None):
    """B = beta(r(s)) with B', B'' by the chain rule, plus lambda and mu."""
    th, ka, r = c.theta, c.kappa, c.r
    cos, sin = np.sin(HALF_PI - th), np.sin(th)
    if ambient is None:
        B, b1, b2, defect = r, np.ones_like(r), np.zeros_like(r), np.zeros_like(r)
    else:
        jet = ambient.jet(np.clip(r, 0.0, None), 2)
        B, b1, b2 = jet[0], jet[1], jet[2]
        defect = ambient.defect(np.clip(r, 0.0, None))
    B2 = b2 * cos**2 + b1 * sin * ka
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (defect * cos**2 + sin**2) / B**2
        mu = -B2 / B
    return B, lam, mu


def flat_model_check(c: PlaneCurve, k: int, q: int, condition: Condition,
                     ambient: WarpProfile | None = None, identity: bool = True) -> tuple[DeformationTrace, FlatIdentity | None]:
    """Condition margins of the bent tube metric along the curve.

    The bent hypersurface carries the warped metric with profile
    ``B(s) = beta(r(s))``.  In the flat ambient the curvature splits as
    ``sin^2(theta) / r^2`` times the sphere model plus an error term that must
    equal ``-(theta' sin(theta) / r) L``; that identity is checked with B'
    and B'' taken by finite differences of the sampled r(s).
    """
    n = k + q
    if condition.n != n:
        raise DomainError(f"condition is for n={condition.n}, tube has n={n}")
    B, lam, mu = _profile_along(c, ambient)
    s = c.s
    inner = np.arange(len(s)) < len(s) - 1
    if np.any(B[inner] <= 0):
        i = int(np.flatnonzero(B[inner] <= 0)[0])
        raise CurveError("tube profile vanishes before the end of the curve", float(s[i]))
    keep = B > 0
    model = model_operator(n, q - 1).mat
    lop = l_operator(n, BlockLayout.warped(n, q)).mat
    mats = lam[keep, None, None] * model + mu[keep, None, None] * lop
    margins = condition.margins_batch(mats)
    trace = DeformationTrace(condition.label())
    for si, m in zip(s[keep], margins):
        trace.add("bend", si, m)
    trace.flags["ambient"] = "flat" if ambient is None else repr(ambient)
    trace.flags["all_positive"] = bool(np.all(margins > 0))
    ident = None
    if identity and ambient is None:
        ident = _flat_identity(c, n, q, model, lop)
        trace.flags["identity_max_abs"] = ident.max_abs
    return trace, ident


def _flat_identity(c: PlaneCurve, n: int, q: int, model: np.ndarray, lop: np.ndarray) -> FlatIdentity:
    s6 = c.knots.get("s6")
    worst = (0.0, 0.0, 0.0)
    count = 0
    nm, nl = np.linalg.norm(model), np.linalg.norm(lop)
    for p in c.pieces:
        if p.segment.role == "axis":
            continue
        cos = np.sin(HALF_PI - p.theta.astype(np.longdouble))
        B = np.longdouble(p.r[0]) - _cumquad4_ext(cos, p.segment.h)
        d1, d2 = fd_derivatives(B, p.segment.h)
        sel = p.r > 0
        if s6 is not None:
            sel &= p.s <= s6
        sin = np.sin(p.theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (1.0 - d1**2) / B**2
            mu = -d2 / B
            e_model = lam - sin**2 / B**2
            e_l = mu + p.kappa * sin / B
            scale = 1.0 + sin**2 / B**2 + np.abs(p.kappa * sin / B)
        res = np.sqrt((nm * e_model) ** 2 + (nl * e_l) ** 2).astype(float)
        scale = scale.astype(float)
        res, scale, ss = res[sel], scale[sel], p.s[sel]
        count += int(sel.sum())
        if res.size:
            i = int(np.argmax(res))
            if res[i] > worst[0]:
                worst = (float(res[i]), worst[1], float(ss[i]))
            worst = (worst[0], max(worst[1], float(np.max(res / scale))), worst[2])
    return FlatIdentity(worst[0], worst[1], worst[2], count)


REFERENCE_KNOTS = (0.0, 0.3, 0.3, 0.7, 0.75, 1.25)


def reference_curve(grid_n: int = 4096, rbar: float = 1.0, theta0: float = 0.3,
                    knots: tuple = REFERENCE_KNOTS) -> PlaneCurve:
    """A smooth partitioned curve on one uniform grid with wide transitions.

    Knots sit at fixed fractions of ``rbar``; the axis run closes it.  Used to
    test the flat curvature identity at a resolution where the construction
    itself is fully resolved.
    """
    k = np.asarray(knots, dtype=float) * rbar
    jumps = [(k[0], k[1], theta0), (k[2], k[3], HALF_PI - theta0), (k[4], k[5], -HALF_PI)]

    def angle(s, order=1):
        th = np.zeros_like(s)
        ka = np.zeros_like(s)
        for a, b, d in jumps:
            jet = smooth.ramp_jet(s, a, b, order)
            th += d * jet[0]
            ka += d * jet[1]
        return th, ka

    nodes, weights = np.polynomial.legendre.leggauss(40)
    edges = np.concatenate([[0.0], k])
    drop = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * (nodes + 1.0) + a
        drop += 0.5 * (b - a) * np.sum(weights * np.cos(angle(x)[0]))
    r6 = rbar - drop
    if not r6 > 0:
        raise CurveError("reference curve reaches the axis early")
    total = k[-1] + r6
    s = np.linspace(0.0, total, grid_n)
    th, ka = angle(s)
    th[s >= k[-1]] = 0.0
    ka[s >= k[-1]] = 0.0
    curve = PlaneCurve(rbar, [Segment("samples", total, grid_n, samples=(th, ka))])
    curve.meta["knots"] = dict(zip(PARTITION_NAMES, [0.0, *k])) | {"b": total}
    return curve


# ---------------------------------------------------------------------------
# straightening isotopy
# ---------------------------------------------------------------------------
class IsotopyError(RuntimeError):
    pass


def _gl_integral(fn: Fn, a: float, b: float, panels: int = 8, order: int = 20) -> float:
    if b <= a:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += 0.5 * (hi - lo) * float(np.sum(w * fn(0.5 * (hi - lo) * (x + 1.0) + lo)))
    return total


def _cut_segments(segs: list[Segment], i: int, u_p: float, width: float, nodes: int) -> list[Segment]:
    """Segments from index ``i`` onward, curvature damped to 0 over ``width`` past ``u_p``."""
    out = []
    if u_p > 0:
        out.append(segs[i].truncated(u_p))
    offset = 0.0
    j, start = i, u_p
    while offset < width and j < len(segs):
        seg = segs[j]
        span = min(seg.length - start, width - offset)
        if span > 0:
            k = seg.kappa_fn
            st, off = start, offset

            def kappa(u, k=k, st=st, off=off):
                return k(st + u) * (1.0 - smooth.step((off + u) / width))

            out.append(Segment(seg.role, span, nodes, kappa, None, None, {"cut": True}))
            offset += span
        j += 1
        start = 0.0
    return out


@dataclass
class IsotopySample:
    tau: float
    stage: str
    curve: PlaneCurve
    info: dict


@dataclass
class Isotopy:
    gamma: PlaneCurve
    params: BendParams
    cutoff: float
    samples: list

    def inequality(self) -> list[InequalityReport]:
        return [bending_inequality(smp.curve, self.params.rho, self.params.C2) for smp in self.samples]

    def total_turning(self) -> list[float]:
        return [total_turning(smp.curve) for smp in self.samples]


def total_turning(c: PlaneCurve, panels: int = 32) -> float:
    """Integral of the curvature over the whole curve, segment by segment."""
    parts = []
    for p in c.pieces:
        seg = p.segment
        if seg.kappa_fn is None:
            parts.append(float(cumquad4(p.kappa, seg.h)[-1]))
        else:
            parts.append(_gl_integral(seg.kappa_fn, 0.0, seg.length, panels=panels))
    return math.fsum(parts)


def _point_to_polyline(a: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point of ``a`` to the polyline through ``poly``."""
    _, idx = cKDTree(poly).query(a)
    best = np.full(len(a), np.inf)
    for shift in (-1, 0):
        i0 = np.clip(idx + shift, 0, len(poly) - 2)
        p0, p1 = poly[i0], poly[i0 + 1]
        d = p1 - p0
        dd = np.einsum("ij,ij->i", d, d)
        with np.errstate(invalid="ignore", divide="ignore"):
            lam = np.clip(np.einsum("ij,ij->i", a - p0, d) / dd, 0.0, 1.0)
        lam = np.where(dd > 0, lam, 0.0)
        best = np.minimum(best, np.linalg.norm(a - (p0 + lam[:, None] * d), axis=1))
    return best


def hausdorff(c1: PlaneCurve, c2: PlaneCurve) -> float:
    """Hausdorff distance between the two sampled polylines."""
    a, b = c1.points(), c2.points()
    return float(max(_point_to_polyline(a, b).max(), _point_to_polyline(b, a).max()))


def straight_curve(rbar: float, nodes: int = 257) -> PlaneCurve:
    """The radial segment from (rbar, 0) to the axis."""
    return PlaneCurve(rbar, [const_segment(0.0, rbar, nodes, role="axis")])


def _roles(gamma: PlaneCurve):
    roles = [seg.role for seg in gamma.segments]
    if "bend" not in roles or "plateau" not in roles or "descent" not in roles:
        raise IsotopyError("isotopy needs a curve built by build_curve")
    first = roles.index("bend")
    last = len(roles) - 1 - roles[::-1].index("bend")
    return first, last, roles.index("plateau"), roles.index("descent")


def _close_with_axis(rbar: float, segs: list[Segment], axis_nodes: int, meta: dict) -> PlaneCurve:
    head = PlaneCurve(rbar, segs)
    r_end = head.end["r"]
    if not r_end > 0:
        raise IsotopyError(f"intermediate curve reaches the axis early (r = {r_end:.3g})")
    theta_end = head.end["theta"]
    if abs(theta_end) > 1e-12:
        raise IsotopyError(f"turning does not return to 0 (theta = {theta_end:.3g})")
    run = brentq(lambda ell: r_end - ell, 0.0, 2.0 * r_end, xtol=1e-15 * r_end, rtol=1e-15)
    return PlaneCurve(rbar, segs + [const_segment(0.0, run, axis_nodes, role="axis")], meta)


def isotopy_curve(gamma: PlaneCurve, p: BendParams, tau: float, cutoff: float = 0.25,
                  run_fraction: float = 0.5, cut_nodes: int = 129) -> IsotopySample:
    """The curve at parameter ``tau``: unbend for tau <= 1/2, then straighten."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError("tau must lie in [0, 1]")
    if tau <= 0.5:
        return _unbend(gamma, p, 2.0 * tau, cutoff, run_fraction, cut_nodes, tau)
    end = _unbend(gamma, p, 1.0, cutoff, run_fraction, cut_nodes, 0.5)
    u = 2.0 * tau - 1.0
    segs = [seg.scaled(1.0 - u) for seg in end.curve.segments[:-1]]
    curve = _close_with_axis(p.rbar, segs, end.curve.segments[-1].nodes, {"stage": "straighten", "u": u})
    return IsotopySample(tau, "straighten", curve, {"u": u})


def _unbend(gamma, p, t, cutoff, run_fraction, cut_nodes, tau) -> IsotopySample:
    first, last, i_plat, i_desc = _roles(gamma)
    segs = gamma.segments
    bend_len = math.fsum(seg.length for seg in segs[first:last + 1])
    dist = t * bend_len
    if t == 0.0:
        i, u_p = i_plat, 0.0
    else:
        acc, i, u_p = 0.0, first, 0.0
        for j in range(last, first - 1, -1):
            if acc + segs[j].length >= dist:
                i, u_p = j, segs[j].length - (dist - acc)
                break
            acc += segs[j].length
        u_p = max(u_p, 0.0)
    r_seg = gamma.pieces[i].r[0]
    th_fn = segs[i].theta_fn
    r_p = r_seg - _gl_integral(lambda u: np.sin(HALF_PI - th_fn(u)), 0.0, u_p) if u_p > 0 else r_seg
    width = cutoff * r_p
    lead = list(segs[:i]) + _cut_segments(list(segs[: i_desc]), i, u_p, width, cut_nodes)
    head = PlaneCurve(p.rbar, lead)
    theta_cut, r_cut = head.end["theta"], head.end["r"]
    plateau = segs[i_plat].length
    run = (1.0 - t) * max(plateau - width, 0.0)
    cos_cut = math.sin(HALF_PI - theta_cut)
    if cos_cut > 0:
        run = min(run, run_fraction * r_cut / cos_cut)
    body = lead + ([const_segment(theta_cut, run, 65, role="plateau")] if run > 0 else [])
    r_start = r_cut - run * cos_cut
    desc = segs[i_desc]
    lam = p.descent_ratio * r_start / desc.length
    turn = _gl_integral(desc.kappa_fn, 0.0, desc.length)
    # the trailing branch is eps * kappa_desc(u / lam); solve for gain = eps * lam
    try:
        gain = brentq(lambda g: theta_cut + g * turn, 0.0, 4.0, xtol=1e-15, rtol=1e-15)
    except ValueError as exc:
        raise IsotopyError(f"no turning balance at t={t}: bracket [0, 4]") from exc
    eps = gain / lam
    kd, td = desc.kappa_fn, desc.theta_fn
    theta0_desc = float(td(np.zeros(1))[0])

    def kappa(u):
        return eps * kd(u / lam)

    def theta(u):
        return np.maximum(theta_cut + gain * (td(u / lam) - theta0_desc), 0.0)

    trail = Segment("descent", lam * desc.length, desc.nodes, kappa, theta)
    curve = _close_with_axis(p.rbar, body + [trail], segs[-1].nodes, {"stage": "unbend", "t": t})
    info = {"t": t, "theta_cut": theta_cut, "r_cut": r_cut, "width": width, "run": run,
            "eps": eps, "lam": lam}
    return IsotopySample(tau, "unbend", curve, info)


def straighten_isotopy(bent: BentCurve, samples: int = 21, cutoff: float | None = None,
                       max_halvings: int = 30) -> Isotopy:
    """Sampled isotopy from the bent curve to the radial segment.

    The cutoff width is ``cutoff * r(p)`` at the cut point ``p``.  When not
    given, it starts at 1/4 and is halved until every sample meets the
    bending inequality with the stricter coefficient ``rho / (3 C2)``.
    """
    p = bent.params
    taus = np.linspace(0.0, 1.0, samples)
    c = 0.25 if cutoff is None else cutoff
    for _ in range(max_halvings):
        frames = [isotopy_curve(bent.curve, p, float(tau), c) for tau in taus]
        if cutoff is not None:
            break
        ok = all(bending_inequality(f.curve, p.rho, p.C2, factor=3.0).holds() for f in frames)
        if ok:
            break
        c *= 0.5
    else:
        raise IsotopyError("no cutoff width keeps the bending inequality")
    return Isotopy(bent.curve, p, c, frames)
