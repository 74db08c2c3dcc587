"""Deformations of rotationally symmetric disc metrics towards a torpedo.

A disc metric is ``alpha(t)^2 dt^2 + beta(t)^2 g_{S^{q-1}}`` on ``D^q(delta)``,
tested against a curvature condition on ``R^{n-q} x D^q``.  Its arc-length
form ``dr^2 + b(r)^2 g_S`` on ``[0, rad]`` is what the deformations act on:

* stage one reparametrizes ``b`` by ``phi_s`` (slope pinned to ``1 - s C2`` on
  a middle window), which lowers ``b'`` and buys room in the
  ``R x S^{q-1}`` direction;
* stage two reparametrizes by ``psi_s`` whose endpoint is flat to infinite
  order at ``sigma``, so the profile becomes constant there;
* the blend replaces ``[0, sigma]`` by a mollified torpedo;
* the straightening pulls back by a radial contraction until the torpedo
  fills the whole disc.

Every arc-length profile is turned back into a metric on the original disc by
a fixed gauge (``denormalize``) that agrees with the input near the boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from . import jets
from .conditions import EPS_STRICT, Condition, cone_radius
from .curvature_algebra import DomainError, model_operator
from .smooth import max_step_slope, plateau_bump_integral, plateau_bump_jet, step_integral, step_jet
from .trace import DeformationTrace
from .warped_metrics import (
    BumpProfile,
    ConstantProfile,
    SumProfile,
    TorpedoProfile,
    WarpProfile,
    check_profile,
    profile_from_dict,
    warped_coefficients,
    warped_margins,
)

SMOOTHNESS_ORDER = 4
SMOOTHNESS_TOL = 1e-5


class PipelineError(DomainError):
    """A deformation step failed; ``witness`` locates the failure."""

    def __init__(self, msg: str, witness: dict | None = None):
        super().__init__(msg)
        self.witness = witness or {}


@lru_cache(maxsize=4)
def _gl(count: int = 20):
    return np.polynomial.legendre.leggauss(count)


def _gl_integral(f, lo, hi, panels: int = 16, nodes: int = 20) -> np.ndarray:
    """Composite Gauss-Legendre ``int_lo^hi f`` for arrays of upper limits."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), np.shape(hi))
    hi = np.asarray(hi, dtype=float)
    nodes, weights = _gl(nodes)
    edges = lo[..., None] + (hi - lo)[..., None] * np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[..., 1:] + edges[..., :-1])
    half = 0.5 * (edges[..., 1:] - edges[..., :-1])
    x = mid[..., None] + half[..., None] * nodes
    return np.sum(half[..., None] * weights * f(x), axis=(-1, -2))


def _unit_interval_jet(x, lo: float, hi: float, order: int):
    """Jet of the affine map sending [lo, hi] to [0, 1]."""
    out = jets.identity((np.asarray(x, dtype=float) - lo) / (hi - lo), order)
    if order >= 1:
        out[1] = 1.0 / (hi - lo)
    return out


# ----------------------------------------------------------------------------
# metrics and normalization


@dataclass
class RotMetric:
    """``alpha^2 dt^2 + beta^2 g_{S^{q-1}}`` on the disc of coordinate radius ``delta``."""

    q: int
    n: int
    delta: float
    alpha: WarpProfile
    beta: WarpProfile

    def __post_init__(self):
        if self.q < 2 or self.n < self.q:
            raise DomainError(f"need 2 <= q <= n, got q={self.q}, n={self.n}")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        for name, prof in (("alpha", self.alpha), ("beta", self.beta)):
            if prof.delta < self.delta * (1 - 1e-12):
                raise DomainError(f"{name} is defined only up to {prof.delta}, need {self.delta}")
        t = np.linspace(0.0, self.delta, 513)
        a = self.alpha(t)
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            i = int(np.argmin(np.where(np.isfinite(a), a, -np.inf)))
            raise DomainError(f"alpha must stay positive; alpha({t[i]:.6g}) = {a[i]:.3g}")
        if np.any(self.beta(t) < 0):
            raise DomainError("beta must be non-negative")

    def length(self, t) -> np.ndarray:
        """Radial arc length ``A(t) = int_0^t alpha``."""
        t = np.asarray(t, dtype=float)
        if hasattr(self.alpha, "integral"):
            return self.alpha.integral(t) - float(self.alpha.integral(np.array(0.0)))
        return _gl_integral(lambda x: self.alpha(np.clip(x, 0.0, self.alpha.delta)), 0.0, t)

    @property
    def rad(self) -> float:
        r = float(self.length(np.array(self.delta)))
        if not math.isfinite(r) or r <= 0:
            raise DomainError(f"radius is not a positive finite number: {r}")
        return r

    def length_inverse(self, x) -> np.ndarray:
        """Solve ``A(t) = x`` by safeguarded Newton iteration."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.alpha, ConstantProfile):
            return np.clip(x / self.alpha.value, 0.0, self.delta)
        rad = self.rad
        lo = np.zeros_like(x)
        hi = np.full_like(x, self.delta)
        t = np.clip(x * (self.delta / rad), 0.0, self.delta)
        for _ in range(80):
            res = self.length(t) - x
            lo = np.where(res <= 0, t, lo)
            hi = np.where(res >= 0, t, hi)
            nt = t - res / self.alpha(t)
            bad = (nt <= lo) | (nt >= hi)
            nt = np.where(bad, 0.5 * (lo + hi), nt)
            done = np.abs(nt - t) <= 1e-15 * np.maximum(np.abs(t), 1e-300)
            t = nt
            if np.all(done):
                break
        return t

    def coordinate_deviation(self, other: "RotMetric", lo: float, hi: float, samples: int = 65) -> float:
        """Sup of ``|alpha - alpha'|`` and ``|beta - beta'|`` over [lo, hi]."""
        t = np.linspace(lo, hi, samples)
        da = np.max(np.abs(self.alpha(t) - other.alpha(t)))
        db = np.max(np.abs(self.beta(t) - other.beta(t)))
        return float(max(da, db))

    def to_dict(self) -> dict:
        return {
            "q": self.q, "n": self.n, "delta": self.delta,
            "alpha": self.alpha.to_dict(), "beta": self.beta.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RotMetric":
        try:
            return cls(
                int(doc["q"]), int(doc["n"]), float(doc["delta"]),
                profile_from_dict(doc["alpha"]), profile_from_dict(doc["beta"]),
            )
        except KeyError as exc:
            raise DomainError(f"metric document missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "RotMetric":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"malformed metric JSON: {exc}") from None
        return cls.from_dict(doc)


class ArcProfile(WarpProfile):
    """The warping function of a disc metric in its radial arc length."""

    kind = "arc_length"

    def __init__(self, g: RotMetric):
        self.g = g
        self.delta = g.rad
        self.derivative_mode = (
            "analytic"
            if g.alpha.derivative_mode == "analytic" and g.beta.derivative_mode == "analytic"
            else "finite_difference"
        )

    @property
    def max_order(self):
        return min(self.g.beta.max_order, self.g.alpha.max_order + 1, jets.MAX_ORDER)

    def _inverse_jet(self, x, order):
        t = self.g.length_inverse(x)
        out = np.zeros((order + 1,) + t.shape)
        if order >= 1:
            a = self.g.alpha.jet(t, order - 1)
            out = jets.inverse(np.concatenate([t[None], a]))
        out[0] = t
        return out

    def jet(self, r, order=2):
        r = self._check_r(r)
        inner = self._inverse_jet(r, order)
        return jets.compose(self.g.beta.jet(inner[0], order), inner)

    def defect(self, r):
        r = self._check_r(r)
        t = self.g.length_inverse(r)
        a = self.g.alpha(t)
        b1 = self.g.beta.jet(t, 1)[1]
        return self.g.beta.defect(t) + b1 * b1 * (a - 1.0) * (a + 1.0) / (a * a)

    def to_dict(self):
        return {"kind": "arc_length", "metric": self.g.to_dict()}


@dataclass
class NormalizedProfile:
    """Arc-length radius and profile of a disc metric."""

    rad: float
    beta: WarpProfile
    smooth_continuation: bool = True

    def check(self, tol: float = 1e-6):
        """Membership of the profile in the odd, unit-slope class (to order 4)."""
        return check_profile(self.beta, tol)


def normalize(g: RotMetric) -> NormalizedProfile:
    prof = ArcProfile(g)
    if isinstance(g.alpha, ConstantProfile) and g.alpha.value == 1.0:
        prof = g.beta if abs(g.beta.delta - g.delta) <= 1e-15 * g.delta else prof
    return NormalizedProfile(g.rad, prof, g.beta.derivative_mode == "analytic")


class _Restricted(WarpProfile):
    """A profile viewed on a shorter interval [0, delta]."""

    def __init__(self, base: WarpProfile, delta: float):
        if delta > base.delta * (1 + 1e-12):
            raise DomainError("cannot extend a profile beyond its interval")
        self.base, self.delta = base, float(min(delta, base.delta))
        self.kind = base.kind
        self.derivative_mode = base.derivative_mode

    @property
    def max_order(self):
        return self.base.max_order

    @property
    def breakpoints(self):
        return tuple(b for b in self.base.breakpoints if b < self.delta)

    def jet(self, r, order=2):
        return self.base.jet(self._check_r(r), order)

    def defect(self, r):
        return self.base.defect(self._check_r(r))

    def to_dict(self):
        return _sampled_dict(self)


def _sampled_dict(prof: WarpProfile, grid_n: int = 4097) -> dict:
    return prof.sampled(grid_n).to_dict()


def gauge_step(delta: float):
    """Jet of the fixed radial cutoff: 0 on [0, delta/4], 1 on [delta/2, delta]."""
    lo, hi = 0.25 * delta, 0.5 * delta

    def jet(t, order):
        return jets.compose(step_jet((np.asarray(t) - lo) / (hi - lo), order), _unit_interval_jet(t, lo, hi, order))

    return jet


class _GaugeAlpha(WarpProfile):
    """``alpha_ref + shift * chi'``: radial factor with arc length ``A_ref + shift * chi``."""

    kind = "gauge_alpha"

    def __init__(self, ref: RotMetric, shift: float):
        self.ref, self.shift, self.delta = ref, float(shift), ref.delta
        self._chi = gauge_step(ref.delta)
        self.derivative_mode = ref.alpha.derivative_mode

    @property
    def max_order(self):
        return self.ref.alpha.max_order

    def jet(self, r, order=2):
        r = self._check_r(r)
        return self.ref.alpha.jet(r, order) + self.shift * self._chi(r, order + 1)[1:]

    def integral(self, r):
        r = self._check_r(r)
        return self.ref.length(r) + self.shift * self._chi(r, 0)[0]

    def to_dict(self):
        return _sampled_dict(self)


class _GaugeBeta(WarpProfile):
    """Arc-length profile pulled back by the gauge ``t -> A_ref(t) + shift * chi(t)``."""

    kind = "gauge_beta"

    def __init__(self, arc: WarpProfile, alpha: _GaugeAlpha):
        self.arc, self.alpha, self.delta = arc, alpha, alpha.delta
        self.derivative_mode = arc.derivative_mode

    @property
    def max_order(self):
        return min(self.arc.max_order, self.alpha.max_order + 1)

    def _map_jet(self, t, order):
        out = np.zeros((order + 1,) + t.shape)
        out[0] = np.clip(self.alpha.integral(t), 0.0, self.arc.delta)
        if order >= 1:
            out[1:] = self.alpha.jet(t, order - 1)
        return out

    def jet(self, r, order=2):
        r = self._check_r(r)
        inner = self._map_jet(r, order)
        return jets.compose(self.arc.jet(inner[0], order), inner)

    def to_dict(self):
        return _sampled_dict(self)


def denormalize(beta: WarpProfile, r: float, like: RotMetric | None = None, *, q: int = 2, n: int = 2) -> RotMetric:
    """Metric on the disc of ``like`` whose arc-length profile is ``beta`` on [0, r].

    The radial gauge is ``A_like(t) + (r - rad like) chi(t)`` with ``chi`` the
    fixed cutoff of :func:`gauge_step`, so the result equals ``like`` near the
    centre when ``beta`` does, and near the boundary when ``beta`` is ``like``'s
    profile shifted by ``r - rad like``.  Without ``like`` the disc is [0, r]
    with ``alpha = 1``.
    """
    if not r > 0:
        raise DomainError("radius must be positive")
    if beta.delta < r * (1 - 1e-12):
        raise DomainError(f"profile covers [0, {beta.delta}], need [0, {r}]")
    if like is None:
        like = RotMetric(q, n, r, ConstantProfile(1.0, r), _Restricted(beta, r))
        return like
    shift = r - like.rad
    alpha = _GaugeAlpha(like, shift)
    t = np.linspace(0.0, like.delta, 2049)
    if np.min(alpha(t)) <= 0:
        raise DomainError(f"radius {r} too small for the gauge of this disc (alpha would vanish)")
    return RotMetric(like.q, like.n, like.delta, alpha, _GaugeBeta(_Restricted(beta, r), alpha))


# ----------------------------------------------------------------------------
# margins along a profile


def radii_grid(R: float, grid_n: int, low: float | None = None) -> np.ndarray:
    """Uniform plus geometric radii in (0, R], resolving scales down to ``low``."""
    low = min(low or R / grid_n, R / grid_n)
    return np.unique(np.concatenate([np.linspace(0.0, R, grid_n)[1:], np.geomspace(low, R, grid_n)]))


@dataclass
class ProfileMargin:
    margin: float
    witness_r: float
    lam: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)


def profile_margin(beta: WarpProfile, C: Condition, q: int, grid_n: int = 1024, low: float | None = None) -> ProfileMargin:
    """Minimum condition margin of the warped operators of ``beta`` over a radius grid."""
    r = radii_grid(beta.delta, grid_n, low)
    lam, mu = warped_coefficients(beta, r)
    m = warped_margins(C, lam, mu, q)
    bad = ~np.isfinite(m)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise PipelineError("non-finite curvature", {"r": float(r[i])})
    i = int(np.argmin(m))
    return ProfileMargin(float(m[i]), float(r[i]), lam, mu, r)


# ----------------------------------------------------------------------------
# the slope-decreasing window


@dataclass
class SlopeWindow:
    t_star: float | None
    witness_r: float | None
    flat_margin: float | None = None

    @property
    def refuted(self) -> bool:
        return self.t_star is None


def slope_window(beta: WarpProfile, grid_n: int = 4096, C: Condition | None = None, q: int | None = None) -> SlopeWindow:
    """Largest grid ``t <= R/2`` with ``0 < beta' < 1`` and ``beta'' < 0`` on (0, t].

    When even the first grid point fails, the profile is not strictly concave
    near 0; with a condition given, the margin of the zero operator is
    reported as the cross-check (a deformable condition excludes it).
    """
    t = np.linspace(0.0, beta.delta / 2, grid_n + 1)[1:]
    j = beta.jet(t, 2)
    ok = (j[1] > 0) & (j[1] < 1) & (j[2] < 0) & (beta.defect(t) > 0)
    if ok.all():
        return SlopeWindow(float(t[-1]), None)
    first_bad = int(np.argmin(ok))
    if first_bad == 0:
        flat = None
        if C is not None and q is not None:
            flat = float(warped_margins(C, np.zeros(1), np.zeros(1), q)[0])
        return SlopeWindow(None, float(t[0]), flat)
    return SlopeWindow(float(t[first_bad - 1]), float(t[first_bad]))


lemma54_witness = slope_window  # established interface name


# ----------------------------------------------------------------------------
# stage one: phi_s


@dataclass
class ClauseReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(v["ok"] for v in self.checks.values())

    def failures(self) -> list:
        return [k for k, v in self.checks.items() if not v["ok"]]


def _clause(ok: bool, worst: float) -> dict:
    return {"ok": bool(ok), "worst": float(worst)}


@dataclass
class PhiFamily:
    """``phi_s' = 1 - s C2 G`` with ``G`` a plateau bump on [a, b, c(s), d(s)].

    ``c(s)`` and ``d(s)`` are the preimages of ``0.8 t*`` and ``0.9 t*``;
    beyond ``d(s)`` the map is a translation, so ``e(s) = d(s) + 0.1 t*``.
    """

    C1: float
    t_star: float
    t_low: float
    a: float
    b: float
    C2: float

    def c(self, s):
        k = s * self.C2
        return (0.8 * self.t_star - 0.5 * k * (self.a + self.b)) / (1.0 - k)

    def d(self, s):
        k = s * self.C2
        return (0.9 * self.t_star + 0.5 * k * (self.c(s) - self.a - self.b)) / (1.0 - 0.5 * k)

    def e(self, s):
        return self.d(s) + 0.1 * self.t_star

    def shift(self, s) -> float:
        """``phi_s^{-1}(x) - x`` for ``x >= 0.9 t*``."""
        return self.e(s) - self.t_star

    def jet(self, s: float, t, order: int = 2) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = s * self.C2
        edges = (self.a, self.b, self.c(s), self.d(s))
        out = np.zeros((order + 1,) + t.shape)
        out[0] = t - k * plateau_bump_integral(t, *edges)
        if order >= 1:
            g = plateau_bump_jet(t, *edges, order=order - 1)
            out[1:] = -k * g
            out[1] += 1.0
        return out

    def one_minus_slope(self, s: float, t) -> np.ndarray:
        return s * self.C2 * plateau_bump_jet(t, self.a, self.b, self.c(s), self.d(s), order=0)[0]

    def max_second(self, s: float) -> float:
        return s * self.C2 * max_step_slope() / (self.d(s) - self.c(s))

    def clauses(self, samples: int = 11, grid_n: int = 2001) -> ClauseReport:
        ss = np.linspace(0.0, 1.0, samples)
        t = np.linspace(0.0, 1.2 * self.e(1.0), grid_n)
        chk = {}
        j0 = self.jet(0.0, t, 2)
        chk["identity_at_0"] = _clause(np.max(np.abs(j0[0] - t)) <= 1e-14 * t[-1], np.max(np.abs(j0[0] - t)))
        pin, plateau, hi, bounds, curv, lo_sign, hi_sign = [], [], [], [], [], [], []
        for s in ss:
            c, d, e = self.c(s), self.d(s), self.e(s)
            ends = self.jet(s, np.array([0.0, c, d, e]), 0)[0]
            pin.append(max(abs(ends[0]), abs(ends[3] - self.t_star), abs(ends[1] - 0.8 * self.t_star), abs(ends[2] - 0.9 * self.t_star)))
            mid = 0.5 * (t[1:] + t[:-1])
            win = mid[(mid > self.b) & (mid < c)]
            jw = self.jet(s, win, 4)
            plateau.append(np.max(np.abs(jw[1] - (1.0 - s * self.C2)), initial=0.0))
            hi.append(np.max(np.abs(jw[2:]), initial=0.0))
            j = self.jet(s, t, 2)
            bounds.append(max(np.max(j[1] - 1.0), np.max((1.0 - self.C2) - j[1])))
            curv.append(np.max(j[2]) - self.C1)
            ab = (t >= self.a) & (t <= self.b)
            cd = (t >= c) & (t <= d)
            lo_sign.append(np.max(j[2][ab], initial=0.0))
            hi_sign.append(-np.min(j[2][cd], initial=0.0))
        chk["endpoints"] = _clause(max(pin) <= 1e-12, max(pin))
        chk["slope_plateau"] = _clause(max(plateau) <= 1e-14 and max(hi) <= 1e-12, max(max(plateau), max(hi)))
        chk["slope_bounds"] = _clause(max(bounds) <= 1e-14, max(bounds))
        chk["second_bound"] = _clause(max(curv) <= 1e-9, max(curv))
        chk["sign_pattern"] = _clause(max(lo_sign) <= 0 and max(hi_sign) <= 0, max(max(lo_sign), max(hi_sign)))
        return ClauseReport(chk)


def phi_family(C1: float, t_star: float, t_low: float, a: float, b: float, *, c2_max: float = 0.5, samples: int = 21) -> PhiFamily:
    """Largest ``C2 <= c2_max`` (bisection) for which ``phi_s'' <= C1`` for every sampled s."""
    if not 0 < C1 <= 1:
        raise DomainError("need 0 < C1 <= 1")
    if not 0 < t_low < t_star / 2 or not 0 < a < b < t_low:
        raise DomainError("need 0 < a < b < t_low < t_star / 2")
    ss = np.linspace(0.0, 1.0, samples)[1:]

    def feasible(c2):
        fam = PhiFamily(C1, t_star, t_low, a, b, c2)
        for s in ss:
            c, d = fam.c(s), fam.d(s)
            if not (b < c < d) or fam.max_second(s) > C1:
                return False
        return True

    if feasible(c2_max):
        return PhiFamily(C1, t_star, t_low, a, b, c2_max)
    lo, hi = 0.0, c2_max
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
    if lo <= 0:
        raise DomainError("no admissible C2 for these constants")
    return PhiFamily(C1, t_star, t_low, a, b, lo)


# ----------------------------------------------------------------------------
# stage two: psi_s


@dataclass
class PsiFamily:
    """``psi_s' = 1 - s H`` with ``H`` rising on [a_bar, b_bar], then decaying in ``v = log(t/b_bar)``.

    On the decay ``H = exp(-D1 Phi(v)) (1 - step((v - v1)/w))`` with
    ``Phi' = step``: the exponential part keeps ``-dH/dv <= D1 H``, so the
    negative radial curvature it creates stays a fixed fraction of the gain
    in the sphere directions; the final cutoff starts once ``H`` is below
    ``tail``.  Since ``t psi'' = -s dH/dv`` this gives ``t psi_s'' <= D1``.
    ``H - 1`` is flat to infinite order at ``b_bar``.
    """

    D1: float
    t_dstar: float
    cut_width: float = 1.0

    @property
    def tail(self) -> float:
        return self.D1 * self.D1 / (self.D1 + max_step_slope() / self.cut_width)

    @property
    def v_cut(self) -> float:
        return 0.5 + math.log(1.0 / self.tail) / self.D1

    @property
    def log_length(self) -> float:
        return self.v_cut + self.cut_width

    @property
    def fall_end(self) -> float:
        return 0.9 * self.t_dstar

    @property
    def b_bar(self) -> float:
        return self.fall_end * math.exp(-self.log_length)

    @property
    def a_bar(self) -> float:
        return self.b_bar / 10.0

    def _decay_jets(self, v, order):
        """Jets in ``v`` of ``H`` and ``K = 1 - H`` on the decay."""
        v = np.asarray(v, dtype=float)
        phi = np.zeros((order + 1,) + v.shape)
        phi[0] = step_integral(v)
        if order >= 1:
            phi[1:] = step_jet(v, order - 1)
        e_in = -self.D1 * phi
        e_out = np.broadcast_to(np.exp(e_in[0]), (order + 1,) + v.shape).copy()
        E = jets.compose(e_out, e_in)
        cw = _unit_interval_jet(v, self.v_cut, self.v_cut + self.cut_width, order)
        S = jets.compose(step_jet(cw[0], order), cw)
        H = jets.mul(E, jets.constant(1.0, v, order) - S)
        K = -H
        K[0] = -np.expm1(e_in[0]) + E[0] * S[0]
        return H, K

    def _v_jet(self, t, order):
        t = np.asarray(t, dtype=float)
        safe = np.maximum(t, self.b_bar)
        out = np.zeros((order + 1,) + t.shape)
        out[0] = np.log(safe / self.b_bar)
        for k in range(1, order + 1):
            out[k] = (-1.0) ** (k - 1) * math.factorial(k - 1) / safe**k
        return out

    def _parts(self, t, order):
        """Jets in ``t`` of ``H`` and ``K = 1 - H``, each evaluated without cancellation."""
        t = np.asarray(t, dtype=float)
        H = np.zeros((order + 1,) + t.shape)
        K = np.zeros((order + 1,) + t.shape)
        K[0] = 1.0
        rise = (t > self.a_bar) & (t <= self.b_bar)
        fall = (t > self.b_bar) & (t < self.fall_end)
        if np.any(rise):
            w = _unit_interval_jet(t[rise], self.a_bar, self.b_bar, order)
            H[:, rise] = jets.compose(step_jet(w[0], order), w)
            wr = -w
            wr[0] = 1.0 - w[0]
            K[:, rise] = jets.compose(step_jet(wr[0], order), wr)
        if np.any(fall):
            vj = self._v_jet(t[fall], order)
            hv, kv = self._decay_jets(vj[0], order)
            H[:, fall] = jets.compose(hv, vj)
            K[:, fall] = jets.compose(kv, vj)
        return H, K

    def _fall_density(self, v):
        return self._decay_jets(v, 0)[0][0] * self.b_bar * np.exp(v)

    @cached_property
    def _fall_table(self):
        cells = 4096
        edges = np.linspace(0.0, self.log_length, cells + 1)
        per_cell = _gl_integral(self._fall_density, edges[:-1], edges[1:], panels=1)
        return edges, np.concatenate([[0.0], np.cumsum(per_cell)])

    def _fall_integral(self, t) -> np.ndarray:
        """``int_{b_bar}^{t} H``, tabulated in ``v`` and finished on the last cell."""
        edges, cum = self._fall_table
        v = np.clip(np.log(np.maximum(t, self.b_bar) / self.b_bar), 0.0, self.log_length)
        i = np.minimum((v / edges[-1] * (edges.size - 1)).astype(int), edges.size - 2)
        return cum[i] + _gl_integral(self._fall_density, edges[i], v, panels=1, nodes=8)

    def H_integral(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        w = self.b_bar - self.a_bar
        out = w * step_integral((np.minimum(t, self.b_bar) - self.a_bar) / w)
        return out + np.where(t > self.b_bar, self._fall_integral(t), 0.0)

    @property
    def total(self) -> float:
        return float(self.H_integral(np.array(self.fall_end)))

    def shift(self, s) -> float:
        return s * self.total

    def c_bar(self, s) -> float:
        return self.fall_end + self.shift(s)

    def e_bar(self, s) -> float:
        return self.t_dstar + self.shift(s)

    def jet(self, s: float, t, order: int = 2) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        H, K = self._parts(t, max(order - 1, 0))
        out = np.zeros((order + 1,) + t.shape)
        out[0] = t - s * self.H_integral(t)
        if order >= 1:
            out[1] = (1.0 - s) + s * K[0]
            out[2:] = -s * H[1:]
        return out

    def one_minus_slope(self, s: float, t) -> np.ndarray:
        return s * self._parts(np.asarray(t, dtype=float), 0)[0][0]

    def clauses(self, samples: int = 11, grid_n: int = 4096) -> ClauseReport:
        ss = np.linspace(0.0, 1.0, samples)
        t = np.unique(np.concatenate([
            np.geomspace(self.a_bar / 4, 1.2 * self.e_bar(1.0), grid_n),
            np.linspace(0.0, 1.2 * self.e_bar(1.0), grid_n),
        ]))
        chk = {}
        j0 = self.jet(0.0, t, 1)
        dev0 = float(np.max(np.abs(j0[0] - t)))
        chk["identity_at_0"] = _clause(dev0 == 0.0, dev0)
        pin, slope, unit, curv = [], [], [], []
        for s in ss:
            ends = self.jet(s, np.array([0.0, self.c_bar(s), self.e_bar(s)]), 0)[0]
            pin.append(max(abs(ends[0]), abs(ends[1] - self.fall_end), abs(ends[2] - self.t_dstar)))
            j = self.jet(s, t, 2)
            slope.append(max(np.max(j[1] - 1.0), -np.min(j[1])))
            outside = (t <= self.a_bar) | (t >= self.e_bar(s))
            unit.append(np.max(np.abs(j[1][outside] - 1.0), initial=0.0))
            curv.append(np.max(j[2] * t) - self.D1)
        chk["endpoints"] = _clause(max(pin) <= 1e-12 * self.t_dstar, max(pin))
        chk["slope_bounds"] = _clause(max(slope) <= 0.0, max(slope))
        chk["unit_slope_outside"] = _clause(max(unit) == 0.0, max(unit))
        chk["second_bound"] = _clause(max(curv) <= 1e-9, max(curv))
        flat = self.jet(1.0, np.array([self.b_bar]), SMOOTHNESS_ORDER)[1:, 0]
        chk["flat_at_b_bar"] = _clause(np.max(np.abs(flat)) <= SMOOTHNESS_TOL, np.max(np.abs(flat)))
        return ClauseReport(chk)


def psi_family(D1: float, t_dstar: float) -> PsiFamily:
    if not 0 < D1 <= 1 or not t_dstar > 0:
        raise DomainError("need 0 < D1 <= 1 and t** > 0")
    return PsiFamily(float(D1), float(t_dstar))


# ----------------------------------------------------------------------------
# reparametrized and blended profiles


class _Map:
    """One family member ``m = family(s, .)`` used inside a composite profile."""

    def __init__(self, family, s: float):
        self.family, self.s = family, float(s)

    def jet(self, t, order):
        return self.family.jet(self.s, t, order)

    def one_minus_slope(self, t):
        return self.family.one_minus_slope(self.s, t)

    def shift(self) -> float:
        return self.family.shift(self.s)


class ReparamProfile(WarpProfile):
    """``base o m_0 o m_1 o ...`` on the preimage of ``base``'s interval."""

    kind = "reparametrized"

    def __init__(self, base: WarpProfile, maps, delta: float | None = None):
        self.base, self.maps = base, tuple(maps)
        self.delta = float(delta if delta is not None else base.delta + sum(m.shift() for m in self.maps))
        self.derivative_mode = base.derivative_mode

    @property
    def max_order(self):
        return min(self.base.max_order, jets.MAX_ORDER)

    def _inner(self, r, order):
        J = jets.identity(r, order)
        om = np.zeros_like(r)
        for m in reversed(self.maps):
            mj = m.jet(J[0], order)
            # 1 - (m o N)' = (1 - m'(N)) + m'(N) (1 - N')
            om = m.one_minus_slope(J[0]) + mj[1] * om if order >= 1 else om
            J = jets.compose(mj, J)
        J[0] = np.clip(J[0], 0.0, self.base.delta)
        return J, om

    def jet(self, r, order=2):
        r = self._check_r(r)
        J, _ = self._inner(r, order)
        return jets.compose(self.base.jet(J[0], order), J)

    def defect(self, r):
        r = self._check_r(r)
        J, om = self._inner(r, 1)
        b1 = self.base.jet(J[0], 1)[1]
        return self.base.defect(J[0]) + b1 * b1 * om * (2.0 - om)

    def to_dict(self):
        return _sampled_dict(self)


class BlendProfile(WarpProfile):
    """``(1 - u) beta + u target`` on [0, sigma] and ``beta`` beyond."""

    kind = "blend"

    def __init__(self, beta: WarpProfile, target: WarpProfile, u: float, sigma: float):
        self.beta, self.target, self.u, self.sigma = beta, target, float(u), float(sigma)
        self.delta = beta.delta
        self.derivative_mode = beta.derivative_mode

    @property
    def max_order(self):
        return min(self.beta.max_order, self.target.max_order)

    def jet(self, r, order=2):
        r = self._check_r(r)
        out = self.beta.jet(r, order)
        inside = r <= self.sigma
        if np.any(inside) and self.u > 0:
            tj = self.target.jet(np.minimum(r[inside], self.target.delta), order)
            out[:, inside] = (1.0 - self.u) * out[:, inside] + self.u * tj
        return out

    def defect(self, r):
        r = self._check_r(r)
        out = self.beta.defect(r)
        inside = r <= self.sigma
        if np.any(inside) and self.u > 0:
            x = r[inside]
            p1 = self.beta.jet(x, 1)[1]
            t1 = self.target.jet(np.minimum(x, self.target.delta), 1)[1]
            om_p = self.beta.defect(x) / (1.0 + p1)
            om_t = self.target.defect(np.minimum(x, self.target.delta)) / (1.0 + t1)
            om = (1.0 - self.u) * om_p + self.u * om_t
            out[inside] = om * (2.0 - om)
        return out

    def to_dict(self):
        return _sampled_dict(self)


_MOLLIFIED_PLATEAU = TorpedoProfile(1.0, 2.0, "mollified").plateau


def torpedo_with_plateau(value: float, sigma: float) -> TorpedoProfile:
    """Mollified torpedo whose plateau equals ``value`` and which is flat by ``sigma``."""
    mu = value / _MOLLIFIED_PLATEAU
    if mu * math.pi / 2 >= sigma:
        raise PipelineError("torpedo with this plateau does not fit in [0, sigma]", {"sigma": sigma, "mu": mu})
    return TorpedoProfile(mu, sigma, "mollified")


# ----------------------------------------------------------------------------
# pipelines


@dataclass
class PipelineConfig:
    phi_samples: int = 11
    psi_samples: int = 11
    blend_samples: int = 11
    straighten_samples: int = 11
    grid_n: int = 1024
    witness_grid: int = 4096
    eps: float = EPS_STRICT
    max_halvings: int = 40
    boundary_band: float = 0.95


def _check_preconditions(g: RotMetric, C: Condition) -> None:
    if C.n != g.n:
        raise DomainError(f"condition is for n={C.n}, metric has n={g.n}")
    if not C.deformable_claimed or C.claimed_codim is None:
        raise PipelineError(f"{C.label()} is not a deformable condition", {"condition": C.label()})
    if g.q < C.claimed_codim:
        raise PipelineError(
            f"{C.label()} needs fibre dimension q >= {C.claimed_codim}, got q={g.q}",
            {"q": g.q, "codim": C.claimed_codim},
        )


def _smoothness_at(beta: WarpProfile, x: float, order: int = SMOOTHNESS_ORDER) -> float:
    order = min(order, beta.max_order)
    return float(np.max(np.abs(beta.jet(np.array([x]), order)[1:, 0])))


@dataclass
class Psi1Result:
    trace: DeformationTrace
    sigma: float
    t_star: float
    phi: PhiFamily
    psi: PsiFamily
    endpoint: WarpProfile
    endpoint_metric: RotMetric
    phi_clauses: ClauseReport
    psi_clauses: ClauseReport
    decomposition_error: float
    cone_slack: float
    endpoint_checks: dict
    input_margin: float

    def stage_profile(self, s: float) -> WarpProfile:
        return _psi1_profile(self._base, self.phi, self.psi, s)


def _psi1_profile(base: WarpProfile, phi: PhiFamily, psi: PsiFamily | None, s: float) -> WarpProfile:
    if s <= 0.5:
        return ReparamProfile(base, [_Map(phi, 2 * s)])
    return ReparamProfile(base, [_Map(phi, 1.0), _Map(psi, 2 * s - 1)])


def _record(trace, stage, param, prof, g, C, cfg, low, extra):
    pm = profile_margin(prof, C, g.q, cfg.grid_n, low)
    if not pm.margin > cfg.eps:
        raise PipelineError(
            f"condition margin {pm.margin:.3e} at stage {stage}, s={param:.4g}",
            {"stage": stage, "s": param, "r": pm.witness_r, "margin": pm.margin},
        )
    trace.add(stage, param, pm.margin, profile=prof, witness_r=pm.witness_r, **extra)
    return pm


def _boundary_dev(prof: WarpProfile, g: RotMetric, cfg: PipelineConfig) -> float:
    gs = denormalize(prof, prof.delta, g)
    return gs.coordinate_deviation(g, cfg.boundary_band * g.delta, g.delta)


def _decomposition_error(base: WarpProfile, phi: PhiFamily, s: float) -> float:
    """On the slope window, ``R_new = k^2 R_old(phi) + ((1 - k^2)/beta^2) R_{R x S}``.

    Checked on the coefficient pair (model, L); ``k = 1 - s C2``.
    """
    k = 1.0 - s * phi.C2
    t = np.linspace(phi.b, phi.c(s), 67)[1:-1]
    prof = ReparamProfile(base, [_Map(phi, s)])
    lam_new, mu_new = warped_coefficients(prof, t)
    x = phi.jet(s, t, 0)[0]
    lam_old, mu_old = warped_coefficients(base, x)
    b = base(x)
    lam_pred = k * k * lam_old + (1.0 - k * k) / b**2
    mu_pred = k * k * mu_old
    scale = np.maximum(np.abs(lam_new) + np.abs(mu_new), 1.0)
    return float(np.max((np.abs(lam_new - lam_pred) + np.abs(mu_new - mu_pred)) / scale))


def psi1(g: RotMetric, C: Condition, config: PipelineConfig | None = None) -> Psi1Result:
    """Two-stage reparametrization making the profile flat at ``sigma``."""
    cfg = config or PipelineConfig()
    _check_preconditions(g, C)
    norm = normalize(g)
    base, R = norm.beta, norm.rad
    pm0 = profile_margin(base, C, g.q, cfg.grid_n)
    if not pm0.margin > cfg.eps:
        raise PipelineError("input metric is not in the condition", {"r": pm0.witness_r, "margin": pm0.margin})
    w = slope_window(base, cfg.witness_grid, C, g.q)
    if w.refuted:
        raise PipelineError("profile is not strictly concave near the centre", {"r": w.witness_r, "flat_margin": w.flat_margin})
    t_star = w.t_star

    win = np.linspace(0.7 * t_star, t_star, 257)
    j = base.jet(win, 2)
    C1 = float(min(1.0, 0.125 * np.min(-j[2] / j[1])))
    phi = phi_family(C1, t_star, 0.4 * t_star, t_star / 10, t_star / 5)
    if phi.e(1.0) >= R:
        raise PipelineError("slope window does not fit in the disc", {"e": phi.e(1.0), "rad": R})
    phi_rep = phi.clauses(cfg.phi_samples)
    t_dstar = 0.5 * (phi.b + phi.c(1.0))

    # stage two: halve D1 until every sample keeps a positive margin
    D1, psi = 1.0, None
    for _ in range(cfg.max_halvings):
        cand = psi_family(D1, t_dstar)
        ok = True
        for s in np.linspace(0.0, 1.0, cfg.psi_samples)[::-1]:
            prof = ReparamProfile(base, [_Map(phi, 1.0), _Map(cand, s)])
            if not profile_margin(prof, C, g.q, cfg.grid_n, cand.a_bar / 4).margin > cfg.eps:
                ok = False
                break
        if ok:
            psi = cand
            break
        D1 /= 2
    if psi is None:
        raise PipelineError("no admissible D1 found for the flattening stage", {"D1": D1})
    psi_rep = psi.clauses(cfg.psi_samples)
    sigma = psi.b_bar
    low = psi.a_bar / 4

    trace = DeformationTrace(C.label())
    for s in np.linspace(0.0, 1.0, cfg.phi_samples):
        prof = ReparamProfile(base, [_Map(phi, s)])
        _record(trace, "psi1_slope", 0.5 * s, prof, g, C, cfg, low,
                {"sigma_or_delta_star": sigma, "boundary_dev": _boundary_dev(prof, g, cfg)})
    for s in np.linspace(0.0, 1.0, cfg.psi_samples)[1:]:
        prof = ReparamProfile(base, [_Map(phi, 1.0), _Map(psi, s)])
        _record(trace, "psi1_flatten", 0.5 + 0.5 * s, prof, g, C, cfg, low,
                {"sigma_or_delta_star": sigma, "boundary_dev": _boundary_dev(prof, g, cfg)})

    endpoint = trace.profiles[-1]
    x = np.linspace(0.0, sigma, 513)[1:]
    je = endpoint.jet(x, 2)
    checks = {
        "flat_at_sigma": _smoothness_at(endpoint, sigma),
        "slope_in_unit_interval": bool(np.all(je[1] >= -1e-15) and np.all(je[1] <= 1.0)),
        "concave_on_sigma": bool(np.all(je[2] <= 0.0)),
    }

    # cone argument slack at the end of stage two: mu + C** >= 0 wherever mu < 0
    radius = cone_radius(C, model_operator(g.n, g.q - 1)).radius
    pm = profile_margin(endpoint, C, g.q, cfg.grid_n, low)
    c_star = 0.5 * pm.lam * radius / math.sqrt(g.q - 1)
    cone_slack = float(np.min(pm.mu + c_star))

    trace.flags.update({
        "boundary_fixed": max(s.extra["boundary_dev"] for s in trace.samples) <= 1e-10,
        "sigma": sigma,
        "C1": C1, "C2": phi.C2, "D1": psi.D1,
    })
    res = Psi1Result(
        trace, sigma, t_star, phi, psi, endpoint, denormalize(endpoint, endpoint.delta, g),
        phi_rep, psi_rep, _decomposition_error(base, phi, 1.0), cone_slack, checks, pm0.margin,
    )
    res._base = base
    return res


@dataclass
class Psi2Result:
    trace: DeformationTrace
    psi1: Psi1Result
    sigma: float
    torpedo: TorpedoProfile
    endpoint: WarpProfile
    endpoint_metric: RotMetric
    sandwich_min: float
    torpedo_error: float


def _sandwich(base: WarpProfile, target: WarpProfile, blend: WarpProfile, x: np.ndarray) -> tuple[float, float]:
    lb, _ = warped_coefficients(base, x)
    lt, _ = warped_coefficients(target, x)
    lu, mu_u = warped_coefficients(blend, x)
    floor = np.minimum(lb, lt)
    rel = (lu - floor) / np.maximum(np.abs(floor), 1.0)
    return float(np.min(rel)), float(np.min(mu_u))


def psi2(g: RotMetric, C: Condition, config: PipelineConfig | None = None, *, first: Psi1Result | None = None) -> Psi2Result:
    """Run :func:`psi1`, then blend the profile on [0, sigma] into a torpedo."""
    cfg = config or PipelineConfig()
    p1 = first or psi1(g, C, cfg)
    sigma, base = p1.sigma, p1.endpoint
    tor = torpedo_with_plateau(float(base(np.array(sigma))), sigma)
    low = p1.psi.a_bar / 4
    trace = DeformationTrace(C.label())
    for smp, prof in zip(p1.trace.samples, p1.trace.profiles):
        trace.add(smp.stage, 0.5 * smp.param, smp.margin, profile=prof, **smp.extra)
    x = np.geomspace(sigma * 1e-4, sigma, 2048)
    sandwich = math.inf
    concave = True
    for u in np.linspace(0.0, 1.0, cfg.blend_samples)[1:]:
        prof = BlendProfile(base, tor, u, sigma)
        _record(trace, "psi2_blend", 0.5 + 0.5 * u, prof, g, C, cfg, low,
                {"sigma_or_delta_star": sigma, "boundary_dev": _boundary_dev(prof, g, cfg)})
        sw, mu_min = _sandwich(base, tor, prof, x)
        sandwich = min(sandwich, sw)
        concave = concave and mu_min >= 0.0
    endpoint = trace.profiles[-1]
    xs = np.linspace(0.0, sigma, 1025)
    tor_err = float(np.max(np.abs(endpoint(xs) - tor(xs))))
    trace.flags.update({
        "boundary_fixed": max(s.extra["boundary_dev"] for s in trace.samples) <= 1e-10,
        "torpedo_on_sigma": tor_err <= 1e-6 * max(1.0, tor.mu),
        "sandwich_ok": sandwich >= -1e-9,
        "blend_concave": concave,
        "sigma": sigma,
    })
    return Psi2Result(trace, p1, sigma, tor, endpoint, denormalize(endpoint, endpoint.delta, g), sandwich, tor_err)


# ----------------------------------------------------------------------------
# locally torpedo metrics and the radial straightening


def _torpedo_candidates(beta: WarpProfile):
    if beta.max_order < 3 or beta.derivative_mode != "analytic":
        return []
    b3 = float(beta.jet(np.array([0.0]), 3)[3, 0])
    if not b3 < 0:
        return []
    mu = 1.0 / math.sqrt(-b3)
    big = max(beta.delta, mu * math.pi) * 2
    return [TorpedoProfile(mu, big, "mollified"), TorpedoProfile(mu, big, "piecewise")]


def torpedo_radius(beta: WarpProfile, tol: float = 1e-8, grid_n: int = 4096) -> tuple[float, TorpedoProfile | None]:
    """Largest arc-length radius where ``beta`` matches a torpedo within ``tol * mu``."""
    best, best_t = 0.0, None
    R = beta.delta
    x = radii_grid(R, grid_n, R * 1e-12)
    bx = beta(x)
    for tor in _torpedo_candidates(beta):
        bad = np.abs(bx - tor(x)) > tol * tor.mu
        if not bad.any():
            rho = R
        else:
            i = int(np.argmax(bad))
            if i == 0:
                continue
            lo, hi = x[i - 1], x[i]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ok = abs(float(beta(np.array(mid))) - float(tor(np.array(mid)))) <= tol * tor.mu
                lo, hi = (mid, hi) if ok else (lo, mid)
            rho = lo
        if rho > best:
            best, best_t = rho, tor
    return best, best_t


def delta_star(g: RotMetric, tol: float = 1e-8) -> float:
    """Coordinate radius up to which ``g`` is a (linearly rescaled) torpedo; 0 if nowhere."""
    rho, _ = torpedo_radius(normalize(g).beta, tol)
    if rho <= 0:
        return 0.0
    t = g.length_inverse(np.array(rho))
    grid = np.linspace(0.0, float(t), 1025)
    a = g.alpha(grid)
    const = np.abs(a - a[0]) <= tol * abs(a[0])
    if not const.all():
        t = grid[max(int(np.argmin(const)) - 1, 0)]
    return float(t)


class _Pullback(WarpProfile):
    """``factor * base(kappa t)`` on [0, delta]."""

    kind = "pullback"

    def __init__(self, base: WarpProfile, kappa: float, factor: float, delta: float):
        self.base, self.kappa, self.factor, self.delta = base, float(kappa), float(factor), float(delta)
        self.derivative_mode = base.derivative_mode

    @property
    def max_order(self):
        return self.base.max_order

    def jet(self, r, order=2):
        r = self._check_r(r)
        out = self.base.jet(self.kappa * r, order)
        for k in range(order + 1):
            out[k] = out[k] * self.factor * self.kappa**k
        return out

    def integral(self, r):
        # only used for the radial factor, where factor == kappa
        return self.base.integral(self.kappa * self._check_r(r)) if hasattr(self.base, "integral") else _gl_integral(
            lambda x: self(np.clip(x, 0.0, self.delta)), 0.0, self._check_r(r))

    def defect(self, r):
        if self.factor * self.kappa == 1.0:
            return self.base.defect(self.kappa * self._check_r(r))
        return super().defect(r)

    def to_dict(self):
        return _sampled_dict(self)


def straighten_phi(g: RotMetric, s: float, dstar: float | None = None) -> RotMetric:
    """Pull back by the radial contraction ``t -> (1 - s (1 - delta*/delta)) t``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError("s must lie in [0, 1]")
    ds = delta_star(g) if dstar is None else dstar
    if ds <= 0:
        raise PipelineError("metric is not locally a torpedo; nothing to straighten", {"delta_star": ds})
    if s == 0.0:
        return g
    kappa = 1.0 - s * (1.0 - ds / g.delta)
    alpha = _Pullback(g.alpha, kappa, kappa, g.delta)
    beta = _Pullback(g.beta, kappa, 1.0, g.delta)
    return RotMetric(g.q, g.n, g.delta, alpha, beta)


@dataclass
class PipelineResult:
    psi2: Psi2Result
    straighten: DeformationTrace
    final: RotMetric
    delta_star: float
    final_torpedo_error: float

    @property
    def psi1(self) -> Psi1Result:
        return self.psi2.psi1

    @property
    def sigma(self) -> float:
        return self.psi2.sigma

    def traces(self) -> list[DeformationTrace]:
        return [self.psi1.trace, self.psi2.trace, self.straighten]

    def all_positive(self, eps: float = EPS_STRICT) -> bool:
        return all(tr.all_positive(eps) for tr in self.traces())

    def to_jsonl(self) -> str:
        return "".join(tr.to_jsonl() for tr in (self.psi2.trace, self.straighten))

    def summary(self) -> dict:
        p1 = self.psi1
        return {
            "condition": self.straighten.condition,
            "sigma": self.sigma,
            "delta_star": self.delta_star,
            "t_star": p1.t_star,
            "C1": p1.phi.C1, "C2": p1.phi.C2, "D1": p1.psi.D1,
            "min_margin": min(tr.min_margin for tr in self.traces()),
            "boundary_fixed": bool(self.psi2.trace.flags["boundary_fixed"]),
            "torpedo_on_sigma": bool(self.psi2.trace.flags["torpedo_on_sigma"]),
            "final_torpedo_error": self.final_torpedo_error,
            "phi_clauses": p1.phi_clauses.passed,
            "psi_clauses": p1.psi_clauses.passed,
            "sandwich_min": self.psi2.sandwich_min,
        }


def deform(g: RotMetric, C: Condition, config: PipelineConfig | None = None) -> PipelineResult:
    """Full path: flatten at sigma, blend in a torpedo, then straighten."""
    cfg = config or PipelineConfig()
    p2 = psi2(g, C, cfg)
    mid = p2.endpoint_metric
    dstar = float(mid.length_inverse(np.array(p2.sigma)))
    trace = DeformationTrace(C.label())
    final = mid
    tor_scale = p2.torpedo.mu
    for s in np.linspace(0.0, 1.0, cfg.straighten_samples):
        gs = straighten_phi(mid, s, dstar)
        prof = normalize(gs).beta
        _record(trace, "straighten", s, prof, g, C, cfg, p2.psi1.psi.a_bar / 4,
                {"sigma_or_delta_star": dstar})
        final = gs
    fprof = normalize(final).beta
    xs = np.linspace(0.0, fprof.delta, 1025)
    err = float(np.max(np.abs(fprof(xs) - p2.torpedo(np.minimum(xs, p2.torpedo.delta))))) / tor_scale
    trace.flags.update({"delta_star": dstar, "final_torpedo_error": err, "torpedo_on_disc": err <= 1e-6})
    return PipelineResult(p2, trace, final, dstar, err)


# ----------------------------------------------------------------------------
# sample inputs

FIXTURE_DIR = Path(__file__).resolve().parent / "data" / "fixtures"


def sample_metric(rng: np.random.Generator, q: int, n: int, delta: float = 1.0) -> RotMetric:
    """Mollified torpedo with a bump on its plateau and a bump in the radial factor."""
    mu = rng.uniform(0.3, 0.45) * delta
    beta = SumProfile([
        TorpedoProfile(mu, delta, "mollified"),
        BumpProfile(rng.uniform(-0.02, 0.02) * mu, *(delta * np.array([0.76, 0.8, 0.84, 0.9])), delta),
    ])
    alpha = SumProfile([
        ConstantProfile(1.0, delta),
        BumpProfile(rng.uniform(-0.1, 0.1), *(delta * np.array([0.56, 0.6, 0.66, 0.72])), delta),
    ])
    return RotMetric(q, n, delta, alpha, beta)


def in_condition(g: RotMetric, C: Condition, grid_n: int = 1024) -> float:
    """Minimum margin of ``g`` over its arc-length grid."""
    return profile_margin(normalize(g).beta, C, g.q, grid_n).margin


def fixture_family(C: Condition, q: int, count: int = 5, seed: int = 0, max_tries: int = 200) -> dict:
    """Seeded sample inputs, keeping those inside ``C``.

    When fewer than ``count`` candidates pass, the remaining slots are filled
    with rejected candidates and the document says so (``filtered`` false), so
    a consumer can still run, and fail on, the requested inputs.
    """
    rng = np.random.default_rng(seed)
    kept, rejected = [], []
    for _ in range(max_tries):
        g = sample_metric(rng, q, C.n)
        m = in_condition(g, C)
        (kept if m > EPS_STRICT else rejected).append((g, m))
        if len(kept) == count:
            break
    chosen = kept + rejected[: count - len(kept)]
    return {
        "condition": C.to_dict(),
        "seed": seed,
        "q": q,
        "filtered": len(kept) == count,
        "accepted": len(kept),
        "inputs": [{"metric": g.to_dict(), "margin": m} for g, m in chosen],
    }


def fixture_path(C: Condition, q: int) -> Path:
    tag = C.name + "".join(f"_{k}{v}" for k, v in sorted(C.params.items()))
    return FIXTURE_DIR / f"disc_{tag}_n{C.n}_q{q}.json"


def load_fixture(path) -> tuple[dict, list[RotMetric]]:
    doc = json.loads(Path(path).read_text())
    return doc, [RotMetric.from_dict(item["metric"]) for item in doc["inputs"]]
