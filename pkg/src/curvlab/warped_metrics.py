"""Warping profiles and the curvature of ``g_eucl(n-q) + dr^2 + beta(r)^2 g_{S^{q-1}}``.

Every profile exposes ``jet(r, order)``: an array whose k-th row is the k-th
derivative of beta at the points ``r``.  Closed-form profiles return exact
derivatives; grid profiles (and closed forms sampled with
``derivative_mode='finite_difference'``) fit a degree-5 polynomial through the
six nearest nodes of the same smooth piece, so derivatives never straddle a
declared breakpoint.
"""

from __future__ import annotations

import ast
import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import jets
from .curvature_algebra import BlockLayout, CurvOp, DomainError, l_operator, model_operator
from .kernels import cumquad4
from .smooth import plateau_bump_integral, plateau_bump_jet, step_jet

DEFAULT_GRID = 2048


# ----------------------------------------------------------------------------
# local polynomial differentiation


def poly_fit_derivs(x_nodes: np.ndarray, f_nodes: np.ndarray, r: np.ndarray, h: float, order: int):
    """Derivatives at ``r`` of the interpolant through each row of nodes."""
    u = (x_nodes - r[:, None]) / h
    k = x_nodes.shape[1]
    vander = u[:, :, None] ** np.arange(k)[None, None, :]
    coef = np.linalg.solve(vander, f_nodes[..., None])[..., 0]
    out = np.empty((order + 1, r.size))
    for j in range(order + 1):
        out[j] = math.factorial(j) * coef[:, j] / h**j if j < k else 0.0
    return out


def _piece_of(x, edges):
    return np.searchsorted(edges, x, side="right") - 1


@dataclass(frozen=True)
class _Pieces:
    """Uniform grid split into smooth pieces at interior breakpoints."""

    delta: float
    grid_n: int
    breakpoints: tuple

    @property
    def h(self) -> float:
        return self.delta / (self.grid_n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.delta, self.grid_n)

    def stencils(self, r: np.ndarray, width: int = 6) -> np.ndarray:
        """Indices (len(r), width) of nodes in the same piece as each r."""
        x = self.nodes
        edges = np.concatenate([[-np.inf], self.breakpoints, [np.inf]])
        node_piece = _piece_of(x, edges)
        r_piece = _piece_of(r, edges)
        first = np.searchsorted(node_piece, r_piece, side="left")
        last = np.searchsorted(node_piece, r_piece, side="right") - 1
        if np.any(last - first + 1 < width):
            raise DomainError("a smooth piece holds fewer than six grid nodes; refine the grid")
        centre = np.rint(r / self.h).astype(int) - width // 2 + 1
        start = np.clip(centre, first, last - width + 1)
        return start[:, None] + np.arange(width)[None, :]


# ----------------------------------------------------------------------------
# profiles


class WarpProfile:
    """Base class: a warping function beta on [0, delta]."""

    kind = "abstract"
    derivative_mode = "analytic"
    delta: float

    def jet(self, r, order: int = 2) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, r):
        return self.jet(r, 0)[0]

    @property
    def breakpoints(self) -> tuple:
        return ()

    @property
    def max_order(self) -> int:
        return 4

    def defect(self, r) -> np.ndarray:
        """``1 - beta'(r)^2``; subclasses override to avoid cancellation."""
        d1 = self.jet(r, 1)[1]
        return 1.0 - d1 * d1

    def sampled(self, grid_n: int = DEFAULT_GRID) -> "GridProfile":
        """Finite-difference version built from samples on a uniform grid."""
        x = np.linspace(0.0, self.delta, grid_n)
        return GridProfile(self.delta, self(x), self.breakpoints, source=self.kind)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check_r(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        tol = 1e-12 * max(1.0, self.delta)
        if np.any(r < -tol) or np.any(r > self.delta + tol):
            raise DomainError(f"r outside [0, {self.delta}]")
        return np.clip(r, 0.0, self.delta)


def _sin_jet(r, mu: float, order: int) -> np.ndarray:
    """Jet of ``mu sin(r / mu)``."""
    x = np.asarray(r, dtype=float) / mu
    s, c = np.sin(x), np.cos(x)
    cyc = [s, c, -s, -c]
    out = np.empty((order + 1,) + x.shape)
    for k in range(order + 1):
        out[k] = mu ** (1 - k) * cyc[k % 4]
    return out


class TorpedoProfile(WarpProfile):
    """``mu sin(r/mu)`` up to ``mu pi/2``, then constant.

    ``mode='piecewise'`` is the C^1 function itself; ``mode='mollified'``
    multiplies ``beta'`` by a smooth cutoff in the collar
    ``[mu pi/2 - w, mu pi/2]`` with ``w = mu/20``, which makes the profile
    smooth and its plateau value slightly smaller than ``mu``.
    """

    kind = "torpedo"

    def __init__(self, mu: float, delta: float, mode: str = "piecewise"):
        if mu <= 0:
            raise DomainError("torpedo needs mu > 0")
        if delta <= mu * math.pi / 2:
            raise DomainError(f"torpedo needs delta > mu*pi/2 = {mu * math.pi / 2:.6g}")
        if mode not in ("piecewise", "mollified"):
            raise DomainError(f"unknown torpedo mode {mode!r}")
        self.mu = float(mu)
        self.delta = float(delta)
        self.mode = mode
        self.junction = self.mu * math.pi / 2
        self.collar = self.mu / 20.0
        self.plateau = self.mu if mode == "piecewise" else float(self._collar_value(self.junction)[0])

    def __repr__(self):
        return f"TorpedoProfile(mu={self.mu}, delta={self.delta}, mode={self.mode!r})"

    @property
    def breakpoints(self) -> tuple:
        if self.mode == "piecewise":
            return (self.junction,)
        return ()

    def _collar_slope_jet(self, r, order):
        """Jet of ``cos(r/mu) (1 - step((r - a)/w))`` (this is beta')."""
        a = self.junction - self.collar
        cut = -step_jet((np.asarray(r) - a) / self.collar, order)
        for k in range(1, order + 1):
            cut[k] = cut[k] / self.collar**k
        cut[0] = cut[0] + 1.0
        return jets.mul(_sin_jet(r, self.mu, order + 1)[1:], cut)

    def _collar_value(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        a = self.junction - self.collar
        nodes, weights = np.polynomial.legendre.leggauss(48)
        x = a + 0.5 * (r[:, None] - a) * (nodes + 1.0)
        vals = self._collar_slope_jet(x, 0)[0]
        return self.mu * math.sin(a / self.mu) + 0.5 * (r - a) * np.sum(weights * vals, axis=1)

    def jet(self, r, order: int = 2) -> np.ndarray:
        r = self._check_r(r)
        out = np.zeros((order + 1,) + r.shape)
        cap_end = self.junction if self.mode == "piecewise" else self.junction - self.collar
        cap = r <= cap_end
        out[:, cap] = _sin_jet(r[cap], self.mu, order)
        flat = r >= self.junction if self.mode == "mollified" else ~cap
        out[0, flat] = self.plateau
        if self.mode == "mollified":
            mid = ~cap & ~flat
            if np.any(mid):
                out[0, mid] = self._collar_value(r[mid])
                if order >= 1:
                    out[1:, mid] = self._collar_slope_jet(r[mid], order - 1)
        return out

    def defect(self, r) -> np.ndarray:
        r = self._check_r(r)
        x = r / self.mu
        if self.mode == "piecewise":
            return np.where(r <= self.junction, np.sin(np.minimum(x, math.pi / 2)) ** 2, 1.0)
        d1 = self.jet(r, 1)[1]
        cap = r <= self.junction - self.collar
        return np.where(cap, np.sin(x) ** 2, 1.0 - d1 * d1)

    def alpha(self, r) -> np.ndarray:
        """Closed-form torpedo-curve height (piecewise mode)."""
        r = self._check_r(r)
        if self.mode != "piecewise":
            return _alpha_quadrature(self, r)
        cap = self.mu * (1.0 - np.cos(np.minimum(r, self.junction) / self.mu))
        return cap + np.maximum(r - self.junction, 0.0)

    def to_dict(self) -> dict:
        return {"kind": "torpedo", "mu": self.mu, "delta": self.delta, "mode": self.mode}


class SineCapProfile(WarpProfile):
    """``mu sin(r/mu)`` on [0, delta] with ``delta < mu pi`` (round cap)."""

    kind = "sine_cap"

    def __init__(self, mu: float, delta: float):
        if mu <= 0 or not 0 < delta < mu * math.pi:
            raise DomainError("sine cap needs mu > 0 and 0 < delta < mu*pi")
        self.mu, self.delta = float(mu), float(delta)

    def jet(self, r, order=2):
        return _sin_jet(self._check_r(r), self.mu, order)

    def defect(self, r):
        return np.sin(self._check_r(r) / self.mu) ** 2

    def alpha(self, r):
        r = self._check_r(r)
        if self.delta > self.mu * math.pi / 2:
            return _alpha_quadrature(self, r)
        return self.mu * (1.0 - np.cos(r / self.mu))

    def to_dict(self):
        return {"kind": "sine_cap", "mu": self.mu, "delta": self.delta}


class LinearProfile(WarpProfile):
    """``beta(r) = r``: the flat metric."""

    kind = "linear"

    def __init__(self, delta: float):
        if delta <= 0:
            raise DomainError("delta must be positive")
        self.delta = float(delta)

    def jet(self, r, order=2):
        return jets.identity(self._check_r(r), order)

    def defect(self, r):
        return np.zeros_like(self._check_r(r))

    def to_dict(self):
        return {"kind": "linear", "delta": self.delta}


class FunctionProfile(WarpProfile):
    """Profile given by callables ``[beta, beta', beta'', ...]``."""

    kind = "function"

    def __init__(self, delta: float, funcs, label: str = "function", breakpoints=()):
        if delta <= 0 or not funcs:
            raise DomainError("need delta > 0 and at least one callable")
        self.delta = float(delta)
        self.funcs = tuple(funcs)
        self.label = label
        self._breakpoints = tuple(breakpoints)

    @property
    def breakpoints(self):
        return self._breakpoints

    @property
    def max_order(self):
        return len(self.funcs) - 1

    def jet(self, r, order=2):
        if order > self.max_order:
            raise DomainError(f"profile provides derivatives up to order {self.max_order}")
        r = self._check_r(r)
        return np.stack([np.broadcast_to(np.asarray(f(r), dtype=float), r.shape) for f in self.funcs[: order + 1]])

    def to_dict(self):
        raise DomainError("callable profiles cannot be serialised; sample them first")


_EXPR_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "arctan": np.arctan, "abs": np.abs,
}
_EXPR_CONSTS = {"pi": math.pi, "e": math.e}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _compile_expression(expr: str):
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise DomainError(f"unsupported syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _EXPR_FUNCS and node.id not in _EXPR_CONSTS and node.id != "r":
            raise DomainError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS):
            raise DomainError("only elementary functions may be called")
    code = compile(tree, "<profile>", "eval")
    env = {"__builtins__": {}, **_EXPR_FUNCS, **_EXPR_CONSTS}
    return lambda r: eval(code, env, {"r": r})  # noqa: S307 - AST is whitelisted above


class ExpressionProfile(WarpProfile):
    """Elementary expression in ``r``; derivatives by 4th-order differences."""

    kind = "expression"
    derivative_mode = "finite_difference"

    def __init__(self, expr: str, delta: float, step: float | None = None):
        if delta <= 0:
            raise DomainError("delta must be positive")
        self.expr = expr
        self.delta = float(delta)
        self._f = _compile_expression(expr)
        self.h = step or 2e-3 * self.delta

    @property
    def max_order(self):
        return 3

    def jet(self, r, order=2):
        r = self._check_r(r)
        flat = r.reshape(-1)
        offsets = np.arange(-3, 4, dtype=float)
        lo = np.minimum(flat / self.h, 3.0)
        hi = np.minimum((self.delta - flat) / self.h, 3.0)
        shift = np.where(lo < 3, 3.0 - lo, 0.0) - np.where(hi < 3, 3.0 - hi, 0.0)
        x = flat[:, None] + self.h * (offsets[None, :] + shift[:, None])
        vals = np.broadcast_to(np.asarray(self._f(x), dtype=float), x.shape)
        out = poly_fit_derivs(x, vals, flat, self.h, order)
        out[0] = np.asarray(self._f(flat), dtype=float)
        return out.reshape((order + 1,) + r.shape)

    def to_dict(self):
        return {"kind": "expression", "expr": self.expr, "delta": self.delta}


class GridProfile(WarpProfile):
    """Samples on a uniform grid of [0, delta] plus optional breakpoints."""

    kind = "grid"
    derivative_mode = "finite_difference"

    def __init__(self, delta: float, values, breakpoints=(), source: str = "grid"):
        values = np.asarray(values, dtype=float)
        if delta <= 0 or values.ndim != 1 or values.size < 6:
            raise DomainError("grid profile needs delta > 0 and at least six values")
        self.delta = float(delta)
        self.values = values
        self.source = source
        self.pieces = _Pieces(self.delta, values.size, tuple(sorted(breakpoints)))

    @property
    def breakpoints(self):
        return self.pieces.breakpoints

    @property
    def grid_n(self):
        return self.values.size

    @property
    def max_order(self):
        return 3

    @property
    def nodes(self):
        return self.pieces.nodes

    def jet(self, r, order=2):
        r = self._check_r(r)
        flat = r.reshape(-1)
        idx = self.pieces.stencils(flat)
        out = poly_fit_derivs(self.nodes[idx], self.values[idx], flat, self.pieces.h, order)
        return out.reshape((order + 1,) + r.shape)

    def to_dict(self):
        doc = {"kind": "grid", "delta": self.delta, "values": self.values.tolist()}
        if self.breakpoints:
            doc["breakpoints"] = list(self.breakpoints)
        return doc


class ScaledProfile(WarpProfile):
    """``t * base(r / t)`` on [0, t * delta]."""

    kind = "scaled"

    def __init__(self, base: WarpProfile, t: float):
        self.base = base
        self.t = float(t)
        self.delta = base.delta * self.t
        self.derivative_mode = base.derivative_mode

    @property
    def breakpoints(self):
        return tuple(self.t * b for b in self.base.breakpoints)

    @property
    def max_order(self):
        return self.base.max_order

    def jet(self, r, order=2):
        r = self._check_r(r)
        out = self.base.jet(r / self.t, order)
        for k in range(order + 1):
            out[k] = out[k] * self.t ** (1 - k)
        return out

    def defect(self, r):
        return self.base.defect(self._check_r(r) / self.t)

    def to_dict(self):
        return {"kind": "scaled", "t": self.t, "base": self.base.to_dict()}


class ConstantProfile(WarpProfile):
    """A constant function; used for the radial factor of disc metrics."""

    kind = "constant"

    def __init__(self, value: float, delta: float):
        if delta <= 0:
            raise DomainError("delta must be positive")
        self.value, self.delta = float(value), float(delta)

    def jet(self, r, order=2):
        return jets.constant(self.value, self._check_r(r), order)

    def integral(self, r):
        return self.value * self._check_r(r)

    def to_dict(self):
        return {"kind": "constant", "value": self.value, "delta": self.delta}


class BumpProfile(WarpProfile):
    """``amplitude`` times a smooth bump rising on [a, b], flat to c, falling by d."""

    kind = "bump"

    def __init__(self, amplitude: float, a: float, b: float, c: float, d: float, delta: float):
        if not (0 <= a < b <= c < d) or delta <= 0:
            raise DomainError("bump needs 0 <= a < b <= c < d and delta > 0")
        self.amplitude = float(amplitude)
        self.edges = (float(a), float(b), float(c), float(d))
        self.delta = float(delta)

    def jet(self, r, order=2):
        return self.amplitude * plateau_bump_jet(self._check_r(r), *self.edges, order=order)

    def integral(self, r):
        return self.amplitude * plateau_bump_integral(self._check_r(r), *self.edges)

    def to_dict(self):
        a, b, c, d = self.edges
        return {"kind": "bump", "amplitude": self.amplitude, "a": a, "b": b, "c": c, "d": d, "delta": self.delta}


class SumProfile(WarpProfile):
    """Pointwise sum of profiles on a common interval."""

    kind = "sum"

    def __init__(self, terms):
        terms = tuple(terms)
        if not terms:
            raise DomainError("sum profile needs at least one term")
        self.terms = terms
        self.delta = min(t.delta for t in terms)
        self.derivative_mode = (
            "analytic" if all(t.derivative_mode == "analytic" for t in terms) else "finite_difference"
        )

    @property
    def breakpoints(self):
        return tuple(sorted({b for t in self.terms for b in t.breakpoints}))

    @property
    def max_order(self):
        return min(t.max_order for t in self.terms)

    def jet(self, r, order=2):
        r = self._check_r(r)
        return sum(t.jet(r, order) for t in self.terms)

    def defect(self, r):
        # 1 - (f' + g')^2 = (1 - f'^2) - g'(2 f' + g'), keeping the first term's precision
        r = self._check_r(r)
        head, rest = self.terms[0], self.terms[1:]
        if not rest:
            return head.defect(r)
        f1 = head.jet(r, 1)[1]
        g1 = sum(t.jet(r, 1)[1] for t in rest)
        return head.defect(r) - g1 * (2.0 * f1 + g1)

    def integral(self, r):
        if not all(hasattr(t, "integral") for t in self.terms):
            raise AttributeError("integral")
        return sum(t.integral(r) for t in self.terms)

    def to_dict(self):
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


def profile_from_dict(doc: dict) -> WarpProfile:
    try:
        kind = doc["kind"]
        if kind == "torpedo":
            return TorpedoProfile(doc["mu"], doc["delta"], doc.get("mode", "piecewise"))
        if kind == "sine_cap":
            return SineCapProfile(doc["mu"], doc["delta"])
        if kind == "linear":
            return LinearProfile(doc["delta"])
        if kind == "expression":
            return ExpressionProfile(doc["expr"], doc["delta"])
        if kind == "grid":
            return GridProfile(doc["delta"], doc["values"], doc.get("breakpoints", ()))
        if kind == "scaled":
            return shrink_fiber(profile_from_dict(doc["base"]), doc["t"])
        if kind == "constant":
            return ConstantProfile(doc["value"], doc["delta"])
        if kind == "bump":
            return BumpProfile(doc["amplitude"], doc["a"], doc["b"], doc["c"], doc["d"], doc["delta"])
        if kind == "sum":
            return SumProfile(profile_from_dict(t) for t in doc["terms"])
    except KeyError as exc:
        raise DomainError(f"profile document missing key {exc}") from None
    raise DomainError(f"unknown profile kind {kind!r}")


# ----------------------------------------------------------------------------
# checks and curvature


@dataclass
class ProfileCheck:
    passed: bool
    values_at_zero: list
    min_positive: float
    failures: list


def check_profile(beta: WarpProfile, tol: float = 1e-6, grid_n: int = 512) -> ProfileCheck:
    """beta(0)=0, beta'(0)=1, even derivatives vanish at 0, beta > 0 on (0, delta]."""
    order = min(4 if beta.derivative_mode == "analytic" else 2, beta.max_order)
    at0 = beta.jet(np.array([0.0]), order)[:, 0]
    failures = []
    want = {0: 0.0, 1: 1.0, 2: 0.0, 4: 0.0}
    for k, v in want.items():
        if k <= order and abs(at0[k] - v) > tol:
            failures.append(f"derivative {k} at 0 is {at0[k]:.3e}, expected {v}")
    r = np.linspace(0.0, beta.delta, grid_n)[1:]
    vals = beta(r)
    if np.min(vals) <= 0:
        failures.append(f"beta not positive at r={r[np.argmin(vals)]:.6g}")
    return ProfileCheck(not failures, at0.tolist(), float(np.min(vals)), failures)


@dataclass
class WarpedCurvature:
    op: CurvOp
    lam: float
    mu_l: float


def warped_coefficients(beta: WarpProfile, r):
    """``lam = (1 - beta'^2)/beta^2`` and ``mu_L = -beta''/beta`` (limits at r = 0)."""
    r = np.asarray(r, dtype=float)
    j = beta.jet(r, 3 if beta.derivative_mode == "analytic" and beta.max_order >= 3 else 2)
    zero = r == 0.0
    if np.any(zero) and beta.derivative_mode != "analytic":
        raise DomainError("curvature at r = 0 needs analytic derivatives; sample from r >= delta/grid_n")
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = beta.defect(r) / j[0] ** 2
        mu = -j[2] / j[0]
    if np.any(zero):
        if beta.max_order < 3:
            raise DomainError("limit at r = 0 needs third derivatives")
        lam = np.where(zero, -j[3], lam)
        mu = np.where(zero, -j[3], mu)
    return lam, mu


def _layout_ops(n: int, q: int):
    if not 2 <= q <= n:
        raise DomainError(f"need 2 <= q <= n, got q={q}, n={n}")
    return model_operator(n, q - 1), l_operator(n, BlockLayout.warped(n, q))


def assemble(lam: float, mu_l: float, n: int, q: int) -> CurvOp:
    model, lop = _layout_ops(n, q)
    return CurvOp(n, lam * model.mat + mu_l * lop.mat)


def warped_curvature(beta: WarpProfile, r: float, n: int, q: int) -> WarpedCurvature:
    lam, mu = warped_coefficients(beta, np.array([float(r)]))
    return WarpedCurvature(assemble(lam[0], mu[0], n, q), float(lam[0]), float(mu[0]))


def warped_curvature_mats(beta: WarpProfile, rs, n: int, q: int) -> np.ndarray:
    """Stack of curvature matrices along ``rs``."""
    model, lop = _layout_ops(n, q)
    lam, mu = warped_coefficients(beta, rs)
    return lam[:, None, None] * model.mat + mu[:, None, None] * lop.mat


def warped_margins(condition, lam, mu_l, q: int) -> np.ndarray:
    """Exact margins of ``lam * model + mu_L * L`` for arrays of coefficients.

    These operators are diagonal in the coordinate bivectors with sectional
    curvatures ``lam`` (sphere-sphere), ``mu_L`` (radial-sphere) and 0
    (anything flat), so Ricci eigenvalues are explicit and the frame minima of
    ``sec_pos``/``p_curv`` are attained on coordinate subspaces.
    """
    n = condition.n
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu_l, dtype=float)
    s, f = q - 1, n - q
    name = condition.name
    if name in ("psc", "scal_lt"):
        scal_v = 2.0 * (math.comb(s, 2) * lam + s * mu)
        return scal_v if name == "psc" else condition.params["beta"] - scal_v
    if name in ("k_pos_ric", "ric_lt"):
        ev = [np.broadcast_to((s - 1) * lam + mu, lam.shape)] * s
        ev += [s * mu] + [np.zeros_like(lam)] * f
        ev = np.sort(np.stack(ev, axis=-1), axis=-1)
        if name == "k_pos_ric":
            return np.sum(ev[..., : condition.params["k"]], axis=-1)
        return condition.params["alpha"] - ev[..., -1]
    if name == "sec_pos":
        cands = []
        if s >= 2:
            cands.append(lam)
        if s >= 1:
            cands.append(mu)
        if f >= 1:
            cands.append(np.zeros_like(lam))
        return np.min(np.stack(np.broadcast_arrays(*cands)), axis=0)
    if name == "p_curv":
        m = n - condition.params["p"]
        best = None
        for rad in (0, 1):
            for k in range(0, min(s, m - rad) + 1):
                if m - rad - k > f:
                    continue
                val = 2.0 * (math.comb(k, 2) * lam + rad * k * mu)
                best = val if best is None else np.minimum(best, val)
        return best
    raise DomainError(f"no warped margin for {name}")


def sample_radii(beta: WarpProfile, grid_n: int = DEFAULT_GRID) -> np.ndarray:
    """Evaluation grid avoiding r = 0 unless analytic limits are available."""
    r = np.linspace(0.0, beta.delta, grid_n)
    if beta.derivative_mode != "analytic" or beta.max_order < 3:
        r = r[1:]
    extra = [b for bp in beta.breakpoints for b in (bp, bp - 1e-12 * beta.delta)]
    return np.unique(np.concatenate([r, np.clip(extra, 0.0, beta.delta)]))


@dataclass
class ConcavityReport:
    passed: bool
    witness_r: float | None
    violated: str | None
    min_defect: float
    max_second: float


def concavity_check(beta: WarpProfile, grid_n: int = DEFAULT_GRID, tol: float = 1e-12) -> ConcavityReport:
    """Grid check of ``1 - beta'^2 >= 0`` and ``beta'' <= 0``."""
    r = sample_radii(beta, grid_n)
    defect = beta.defect(r)
    second = beta.jet(r, 2)[2]
    bad_d = defect < -tol
    bad_s = second > tol
    witness, which = None, None
    if np.any(bad_d | bad_s):
        i = int(np.argmax(bad_d | bad_s))
        witness = float(r[i])
        which = "1 - beta'^2 >= 0" if bad_d[i] else "beta'' <= 0"
    return ConcavityReport(witness is None, witness, which, float(np.min(defect)), float(np.max(second)))


def shrink_fiber(beta: WarpProfile, t: float) -> WarpProfile:
    """``r -> t beta(r/t)`` on [0, t delta]."""
    if not 0 < t <= 1:
        raise DomainError("shrink factor must lie in (0, 1]")
    if t == 1:
        return beta
    if isinstance(beta, TorpedoProfile):
        return TorpedoProfile(t * beta.mu, t * beta.delta, beta.mode)
    if isinstance(beta, SineCapProfile):
        return SineCapProfile(t * beta.mu, t * beta.delta)
    if isinstance(beta, LinearProfile):
        return LinearProfile(t * beta.delta)
    if isinstance(beta, ScaledProfile):
        return ScaledProfile(beta.base, beta.t * t)
    return ScaledProfile(beta, t)


def t_star_estimate(beta: WarpProfile, condition, q: int, *, grid_n: int = 256, iters: int = 40) -> dict:
    """Bisection estimate of the largest t with the shrunk metric in the condition."""
    n = condition.n

    def ok(t):
        prof = shrink_fiber(beta, t)
        mats = warped_curvature_mats(prof, sample_radii(prof, grid_n), n, q)
        if condition.margin_is_exact:
            return bool(np.all(condition.margins_batch(mats) > 1e-9))
        return all(condition.contains(CurvOp(n, m)) for m in mats)

    if ok(1.0):
        return {"t_star": 1.0, "label": "estimate", "note": "t = 1 already satisfies the condition"}
    lo, hi = 0.0, 1.0
    probe = 0.5
    while probe > 1e-8 and not ok(probe):
        hi, probe = probe, probe / 2
    if probe <= 1e-8:
        return {"t_star": None, "label": "estimate", "note": "no t >= 1e-8 found"}
    lo = probe
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return {"t_star": lo, "label": "estimate", "note": "bisection on membership over an r-grid"}


# ----------------------------------------------------------------------------
# torpedo curve


@lru_cache(maxsize=1)
def _gl20():
    return np.polynomial.legendre.leggauss(20)


def _alpha_quadrature(beta: WarpProfile, r: np.ndarray, panels: int = 16) -> np.ndarray:
    """``int_0^r sqrt(1 - beta'^2)`` by composite Gauss-Legendre, split at breakpoints."""
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1)
    nodes, weights = _gl20()
    out = np.zeros(flat.size)
    cuts = sorted(beta.breakpoints)
    for i, ri in enumerate(flat):
        edges = [0.0] + [c for c in cuts if c < ri] + [ri]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            pe = np.linspace(a, b, panels + 1)
            mid = 0.5 * (pe[:-1] + pe[1:])[:, None]
            half = 0.5 * (pe[1:] - pe[:-1])[:, None]
            x = np.clip(mid + half * nodes[None, :], 0.0, beta.delta)
            total += float(np.sum(half * weights * np.sqrt(np.maximum(beta.defect(x), 0.0))))
        out[i] = total
    return out.reshape(r.shape)


@dataclass
class TorpedoCurve:
    """The plane curve ``(alpha(r), beta(r))`` with ``alpha' = sqrt(1 - beta'^2)``."""

    beta: WarpProfile
    r: np.ndarray
    alpha: np.ndarray

    def rows(self):
        j = self.beta.jet(self.r, 2)
        return np.column_stack([self.r, self.alpha, j[0], j[1], j[2]])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "alpha", "beta", "beta1", "beta2"])
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])


def torpedo_curve(beta: WarpProfile, grid_n: int = 257) -> TorpedoCurve:
    r = np.linspace(0.0, beta.delta, grid_n)
    check = beta.defect(r)
    if np.min(check) < -1e-12:
        i = int(np.argmin(check))
        raise DomainError(f"beta'^2 > 1 at r={r[i]:.6g}: no arc-length lift")
    if isinstance(beta, GridProfile):
        alpha = cumquad4(np.sqrt(np.maximum(beta.defect(beta.nodes), 0.0)), beta.pieces.h)
        return TorpedoCurve(beta, beta.nodes, alpha)
    alpha = beta.alpha(r) if hasattr(beta, "alpha") else _alpha_quadrature(beta, r)
    return TorpedoCurve(beta, r, alpha)


@dataclass
class EmbeddingReport:
    residual: float
    status: str  # "ok" | "boundary"
    samples: tuple
    max_height_slope: float

    @property
    def passed(self) -> bool:
        return self.status == "ok"


def _sphere_points(q: int, count: int, rng) -> np.ndarray:
    x = rng.standard_normal((count, q))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def embedding_check(
    beta: WarpProfile, q: int, *, n_r: int = 64, n_theta: int = 16, seed: int = 0
) -> EmbeddingReport:
    """First fundamental form of ``(r, theta) -> (alpha(r), beta(r) theta)`` in R x R^q.

    The pull-back is compared with ``dr^2 + beta^2 g_{S^{q-1}}`` on an
    orthonormal tangent frame of the sphere.  Analytic profiles use exact
    derivatives; grid profiles differentiate the quadrature-built alpha.
    """
    if q < 2:
        raise DomainError("need q >= 2")
    rng = np.random.default_rng(seed)
    r = np.linspace(0.0, beta.delta, n_r + 1)[1:]
    if np.min(beta.defect(r)) < -1e-12:
        raise DomainError("beta'^2 > 1: no arc-length lift")
    jb = beta.jet(r, 1)
    if isinstance(beta, GridProfile):
        curve = torpedo_curve(beta)
        lifted = GridProfile(beta.delta, curve.alpha, beta.breakpoints)
        d_alpha = lifted.jet(r, 1)[1]
    else:
        d_alpha = np.sqrt(np.maximum(beta.defect(r), 0.0))
    thetas = _sphere_points(q, n_theta, rng)
    worst = 0.0
    for th in thetas:
        # orthonormal tangent basis of S^{q-1} at th
        tang = np.linalg.svd(th[None, :], full_matrices=True)[2][1:]
        for i in range(r.size):
            d_r = np.concatenate([[d_alpha[i]], jb[1, i] * th])
            d_t = np.hstack([np.zeros((q - 1, 1)), jb[0, i] * tang])
            jac = np.vstack([d_r, d_t])
            gram = jac @ jac.T
            want = np.diag(np.concatenate([[1.0], np.full(q - 1, jb[0, i] ** 2)]))
            worst = max(worst, float(np.max(np.abs(gram - want))))
    status = "ok" if np.max(d_alpha) > 1e-12 else "boundary"
    return EmbeddingReport(worst, status, (n_r, n_theta), float(np.max(d_alpha)))
