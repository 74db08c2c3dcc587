"""Curvature conditions with quantitative margins.

A condition is an open, O(n)-invariant set of curvature operators.  Each
builtin comes with a margin functional; an operator is *in* the condition
when its margin exceeds ``EPS_STRICT``.  Margins that are minima over a
Grassmannian (``sec_pos``, ``p_curv``) are computed by a restarted Cayley
descent on the Stiefel manifold; all others are exact eigenvalue formulas.

Cone radii (distance from a centre to the complement) are reported exactly
where the margin is a minimum of linear functionals with equal-norm Riesz
representers, and by direction sampling otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import kernels
from .curvature_algebra import (
    BlockLayout,
    CurvOp,
    DomainError,
    Frame,
    bianchi_project_mats,
    complement_basis,
    identity,
    l_operator,
    lambda2,
    model_operator,
    random_frames,
    ricci_matrix,
    scal,
    span_projector,
    wedge,
    wedge_basis,
)

EPS_STRICT = 1e-9
DEFAULT_SEED = 0
DEFAULT_DIRECTIONS = 512
RADIUS_FLOOR = 1e-6  # a sampled radius above this counts as certified


@dataclass(frozen=True)
class Budget:
    restarts: int = 64
    iterations: int = 200

    def __post_init__(self):
        if self.restarts <= 0 or self.iterations <= 0:
            raise DomainError("budget must have positive restarts and iterations")


@dataclass(frozen=True)
class Membership:
    inside: bool
    margin: float
    witness: Frame | None = None


# ----------------------------------------------------------------------------
# Grassmannian minimisation


@dataclass(frozen=True)
class _FrameObjective:
    """``f(Q) = c0 + c_ric * tr(Q^T Ric Q) + c_f * F(Q)`` over n x k frames."""

    t4: np.ndarray
    ric: np.ndarray
    k: int
    c0: float
    c_ric: float
    c_f: float

    def values_grads(self, q: np.ndarray):
        vals, grad = kernels.frame_values_grad(self.t4, q)
        vals = self.c_f * vals
        grad = self.c_f * grad
        if self.c_ric:
            rq = np.einsum("ij,rjk->rik", self.ric, q)
            vals = vals + self.c_ric * np.einsum("rik,rik->r", q, rq)
            grad = grad + 2.0 * self.c_ric * rq
        return vals + self.c0, grad

    def values(self, q: np.ndarray) -> np.ndarray:
        return self.values_grads(q)[0]


def _cayley_descent(obj: _FrameObjective, q0: np.ndarray, iterations: int):
    """Batched Riemannian descent with Cayley retraction and Armijo halving."""
    q = np.array(q0, dtype=float)
    nb, n, _ = q.shape
    eye = np.eye(n)
    f, g = obj.values_grads(q)
    tau = np.ones(nb)
    w = np.einsum("rik,rjk->rij", g, q)
    w = w - np.swapaxes(w, 1, 2)
    wn = np.linalg.norm(w, axis=(1, 2))
    tau = 1.0 / np.maximum(wn, 1e-12)
    for _ in range(iterations):
        wq = np.einsum("rij,rjk->rik", w, q)
        slope = np.einsum("rik,rik->r", g, wq)
        active = slope > 1e-26
        if not np.any(active):
            break
        half = 0.5 * tau[:, None, None] * w
        trial = np.linalg.solve(eye + half, q - np.einsum("rij,rjk->rik", half, q))
        f_new, g_new = obj.values_grads(trial)
        ok = active & (f_new <= f - 1e-4 * tau * slope)
        if np.any(ok):
            q[ok], f[ok], g[ok] = trial[ok], f_new[ok], g_new[ok]
            w_ok = np.einsum("rik,rjk->rij", g[ok], q[ok])
            w[ok] = w_ok - np.swapaxes(w_ok, 1, 2)
        tau = np.where(ok, np.minimum(tau * 2.0, 1e6), tau * 0.5)
    # Cayley steps are orthogonal; a final QR removes accumulated rounding
    qq, rr = np.linalg.qr(q)
    signs = np.sign(np.diagonal(rr, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    q = qq * signs[:, None, :]
    return obj.values(q), q


def _objective(kind: str, R: CurvOp, p: int = 0):
    """Return ``(objective, side)``; side tells how to read a witness frame."""
    t4 = R.tensor()
    n = R.n
    ric = ricci_matrix(R)
    if kind == "sec":
        return _FrameObjective(t4, ric, 2, 0.0, 0.0, 0.5), "plane"
    if kind != "pcurv":
        raise DomainError(f"unknown functional {kind!r}")
    if n - p <= p:
        return _FrameObjective(t4, ric, n - p, 0.0, 0.0, 1.0), "perp"
    return _FrameObjective(t4, ric, p, scal(R), -2.0, 1.0), "span"


def _seed_frames(R: CurvOp, k: int, side: str) -> np.ndarray:
    """Deterministic starting frames built from Ricci eigenvectors."""
    _, vecs = np.linalg.eigh(ricci_matrix(R))
    if side == "span":
        return np.stack([vecs[:, -k:], vecs[:, :k]])
    return np.stack([vecs[:, :k], vecs[:, -k:]])


def _witness(n: int, q: np.ndarray, side: str) -> Frame:
    if side == "perp":
        return Frame(n, complement_basis(q))
    return Frame(n, q)


def minimize_frame_functional(
    kind: str,
    R: CurvOp,
    p: int = 0,
    budget: Budget = Budget(),
    seed: int = DEFAULT_SEED,
    mode: str = "optimize",
    samples: int = 100_000,
):
    """Minimum of ``sec`` (kind='sec') or ``s_p`` (kind='pcurv') and a witness.

    ``mode='brute'`` evaluates ``samples`` Haar-random frames instead.
    """
    n = R.n
    if kind == "pcurv":
        if not 0 <= p <= n - 2:
            raise DomainError(f"p must satisfy 0 <= p <= n-2, got p={p}")
        if p == 0:
            return scal(R), Frame(n, np.zeros((n, 0)))
        if p == 1 and mode == "optimize":
            vals, vecs = np.linalg.eigh(ricci_matrix(R))
            return scal(R) - 2.0 * float(vals[-1]), Frame(n, vecs[:, -1:])
    obj, side = _objective(kind, R, p)
    rng = np.random.default_rng(seed)
    if mode == "brute":
        best, best_q = math.inf, None
        chunk = 4096
        done = 0
        while done < samples:
            cnt = min(chunk, samples - done)
            qs = random_frames(n, obj.k, cnt, rng)
            vals = obj.values(qs)
            j = int(np.argmin(vals))
            if vals[j] < best:
                best, best_q = float(vals[j]), qs[j]
            done += cnt
        return best, _witness(n, best_q, side)
    if mode != "optimize":
        raise DomainError(f"unknown mode {mode!r}")
    starts = np.concatenate(
        [_seed_frames(R, obj.k, side), random_frames(n, obj.k, max(budget.restarts - 2, 1), rng)]
    )[: max(budget.restarts, 2)]
    vals, qs = _cayley_descent(obj, starts, budget.iterations)
    j = int(np.argmin(vals))
    return float(vals[j]), _witness(n, qs[j], side)


# ----------------------------------------------------------------------------
# conditions


def _ricci_batch(mats: np.ndarray, n: int) -> np.ndarray:
    """Ricci matrices for a stack of bivector matrices."""
    basis = wedge_basis(n)
    out = np.zeros((mats.shape[0], n, n))
    # Ric_{jl} = sum_i T_ijil; only pairs sharing an index contribute
    for a, (i, j) in enumerate(basis.pairs):
        for b, (k, l) in enumerate(basis.pairs):
            v = mats[:, a, b]
            if i == k:
                out[:, j, l] += v
            if j == l:
                out[:, i, k] += v
            if i == l:
                out[:, j, k] -= v
            if j == k:
                out[:, i, l] -= v
    return 0.5 * (out + np.swapaxes(out, 1, 2))


@dataclass
class Condition:
    """A builtin curvature condition (see :func:`builtin`)."""

    name: str
    n: int
    params: dict
    is_convex_cone: bool
    claimed_codim: int | None
    deformable_claimed: bool
    budget: Budget = field(default_factory=Budget)
    seed: int = DEFAULT_SEED

    # margin ------------------------------------------------------------
    def margin(self, R: CurvOp) -> float:
        return self.membership(R).margin

    def membership(self, R: CurvOp) -> Membership:
        if R.n != self.n:
            raise DomainError(f"condition is for n={self.n}, operator has n={R.n}")
        name = self.name
        if name == "psc":
            m = scal(R)
            wit = None
        elif name in ("sec_pos", "p_curv"):
            kind = "sec" if name == "sec_pos" else "pcurv"
            m, wit = minimize_frame_functional(
                kind, R, self.params.get("p", 0), self.budget, self.seed
            )
        elif name == "k_pos_ric":
            k = self.params["k"]
            vals, vecs = np.linalg.eigh(ricci_matrix(R))
            m, wit = float(np.sum(vals[:k])), Frame(self.n, vecs[:, :k])
        elif name == "ric_lt":
            vals, vecs = np.linalg.eigh(ricci_matrix(R))
            m, wit = self.params["alpha"] - float(vals[-1]), Frame(self.n, vecs[:, -1:])
        elif name == "scal_lt":
            m, wit = self.params["beta"] - scal(R), None
        else:  # pragma: no cover - guarded in builtin()
            raise DomainError(name)
        return Membership(bool(m > EPS_STRICT), float(m), wit)

    def contains(self, R: CurvOp) -> bool:
        return self.membership(R).inside

    @property
    def margin_is_exact(self) -> bool:
        return self.name not in ("sec_pos", "p_curv")

    def margins_batch(self, mats: np.ndarray) -> np.ndarray:
        """Margins for a stack of bivector matrices (exact conditions only)."""
        mats = np.asarray(mats, dtype=float)
        if self.name == "psc":
            return 2.0 * np.trace(mats, axis1=1, axis2=2)
        if self.name == "scal_lt":
            return self.params["beta"] - 2.0 * np.trace(mats, axis1=1, axis2=2)
        if self.name in ("k_pos_ric", "ric_lt"):
            ev = np.linalg.eigvalsh(_ricci_batch(mats, self.n))
            if self.name == "k_pos_ric":
                return np.sum(ev[:, : self.params["k"]], axis=1)
            return self.params["alpha"] - ev[:, -1]
        return np.array([self.margin(CurvOp(self.n, m)) for m in mats])

    # linear-family structure ---------------------------------------------
    def riesz_norm(self) -> float | None:
        """Common Frobenius norm of the linear functionals whose minimum is the margin."""
        n = self.n
        if self.name == "psc":
            return 2.0 * math.sqrt(wedge_basis(n).m)
        if self.name == "sec_pos":
            return 1.0
        if self.name == "p_curv":
            return 2.0 * math.sqrt(math.comb(n - self.params["p"], 2))
        if self.name == "k_pos_ric":
            k = self.params["k"]
            return math.sqrt(2 * k * (k - 1) + k * (n - k))
        return None

    def riesz_representer(self, witness: Frame | None) -> np.ndarray | None:
        """Representer of the functional attaining the margin at ``witness``."""
        n = self.n
        if self.name == "psc":
            return 2.0 * np.eye(wedge_basis(n).m)
        if witness is None:
            return None
        if self.name == "sec_pos":
            w = wedge(witness.vecs[:, 0], witness.vecs[:, 1])
            return np.outer(w, w)
        if self.name == "p_curv":
            perp = complement_basis(witness.vecs)
            return 2.0 * span_projector(perp)
        if self.name == "k_pos_ric":
            f = witness.vecs
            inner = span_projector(f)
            mixed = _mixed_projector(f, complement_basis(f))
            return 2.0 * inner + mixed
        return None

    # io --------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "params": dict(self.params)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict, **kw) -> "Condition":
        try:
            return builtin(doc["name"], int(doc["n"]), doc.get("params", {}), **kw)
        except KeyError as exc:
            raise DomainError(f"condition document missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str, **kw) -> "Condition":
        return cls.from_dict(json.loads(text), **kw)

    def label(self) -> str:
        if not self.params:
            return f"{self.name}(n={self.n})"
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}({inner},n={self.n})"


def _mixed_projector(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Projection onto span{f_a ^ g_b} for complementary frames f, g."""
    m = wedge_basis(f.shape[0]).m
    return np.eye(m) - span_projector(f) - span_projector(g)


BUILTIN_NAMES = ("psc", "sec_pos", "p_curv", "k_pos_ric", "ric_lt", "scal_lt")


def builtin(name: str, n: int, params: dict | None = None, **kw) -> Condition:
    params = dict(params or {})
    wedge_basis(n)
    if name == "psc":
        return Condition(name, n, {}, True, 3, True, **kw)
    if name == "sec_pos":
        return Condition(name, n, {}, True, None, False, **kw)
    if name == "p_curv":
        p = int(params.get("p", -1))
        if not 0 <= p <= n - 2:
            raise DomainError(f"p_curv needs 0 <= p <= n-2, got p={p}")
        return Condition(name, n, {"p": p}, True, p + 3, p < n - 2, **kw)
    if name == "k_pos_ric":
        k = int(params.get("k", 0))
        if not 1 <= k <= n:
            raise DomainError(f"k_pos_ric needs 1 <= k <= n, got k={k}")
        codim = max(3, n - k + 2) if k >= 2 else None
        return Condition(name, n, {"k": k}, True, codim, k >= 2, **kw)
    if name == "ric_lt":
        if "alpha" not in params:
            raise DomainError("ric_lt needs parameter alpha")
        return Condition(name, n, {"alpha": float(params["alpha"])}, False, None, False, **kw)
    if name == "scal_lt":
        if "beta" not in params:
            raise DomainError("scal_lt needs parameter beta")
        return Condition(name, n, {"beta": float(params["beta"])}, False, None, False, **kw)
    raise DomainError(f"unknown condition {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def min_functional(C: Condition, R: CurvOp, budget: Budget | None = None, *, seed=None, mode="optimize", samples=100_000):
    """Best-found minimum of the search functional of ``C`` and its witness."""
    budget = budget or C.budget
    seed = C.seed if seed is None else seed
    if C.name == "sec_pos":
        return minimize_frame_functional("sec", R, 0, budget, seed, mode, samples)
    if C.name == "p_curv":
        return minimize_frame_functional("pcurv", R, C.params["p"], budget, seed, mode, samples)
    if C.name == "k_pos_ric":
        mem = C.membership(R)
        return mem.margin, mem.witness
    raise DomainError(f"{C.name} has no frame functional")


# ----------------------------------------------------------------------------
# directions


def random_directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm Bianchi-satisfying directions (alternating two samplers)."""
    m = wedge_basis(n).m
    n_gauss = (count + 1) // 2
    a = rng.standard_normal((n_gauss, m, m))
    gauss = bianchi_project_mats(a + np.swapaxes(a, 1, 2), n)
    h = rng.standard_normal((count - n_gauss, 3, n, n))
    signs = rng.choice([-1.0, 1.0], size=(count - n_gauss, 3))
    jac = np.einsum("rt,rtab->rab", signs, lambda2(0.5 * (h + np.swapaxes(h, 2, 3))))
    out = np.empty((count, m, m))
    out[0::2] = gauss
    out[1::2] = jac
    return out / np.linalg.norm(out, axis=(1, 2))[:, None, None]


def structured_directions(n: int) -> list[tuple[str, np.ndarray]]:
    out = []
    for q in range(2, n + 1):
        mat = model_operator(n, q).mat
        mat = mat / np.linalg.norm(mat)
        out.append((f"+model(q={q})", mat))
        out.append((f"-model(q={q})", -mat))
        lay = BlockLayout.warped(n, q)
        lm = l_operator(n, lay).mat
        lm = lm / np.linalg.norm(lm)
        out.append((f"+L(q={q})", lm))
        out.append((f"-L(q={q})", -lm))
    ident = identity(n).mat / math.sqrt(wedge_basis(n).m)
    out.append(("-identity", -ident))
    return out


# ----------------------------------------------------------------------------
# cone radius


@dataclass
class ConeCertificate:
    center: CurvOp
    radius: float
    direction_samples: int
    worst_margin: float
    exact: bool
    condition: str = ""
    center_ref: str = ""
    sampled_radius: float | None = None
    riesz_radius: float | None = None
    worst_direction: str = ""
    note: str = ""

    @property
    def certified(self) -> bool:
        return self.radius > RADIUS_FLOOR

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "center_ref": self.center_ref,
            "radius": self.radius,
            "exact": self.exact,
            "samples": self.direction_samples,
            "worst_margin": self.worst_margin,
            "sampled_radius": self.sampled_radius,
            "riesz_radius": self.riesz_radius,
            "worst_direction": self.worst_direction,
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _exit_times_linear(a0: float, slopes: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(slopes < 0, (a0 - EPS_STRICT) / -slopes, np.inf)
    return np.maximum(t, 0.0)


def _exit_times_bisect(C: Condition, S: np.ndarray, dirs: np.ndarray, tmax: float, iters: int = 60):
    """First exit along each ray by bisection (margins are concave along rays)."""
    nd = dirs.shape[0]
    far = C.margins_batch(S[None] + tmax * dirs) > EPS_STRICT
    lo = np.zeros(nd)
    hi = np.full(nd, tmax)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = C.margins_batch(S[None] + mid[:, None, None] * dirs) > EPS_STRICT
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return np.where(far, np.inf, lo)


class _FrameBank:
    """Finite family of linear functionals standing in for a Grassmannian minimum."""

    def __init__(self, C: Condition, rng: np.random.Generator, size: int = 2048):
        self.C = C
        n = C.n
        k = 2 if C.name == "sec_pos" else n - C.params["p"]
        frames = [random_frames(n, k, size, rng)]
        eye = np.eye(n)
        # coordinate-aligned frames catch the extremal planes of model operators
        coords = [eye[:, list(c)] for c in combinations(range(n), k)]
        frames.append(np.array(coords))
        self.k = k
        self.reps = np.empty((0, wedge_basis(n).m ** 2))
        for fr in frames:
            self.add(fr)

    def add(self, frames: np.ndarray) -> None:
        if self.C.name == "sec_pos":
            reps = span_projector(frames)
        else:
            reps = 2.0 * span_projector(frames)
        self.reps = np.vstack([self.reps, reps.reshape(frames.shape[0], -1)])

    def add_witness(self, wit: Frame) -> None:
        q = wit.vecs
        if self.C.name == "p_curv":
            q = complement_basis(q)
        self.add(q[None])

    def exit_times(self, S: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        a = self.reps @ S.ravel()
        b = dirs.reshape(dirs.shape[0], -1) @ self.reps.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(b < 0, (a[None] - EPS_STRICT) / -b, np.inf)
        return np.maximum(np.min(t, axis=1), 0.0)


def cone_radius(
    C: Condition,
    S: CurvOp,
    *,
    directions: int = DEFAULT_DIRECTIONS,
    seed: int | None = None,
    refine: int = 8,
    center_ref: str = "",
) -> ConeCertificate:
    """Radius of a ball around ``S`` inside ``C``.

    ``radius`` is exact when the margin is a minimum of equal-norm linear
    functionals with an exactly computed minimum (psc, k_pos_ric); otherwise
    it is the sampled radius, a lower-bound candidate.
    """
    if S.norm() == 0.0:
        raise DomainError("cone centre must be non-zero")
    seed = C.seed if seed is None else seed
    mem = C.membership(S)
    label = C.label()
    if not mem.inside:
        return ConeCertificate(
            S, 0.0, 0, mem.margin, C.margin_is_exact, label, center_ref, 0.0, 0.0,
            note="centre is not in the condition",
        )
    rng = np.random.default_rng(seed)
    structured = structured_directions(C.n)
    names = [nm for nm, _ in structured]
    mats = [d for _, d in structured]
    rep = C.riesz_representer(mem.witness)
    if rep is not None:
        names.append("-riesz(witness)")
        mats.append(-rep / np.linalg.norm(rep))
    structured_count = len(mats)
    dirs = np.concatenate([np.array(mats), random_directions(C.n, directions, rng)])
    names += [f"random[{i}]" for i in range(directions)]
    s = S.mat

    if C.name == "psc":
        slopes = 2.0 * np.trace(dirs, axis1=1, axis2=2)
        times = _exit_times_linear(mem.margin, slopes)
    elif C.margin_is_exact:
        tmax = 10.0 * (S.norm() + 1.0)
        times = _exit_times_bisect(C, s, dirs, tmax)
    else:
        bank = _FrameBank(C, rng)
        if mem.witness is not None:
            bank.add_witness(mem.witness)
        times = bank.exit_times(s, dirs)
        # the bank overestimates exit times; correct the worst rays with the optimizer
        for _ in range(3):
            order = np.argsort(times)[:refine]
            changed = False
            for j in order:
                if not np.isfinite(times[j]):
                    continue
                probe = CurvOp(C.n, s + times[j] * dirs[j])
                pm = C.membership(probe)
                if pm.witness is not None and pm.margin < -1e-12:
                    bank.add_witness(pm.witness)
                    changed = True
            if not changed:
                break
            times = bank.exit_times(s, dirs)

    j = int(np.argmin(times))
    sampled = float(times[j])
    # margin just inside the sampled ball along every sampled direction
    shrink = sampled * (1.0 - 1e-6) if np.isfinite(sampled) else 0.0
    if C.margin_is_exact:
        worst = float(np.min(C.margins_batch(s[None] + shrink * dirs)))
    else:
        worst = float(C.margin(CurvOp(C.n, s + shrink * dirs[j])))

    norm = C.riesz_norm()
    riesz = mem.margin / norm if norm else None
    exact = C.name in ("psc", "k_pos_ric")
    note = (
        "convex cone: ball certificate gives the full inner cone condition"
        if C.is_convex_cone
        else "non-convex condition: ball certificate only"
    )
    return ConeCertificate(
        center=S,
        radius=float(riesz) if exact else sampled,
        direction_samples=int(dirs.shape[0]),
        worst_margin=worst,
        exact=exact,
        condition=label,
        center_ref=center_ref,
        sampled_radius=sampled,
        riesz_radius=riesz,
        worst_direction=names[j] + (" (structured)" if j < structured_count else ""),
        note=note,
    )


# ----------------------------------------------------------------------------
# refutation, inner rays, deformability, scans


@dataclass
class Refutation:
    center_ref: str
    center_margin: float
    witness: Frame | None
    probe_radius: float
    exit_fraction: float
    directions: int

    @property
    def refuted(self) -> bool:
        return self.center_margin <= EPS_STRICT

    def to_dict(self) -> dict:
        return {
            "center_ref": self.center_ref,
            "center_margin": self.center_margin,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "probe_radius": self.probe_radius,
            "exit_fraction": self.exit_fraction,
            "directions": self.directions,
            "label": "sampled refutation",
        }


def sampled_refutation(
    C: Condition, S: CurvOp, *, directions: int = DEFAULT_DIRECTIONS, seed: int | None = None,
    probe_radius: float = 1e-6, center_ref: str = "",
) -> Refutation:
    """Evidence that no ball around ``S`` lies in ``C``."""
    seed = C.seed if seed is None else seed
    mem = C.membership(S)
    rng = np.random.default_rng(seed)
    dirs = random_directions(C.n, directions, rng)
    pts = S.mat[None] + probe_radius * dirs
    if C.margin_is_exact:
        margins = C.margins_batch(pts)
    else:
        # any frame value is an upper bound on the margin, so the bank screens
        # out most probes; the rest get a cheap optimizer run
        bank = _FrameBank(C, np.random.default_rng(seed + 1))
        if mem.witness is not None:
            bank.add_witness(mem.witness)
        margins = np.min(pts.reshape(directions, -1) @ bank.reps.T, axis=1)
        cheap = replace(C, budget=Budget(restarts=8, iterations=80))
        for i in np.flatnonzero(margins > EPS_STRICT):
            margins[i] = min(margins[i], cheap.margin(CurvOp(C.n, pts[i])))
    frac = float(np.mean(margins <= EPS_STRICT))
    return Refutation(center_ref, mem.margin, mem.witness, probe_radius, frac, directions)


@dataclass
class RayReport:
    passed: bool
    first_fail: float | None
    lambdas: list
    margins: list


def inner_ray_check(
    C: Condition, R: CurvOp, lam_max: float = 1e3, steps: int = 25, *, q: int | None = None,
    lam_min: float = 1e-6,
) -> RayReport:
    """Check ``R + lam L`` in C on a log grid (plus lam = 0)."""
    n = C.n
    q = q if q is not None else n
    lop = l_operator(n, BlockLayout.warped(n, q))
    lams = np.concatenate([[0.0], np.geomspace(lam_min, lam_max, steps)])
    margins = []
    for lam in lams:
        margins.append(C.margin(R + lam * lop))
        if margins[-1] <= EPS_STRICT:
            return RayReport(False, float(lam), lams[: len(margins)].tolist(), margins)
    return RayReport(True, None, lams.tolist(), margins)


@dataclass
class DeformabilityReport:
    zero_excluded: bool
    inner_ray: bool
    model_scaling: bool
    codim: int
    failures: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.zero_excluded and self.inner_ray and self.model_scaling

    def to_dict(self) -> dict:
        return {
            "zero_excluded": self.zero_excluded,
            "inner_ray": self.inner_ray,
            "model_scaling": self.model_scaling,
            "codim": self.codim,
            "failures": self.failures,
            "note": self.note,
            "passed": self.passed,
        }


def deformability_check(
    C: Condition, *, codim: int | None = None, seed: int | None = None, members: int = 4,
    mu_grid: int = 13, lam_steps: int = 10,
) -> DeformabilityReport:
    """Grid test of the three deformability clauses."""
    n = C.n
    c = codim or C.claimed_codim or 3
    seed = C.seed if seed is None else seed
    failures = []

    zero_margin = C.margin(CurvOp(n, np.zeros((wedge_basis(n).m,) * 2)))
    zero_ok = zero_margin <= EPS_STRICT
    if not zero_ok:
        failures.append({"clause": "zero_excluded", "margin": zero_margin})

    # clause 3: mu * model(q-1) for q >= c
    mus = np.geomspace(1e-6, 1e6, mu_grid)
    scale_ok = True
    for q in range(c, n + 1):
        base = model_operator(n, q - 1)
        grid = mus[:1] if C.is_convex_cone else mus
        for mu in grid:
            mm = C.membership(mu * base)
            if not mm.inside:
                scale_ok = False
                failures.append({
                    "clause": "model_scaling", "q": q, "mu": float(mu), "margin": mm.margin,
                    "witness": None if mm.witness is None else mm.witness.to_dict(),
                })
                break
        if not scale_ok:
            break

    # clause 2: inner ray along L from sampled members
    rng = np.random.default_rng(seed)
    ray_ok = True
    for q in range(max(c, 2), n + 1):
        test_ops = [model_operator(n, q - 1) + model_operator(n, q)]
        for _ in range(members):
            d = random_directions(n, 1, rng)[0]
            cand = CurvOp(n, model_operator(n, q).mat + 0.05 * d)
            if C.contains(cand):
                test_ops.append(cand)
        for R in test_ops:
            if not C.contains(R):
                continue
            rep = inner_ray_check(C, R, 1e3, lam_steps, q=q)
            if not rep.passed:
                ray_ok = False
                failures.append({"clause": "inner_ray", "q": q, "lambda": rep.first_fail})
                break
        if not ray_ok:
            break
    note = (
        "model scaling implied by one sample (convex cone)"
        if C.is_convex_cone
        else "model scaling grid-certified on mu in [1e-6, 1e6]"
    )
    return DeformabilityReport(zero_ok, ray_ok, scale_ok, c, failures, note)


@dataclass
class ScanResult:
    condition: str
    n: int
    codim: int | None
    radii: dict
    monotone: bool
    refutation: Refutation | None
    certificates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "n": self.n,
            "codim": self.codim if self.codim is not None else "none <= n",
            "radii": {str(k): v for k, v in self.radii.items()},
            "monotone": self.monotone,
            "refutation": None if self.refutation is None else self.refutation.to_dict(),
        }


def surgery_codim_scan(
    C: Condition, n: int | None = None, *, directions: int = DEFAULT_DIRECTIONS, seed: int | None = None
) -> ScanResult:
    """Smallest c >= 3 with a certified ball around the model at q = c - 1."""
    n = n or C.n
    if n != C.n:
        raise DomainError("scan dimension must match the condition")
    radii, certs = {}, {}
    for c in range(3, n + 1):
        cert = cone_radius(C, model_operator(n, c - 1), directions=directions, seed=seed,
                           center_ref=f"model(n={n},q={c - 1})")
        radii[c] = cert.radius
        certs[c] = cert
    ok = [c for c in radii if certs[c].certified]
    codim = min(ok) if ok else None
    monotone = all(certs[c].certified for c in range(codim, n + 1)) if codim else True
    refutation = None
    if codim is not None:
        q0 = codim - 2
        refutation = sampled_refutation(C, model_operator(n, q0), directions=directions, seed=seed,
                                        center_ref=f"model(n={n},q={q0})")
    return ScanResult(C.label(), n, codim, radii, monotone, refutation, certs)


@dataclass
class LambdaThreshold:
    lower: float
    upper: float
    cone: bool
    note: str = ""


def lambda_threshold(C: Condition, q: int, *, grid: int = 49) -> LambdaThreshold:
    """Range of lam > 0 with ``lam * model(n, q)`` in C, bracketed by bisection."""
    n = C.n
    base = model_operator(n, q)
    lams = np.geomspace(1e-6, 1e6, grid)
    inside = np.array([C.contains(lam * base) for lam in lams])
    if not inside.any():
        return LambdaThreshold(math.inf, math.inf, C.is_convex_cone, "no lam on the grid works")
    if C.is_convex_cone:
        return LambdaThreshold(0.0, math.inf, True, "cone: every lam > 0 works")
    first = int(np.argmax(inside))
    last = len(inside) - 1 - int(np.argmax(inside[::-1]))

    def bisect(a, b, want_in_at_b):
        for _ in range(80):
            mid = math.sqrt(a * b)
            if C.contains(mid * base) == want_in_at_b:
                b = mid
            else:
                a = mid
        return b

    lower = 0.0 if first == 0 else bisect(lams[first - 1], lams[first], True)
    upper = math.inf if last == len(lams) - 1 else bisect(lams[last + 1], lams[last], True)
    return LambdaThreshold(lower, upper, False, "bracketed by bisection")
