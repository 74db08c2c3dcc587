"""Algebraic curvature operators on the second exterior power of R^n.

Coordinates
-----------
Bivectors are expanded in the lexicographic basis ``e_i ^ e_j`` (i < j),
declared orthonormal, so that ``<x^y, z^w> = <x,z><y,w> - <x,w><y,z>``.
With this normalisation the endomorphism attached to a bivector ``w`` is
``z -> W z`` where ``W`` is the antisymmetric matrix with ``W[i, j] = w_ij``;
the identity operator then has sectional curvature +1 (unit round sphere).

A :class:`CurvOp` stores the symmetric ``m x m`` matrix (``m = n(n-1)/2``).
Most functionals are evaluated through the full four-index tensor
``T[i, j, k, l] = <R(e_i ^ e_j), e_k ^ e_l>``; in particular
``R(e_i, e_j) e_k = T[i, j, :, k]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

SYMMETRY_TOL = 1e-8
ORTHONORMAL_TOL = 1e-10


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


# ----------------------------------------------------------------------------
# bases and layouts


@dataclass(frozen=True)
class BivectorBasis:
    n: int
    pairs: tuple
    m: int

    def index(self, i: int, j: int) -> int:
        """Position of ``e_i ^ e_j`` (requires i < j)."""
        return _pair_index(self.n)[i, j]


@lru_cache(maxsize=None)
def wedge_basis(n: int) -> BivectorBasis:
    if int(n) != n or n < 2:
        raise DomainError(f"wedge basis needs n >= 2, got {n}")
    n = int(n)
    pairs = tuple(combinations(range(n), 2))
    return BivectorBasis(n=n, pairs=pairs, m=len(pairs))


@lru_cache(maxsize=None)
def _pair_index(n: int) -> np.ndarray:
    idx = -np.ones((n, n), dtype=int)
    for a, (i, j) in enumerate(combinations(range(n), 2)):
        idx[i, j] = a
    return idx


@lru_cache(maxsize=None)
def _sign_tensor(n: int) -> np.ndarray:
    """``S[i, j, a]``: coefficient of basis bivector a in ``e_i ^ e_j``."""
    basis = wedge_basis(n)
    s = np.zeros((n, n, basis.m))
    for a, (i, j) in enumerate(basis.pairs):
        s[i, j, a] = 1.0
        s[j, i, a] = -1.0
    s.setflags(write=False)
    return s


@lru_cache(maxsize=None)
def _triu(n: int):
    return np.triu_indices(n, 1)


def wedge(x, y) -> np.ndarray:
    """Coordinates of ``x ^ y`` (batched over leading axes)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    iu, ju = _triu(x.shape[-1])
    return x[..., iu] * y[..., ju] - x[..., ju] * y[..., iu]


def lambda2(a: np.ndarray) -> np.ndarray:
    """Matrix of ``A ^ A`` on bivectors: columns are ``A e_i ^ A e_j``."""
    a = np.asarray(a, dtype=float)
    iu, ju = _triu(a.shape[-1])
    return (
        a[..., iu[:, None], iu[None, :]] * a[..., ju[:, None], ju[None, :]]
        - a[..., iu[:, None], ju[None, :]] * a[..., ju[:, None], iu[None, :]]
    )


@dataclass(frozen=True)
class BlockLayout:
    """Coordinate split ``R^flat x (radial) x (sphere)``, in that order."""

    n: int
    flat: int
    radial: int
    sphere: int

    def __post_init__(self):
        if min(self.flat, self.radial, self.sphere) < 0:
            raise DomainError("block sizes must be non-negative")
        if self.radial not in (0, 1):
            raise DomainError("radial block has size 0 or 1")
        if self.flat + self.radial + self.sphere != self.n:
            raise DomainError("block sizes must sum to n")

    @classmethod
    def warped(cls, n: int, q: int) -> "BlockLayout":
        """Layout of ``R^{n-q} x (0, delta) x S^{q-1}``."""
        if not 1 <= q <= n:
            raise DomainError(f"need 1 <= q <= n, got q={q}, n={n}")
        return cls(n=n, flat=n - q, radial=1, sphere=q - 1)

    @property
    def radial_index(self) -> int:
        if self.radial != 1:
            raise DomainError("layout has no radial direction")
        return self.flat

    @property
    def sphere_indices(self) -> range:
        return range(self.flat + self.radial, self.n)


# ----------------------------------------------------------------------------
# operators and frames


class CurvOp:
    """Self-adjoint endomorphism of the bivector space (immutable)."""

    __slots__ = ("n", "mat", "asymmetry", "_tensor")

    def __init__(self, n: int, mat, *, tol: float = SYMMETRY_TOL):
        basis = wedge_basis(n)
        mat = np.array(mat, dtype=float)
        if mat.shape != (basis.m, basis.m):
            raise DomainError(f"matrix must be {basis.m}x{basis.m} for n={n}, got {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise DomainError("matrix has non-finite entries")
        asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
        if asym > tol * max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0):
            raise DomainError(f"matrix is not symmetric (defect {asym:.3e})")
        sym = 0.5 * (mat + mat.T)
        sym.setflags(write=False)
        self.n = int(n)
        self.mat = sym
        self.asymmetry = asym
        self._tensor = None

    # algebra -----------------------------------------------------------
    def __add__(self, other: "CurvOp") -> "CurvOp":
        _check_same_n(self, other)
        return CurvOp(self.n, self.mat + other.mat)

    def __sub__(self, other: "CurvOp") -> "CurvOp":
        _check_same_n(self, other)
        return CurvOp(self.n, self.mat - other.mat)

    def __mul__(self, c: float) -> "CurvOp":
        return CurvOp(self.n, float(c) * self.mat)

    __rmul__ = __mul__

    def __neg__(self) -> "CurvOp":
        return CurvOp(self.n, -self.mat)

    def norm(self) -> float:
        return float(np.linalg.norm(self.mat))

    def allclose(self, other: "CurvOp", atol: float = 1e-12) -> bool:
        return self.n == other.n and bool(np.allclose(self.mat, other.mat, rtol=0, atol=atol))

    def tensor(self) -> np.ndarray:
        """Full tensor ``T[i, j, k, l] = <R(e_i ^ e_j), e_k ^ e_l>``."""
        if self._tensor is None:
            s = _sign_tensor(self.n)
            t = np.einsum("ija,ab,klb->ijkl", s, self.mat, s, optimize=True)
            t.setflags(write=False)
            self._tensor = t
        return self._tensor

    # io ----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"n": self.n, "basis": "lex", "matrix": self.mat.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "CurvOp":
        if not isinstance(doc, dict) or "n" not in doc or "matrix" not in doc:
            raise DomainError("operator document needs keys 'n' and 'matrix'")
        if doc.get("basis", "lex") != "lex":
            raise DomainError(f"unsupported basis {doc.get('basis')!r}")
        return cls(int(doc["n"]), doc["matrix"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CurvOp":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"CurvOp(n={self.n}, trace={np.trace(self.mat):.6g})"


def _check_same_n(a: CurvOp, b: CurvOp) -> None:
    if a.n != b.n:
        raise DomainError(f"dimension mismatch: {a.n} vs {b.n}")


@dataclass(frozen=True)
class Frame:
    """Orthonormal k-frame in R^n, stored as the columns of ``vecs``."""

    n: int
    vecs: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vecs, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.n:
            raise DomainError(f"frame vectors must have length {self.n}")
        gram = v.T @ v
        if v.shape[1] and np.max(np.abs(gram - np.eye(v.shape[1]))) > ORTHONORMAL_TOL:
            raise DomainError("frame is not orthonormal")
        v.setflags(write=False)
        object.__setattr__(self, "vecs", v)

    @property
    def k(self) -> int:
        return self.vecs.shape[1]

    @classmethod
    def from_vectors(cls, vectors) -> "Frame":
        """Frame from a list of row vectors (must already be orthonormal)."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        return cls(v.shape[1], v.T)

    @classmethod
    def span(cls, vectors) -> "Frame":
        """Orthonormalise (QR) the given row vectors."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float)).T
        q, r = np.linalg.qr(v)
        if np.min(np.abs(np.diag(r))) < 1e-12:
            raise DomainError("vectors are linearly dependent")
        return cls(v.shape[0], q * np.sign(np.diag(r)))

    def complement(self) -> "Frame":
        return Frame(self.n, complement_basis(self.vecs))

    def to_dict(self) -> dict:
        return {"n": self.n, "vectors": self.vecs.T.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Frame":
        return cls.from_vectors(doc["vectors"]) if doc["vectors"] else cls(doc["n"], np.zeros((doc["n"], 0)))


def complement_basis(q: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(q)."""
    n, k = q.shape
    if k == 0:
        return np.eye(n)
    u, _, _ = np.linalg.svd(q, full_matrices=True)
    return u[:, k:]


def random_frames(n: int, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Haar-distributed orthonormal k-frames, shape (count, n, k)."""
    g = rng.standard_normal((count, n, k))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    return random_frames(n, n, 1, rng)[0]


# ----------------------------------------------------------------------------
# constructors


def identity(n: int) -> CurvOp:
    return CurvOp(n, np.eye(wedge_basis(n).m))


def zero(n: int) -> CurvOp:
    return CurvOp(n, np.zeros((wedge_basis(n).m,) * 2))


def _projection(n: int, mask_pairs) -> CurvOp:
    basis = wedge_basis(n)
    diag = np.array([1.0 if mask_pairs(i, j) else 0.0 for i, j in basis.pairs])
    return CurvOp(n, np.diag(diag))


def model_operator(n: int, q: int) -> CurvOp:
    """Curvature operator of ``R^{n-q} x S^q`` (unit sphere in the last q slots)."""
    wedge_basis(n)
    if not 0 <= q <= n:
        raise DomainError(f"need 0 <= q <= n, got q={q}, n={n}")
    first = n - q
    return _projection(n, lambda i, j: i >= first and j >= first)


def l_operator(n: int, layout: BlockLayout) -> CurvOp:
    """Projection onto the bivectors ``radial ^ sphere``."""
    if layout.n != n:
        raise DomainError("layout dimension does not match n")
    if layout.radial != 1:
        raise DomainError("L needs a radial direction in the layout")
    if layout.sphere < 1:
        raise DomainError("L needs at least one sphere direction")
    r = layout.radial_index
    sph = set(layout.sphere_indices)
    return _projection(n, lambda i, j: (i == r and j in sph) or (j == r and i in sph))


def from_jacobi_symmetric(h: np.ndarray) -> CurvOp:
    """``h ^ h`` for a symmetric matrix h; always satisfies the Bianchi identity."""
    h = np.asarray(h, dtype=float)
    return CurvOp(h.shape[0], lambda2(0.5 * (h + h.T)))


def random_curvature_operator(n: int, rng: np.random.Generator, terms: int = 3) -> CurvOp:
    """Random operator with zero Bianchi defect (signed sum of ``h ^ h`` terms)."""
    m = wedge_basis(n).m
    mat = np.zeros((m, m))
    for _ in range(terms):
        h = rng.standard_normal((n, n))
        mat += rng.choice([-1.0, 1.0]) * lambda2(0.5 * (h + h.T))
    return CurvOp(n, mat)


def bianchi_project(R: CurvOp) -> CurvOp:
    """Orthogonal projection onto operators with zero Bianchi defect."""
    return CurvOp(R.n, bianchi_project_mats(R.mat[None], R.n)[0])


def bianchi_project_mats(mats: np.ndarray, n: int) -> np.ndarray:
    """Batched :func:`bianchi_project` on a stack of symmetric matrices."""
    s = _sign_tensor(n)
    t = np.einsum("ija,rab,klb->rijkl", s, mats, s, optimize=True)
    alt = (t + np.einsum("riklj->rijkl", t) + np.einsum("riljk->rijkl", t)) / 3.0
    return mats - np.einsum("rijkl,ija,klb->rab", alt, s, s, optimize=True) / 4.0


def span_projector(q: np.ndarray) -> np.ndarray:
    """Projection onto the bivectors of span(q), batched over leading axes."""
    return lambda2(q @ np.swapaxes(q, -1, -2))


def from_tensor(n: int, t: np.ndarray) -> CurvOp:
    s = _sign_tensor(n)
    return CurvOp(n, np.einsum("ijkl,ija,klb->ab", t, s, s) / 4.0)


# ----------------------------------------------------------------------------
# functionals


def _vec(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DomainError(f"{name} must be a vector of length {n}, got shape {x.shape}")
    return x


def apply_endo(R: CurvOp, x, y, z) -> np.ndarray:
    """``R(x, y) z``."""
    x, y, z = _vec(x, R.n, "x"), _vec(y, R.n, "y"), _vec(z, R.n, "z")
    return np.einsum("ijlk,i,j,k->l", R.tensor(), x, y, z)


def _as_frame(E, n: int, k: int | None = None) -> np.ndarray:
    v = E.vecs if isinstance(E, Frame) else Frame(n, np.asarray(E, dtype=float)).vecs
    if v.shape[0] != n:
        raise DomainError(f"frame lives in R^{v.shape[0]}, operator in R^{n}")
    if k is not None and v.shape[1] != k:
        raise DomainError(f"expected a {k}-frame, got {v.shape[1]} vectors")
    return v


def sec(R: CurvOp, E) -> float:
    """Sectional curvature of the plane spanned by an orthonormal 2-frame."""
    v = _as_frame(E, R.n, 2)
    w = wedge(v[:, 0], v[:, 1])
    return float(w @ R.mat @ w)


def ricci_matrix(R: CurvOp) -> np.ndarray:
    ric = np.einsum("ijil->jl", R.tensor())
    return 0.5 * (ric + ric.T)


def ric(R: CurvOp, z) -> float:
    z = _vec(z, R.n, "z")
    if abs(float(z @ z) - 1.0) > ORTHONORMAL_TOL:
        raise DomainError("ric needs a unit vector")
    return float(z @ ricci_matrix(R) @ z)


def scal(R: CurvOp) -> float:
    return 2.0 * float(np.trace(R.mat))


def frame_functional(R: CurvOp, q: np.ndarray) -> float:
    """``sum_{a != b} sec(q_a, q_b)`` over the columns of an orthonormal frame."""
    return float(np.einsum("ijkl,ia,jb,ka,lb->", R.tensor(), q, q, q, q, optimize=True))


def p_curvature(R: CurvOp, P) -> float:
    """``s_p(P)``: sum of sec(E_i, E_j), i != j, over an orthonormal basis of P-perp."""
    v = _as_frame(P, R.n)
    p = v.shape[1]
    if not 0 <= p <= R.n - 2:
        raise DomainError(f"p must satisfy 0 <= p <= n-2, got p={p}")
    return frame_functional(R, complement_basis(v))


def act(A, R: CurvOp) -> CurvOp:
    """O(n) action ``(A ^ A)^{-1} R (A ^ A)``."""
    A = np.asarray(A, dtype=float)
    if A.shape != (R.n, R.n):
        raise DomainError(f"A must be {R.n}x{R.n}")
    if np.max(np.abs(A.T @ A - np.eye(R.n))) > ORTHONORMAL_TOL:
        raise DomainError("A is not orthogonal")
    l2 = lambda2(A)
    return CurvOp(R.n, l2.T @ R.mat @ l2)


def bianchi_defect(R: CurvOp) -> float:
    """max over basis triples of ``|R(e_i,e_j)e_k + R(e_j,e_k)e_i + R(e_k,e_i)e_j|``."""
    t = R.tensor()
    cyc = (
        np.einsum("ijlk->ijkl", t)
        + np.einsum("jkli->ijkl", t)
        + np.einsum("kilj->ijkl", t)
    )
    return float(np.max(np.linalg.norm(cyc, axis=-1)))
