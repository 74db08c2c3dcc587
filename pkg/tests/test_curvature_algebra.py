import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvlab import curvature_algebra as ca
from curvlab.curvature_algebra import CurvOp, DomainError, Frame


def e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def swap_operator():
    """R(e1^e2) = e3^e4 and back, zero elsewhere (n = 4)."""
    b = ca.wedge_basis(4)
    m = np.zeros((6, 6))
    i, j = b.index(0, 1), b.index(2, 3)
    m[i, j] = m[j, i] = 1.0
    return CurvOp(4, m)


# basis ----------------------------------------------------------------------


@pytest.mark.parametrize("n, m", [(2, 1), (4, 6), (10, 45)])
def test_wedge_dimension(n, m):
    assert ca.wedge_basis(n).m == m


def test_wedge_basis_rejects_small_n():
    with pytest.raises(DomainError):
        ca.wedge_basis(1)


def test_wedge_basis_is_lexicographic():
    assert ca.wedge_basis(4).pairs == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


# apply_endo -----------------------------------------------------------------


def test_apply_endo_identity():
    R = ca.identity(4)
    np.testing.assert_allclose(ca.apply_endo(R, e(4, 0), e(4, 1), e(4, 1)), e(4, 0), atol=1e-15)


def test_apply_endo_zero():
    rng = np.random.default_rng(0)
    x, y, z = rng.standard_normal((3, 5))
    assert np.all(ca.apply_endo(ca.zero(5), x, y, z) == 0)


def test_apply_endo_swap():
    out = ca.apply_endo(swap_operator(), e(4, 0), e(4, 1), e(4, 2))
    np.testing.assert_allclose(out, -e(4, 3), atol=1e-15)


def test_apply_endo_dimension_mismatch():
    with pytest.raises(DomainError):
        ca.apply_endo(ca.identity(4), np.ones(3), e(4, 0), e(4, 1))


def test_apply_endo_antisymmetric_and_linear(rng):
    R = ca.random_curvature_operator(5, rng)
    x, y, z, w = rng.standard_normal((4, 5))
    a = ca.apply_endo(R, x, y, z)
    np.testing.assert_allclose(ca.apply_endo(R, y, x, z), -a, atol=1e-12)
    lin = ca.apply_endo(R, x, y, 2.0 * z + w)
    np.testing.assert_allclose(lin, 2.0 * a + ca.apply_endo(R, x, y, w), atol=1e-12)


# sec / ric / scal -----------------------------------------------------------


def test_sec_identity_any_plane(rng):
    for _ in range(10):
        q = ca.random_frames(4, 2, 1, rng)[0]
        assert ca.sec(ca.identity(4), q) == pytest.approx(1.0, abs=1e-14)


def test_sec_zero():
    assert ca.sec(ca.zero(4), np.eye(4)[:, :2]) == 0.0


def test_sec_model_blocks():
    R = ca.model_operator(5, 3)
    assert ca.sec(R, np.eye(5)[:, [3, 4]]) == pytest.approx(1.0)
    assert ca.sec(R, np.eye(5)[:, [0, 4]]) == pytest.approx(0.0, abs=1e-15)


def test_sec_basis_independent(rng):
    R = ca.random_curvature_operator(6, rng)
    q = ca.random_frames(6, 2, 1, rng)[0]
    a = rng.uniform(0, 2 * math.pi)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    assert ca.sec(R, q @ rot) == pytest.approx(ca.sec(R, q), abs=1e-12)


def test_sec_rejects_non_orthonormal():
    with pytest.raises(DomainError):
        ca.sec(ca.identity(4), np.array([[1.0, 1.0], [0, 1.0], [0, 0], [0, 0]]))


def test_ricci_identity():
    np.testing.assert_allclose(ca.ricci_matrix(ca.identity(4)), 3 * np.eye(4), atol=1e-14)


def test_ricci_model_eigenvalues():
    vals = np.linalg.eigvalsh(ca.ricci_matrix(ca.model_operator(5, 3)))
    np.testing.assert_allclose(vals, [0, 0, 2, 2, 2], atol=1e-14)


def test_ricci_zero():
    assert np.all(ca.ricci_matrix(ca.zero(5)) == 0)


def test_ric_needs_unit_vector():
    with pytest.raises(DomainError):
        ca.ric(ca.identity(4), np.array([1.0, 1.0, 0, 0]))


def test_ric_quadratic_form(rng):
    R = ca.random_curvature_operator(5, rng)
    z = rng.standard_normal(5)
    z /= np.linalg.norm(z)
    assert ca.ric(R, z) == pytest.approx(z @ ca.ricci_matrix(R) @ z)


@pytest.mark.parametrize("n, q, expected", [(4, 4, 12), (5, 3, 6), (7, 4, 12), (6, 1, 0)])
def test_scal_values(n, q, expected):
    assert ca.scal(ca.model_operator(n, q)) == pytest.approx(expected, abs=1e-13)


def test_scal_double_sum(rng):
    R = ca.random_curvature_operator(5, rng)
    t = R.tensor()
    double = sum(t[i, j, i, j] for i in range(5) for j in range(5))
    assert ca.scal(R) == pytest.approx(double, rel=1e-12)


# p-curvature ----------------------------------------------------------------


def test_p_curvature_zero_planes_is_scal():
    assert ca.p_curvature(ca.identity(5), np.zeros((5, 0))) == pytest.approx(20)


def test_p_curvature_identity_any_line(rng):
    for _ in range(5):
        v = ca.random_frames(5, 1, 1, rng)[0]
        assert ca.p_curvature(ca.identity(5), v) == pytest.approx(12)


def test_p_curvature_sphere_line():
    assert ca.p_curvature(ca.model_operator(7, 4), e(7, 6)[:, None]) == pytest.approx(6)


def test_p_curvature_depends_on_span_only(rng):
    R = ca.random_curvature_operator(6, rng)
    q = ca.random_frames(6, 2, 1, rng)[0]
    mix = ca.random_orthogonal(2, rng)
    assert ca.p_curvature(R, q @ mix) == pytest.approx(ca.p_curvature(R, q), abs=1e-12)


def test_p_curvature_range():
    with pytest.raises(DomainError):
        ca.p_curvature(ca.identity(4), np.eye(4)[:, :3])


# group action ---------------------------------------------------------------


def test_act_identity_matrix(rng):
    R = ca.random_curvature_operator(5, rng)
    assert ca.act(np.eye(5), R).allclose(R)


def test_act_permutation_moves_block():
    A = np.eye(5)[:, [3, 4, 0, 1, 2]]  # A e_0 = e_3, A e_1 = e_4, A e_2 = e_0, ...
    moved = ca.act(A, ca.model_operator(5, 3))
    b = ca.wedge_basis(5)
    # e_i ^ e_j lands in the sphere block {2, 3, 4} iff i, j both map there
    lands = [int(A[:, i].argmax() >= 2 and A[:, j].argmax() >= 2) for i, j in b.pairs]
    np.testing.assert_allclose(moved.mat, np.diag(lands), atol=1e-15)
    assert sum(lands) == 3


def test_act_scal_invariant(rng):
    R = ca.random_curvature_operator(5, rng)
    for _ in range(100):
        A = ca.random_orthogonal(5, rng)
        assert ca.scal(ca.act(A, R)) == pytest.approx(ca.scal(R), abs=1e-10)


def test_act_rejects_non_orthogonal():
    with pytest.raises(DomainError):
        ca.act(2 * np.eye(4), ca.identity(4))


def test_act_sec_equivariance(rng):
    R = ca.random_curvature_operator(5, rng)
    A = ca.random_orthogonal(5, rng)
    E = ca.random_frames(5, 2, 1, rng)[0]
    assert ca.sec(ca.act(A, R), E) == pytest.approx(ca.sec(R, A @ E), abs=1e-12)


# Bianchi --------------------------------------------------------------------


@pytest.mark.parametrize("n, q", [(4, 4), (5, 3), (7, 2), (6, 1)])
def test_bianchi_models(n, q):
    assert ca.bianchi_defect(ca.model_operator(n, q)) <= 1e-14


def test_bianchi_swap():
    assert ca.bianchi_defect(swap_operator()) == pytest.approx(1.0)


def test_bianchi_projection_is_clean(rng):
    m = rng.standard_normal((10, 10))
    R = ca.bianchi_project(CurvOp(5, m + m.T))
    assert ca.bianchi_defect(R) <= 1e-10


# model and L ----------------------------------------------------------------


def test_model_full_is_identity():
    assert ca.model_operator(5, 5).allclose(ca.identity(5))


def test_model_q1_is_zero():
    assert ca.model_operator(5, 1).norm() == 0.0


def test_model_range():
    with pytest.raises(DomainError):
        ca.model_operator(4, 5)


def test_l_operator_rank_trace():
    L = ca.l_operator(3, ca.BlockLayout.warped(3, 3))
    assert np.trace(L.mat) == pytest.approx(2)
    assert np.linalg.matrix_rank(L.mat) == 2
    np.testing.assert_allclose(L.mat @ L.mat, L.mat, atol=1e-15)


def test_l_operator_needs_radial():
    with pytest.raises(DomainError):
        ca.l_operator(4, ca.BlockLayout(4, 2, 0, 2))


@pytest.mark.parametrize("q", [3, 4, 5])
def test_model_splits_into_smaller_model_plus_l(q):
    n = 6
    lhs = ca.model_operator(n, q)
    rhs = ca.model_operator(n, q - 1) + ca.l_operator(n, ca.BlockLayout.warped(n, q))
    assert np.max(np.abs(lhs.mat - rhs.mat)) <= 1e-14


# io ---------------------------------------------------------------------------


def test_json_round_trip(rng):
    R = ca.random_curvature_operator(4, rng)
    assert CurvOp.from_json(R.to_json()).allclose(R, atol=0)


def test_curvop_rejects_asymmetric():
    m = np.zeros((6, 6))
    m[0, 1] = 1.0
    with pytest.raises(DomainError):
        CurvOp(4, m)


def test_frame_rejects_non_orthonormal():
    with pytest.raises(DomainError):
        Frame(3, np.array([[1.0, 0.5], [0, 1], [0, 0]]))


# properties -------------------------------------------------------------------


@given(n=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_matrix_shortcuts_agree_with_endomorphism(n, seed):
    rng = np.random.default_rng(seed)
    R = ca.random_curvature_operator(n, rng)
    E = ca.random_frames(n, n, 1, rng)[0]
    # sec from apply_endo: <R(x, y) y, x>
    secs = np.array([[E[:, i] @ ca.apply_endo(R, E[:, i], E[:, j], E[:, j]) if i != j else 0.0
                      for j in range(n)] for i in range(n)])
    assert secs[0, 1] == pytest.approx(ca.sec(R, E[:, :2]), abs=1e-10)
    ric = secs.sum(axis=1)
    assert ric[0] == pytest.approx(ca.ric(R, E[:, 0]), abs=1e-10)
    assert secs.sum() == pytest.approx(ca.scal(R), abs=1e-10)
    if n >= 3:
        assert secs[1:, 1:].sum() == pytest.approx(ca.p_curvature(R, E[:, :1]), abs=1e-10)


@given(n=st.integers(2, 7), seed=st.integers(0, 2**32 - 1))
def test_sec_invariance_under_action(n, seed):
    rng = np.random.default_rng(seed)
    R = ca.random_curvature_operator(n, rng)
    A = ca.random_orthogonal(n, rng)
    AR = ca.act(A, R)
    assert np.linalg.eigvalsh(ca.ricci_matrix(AR)) == pytest.approx(
        np.linalg.eigvalsh(ca.ricci_matrix(R)), abs=1e-10)
