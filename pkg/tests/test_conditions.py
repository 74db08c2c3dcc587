import math

import numpy as np
import pytest
from scipy.optimize import minimize
from hypothesis import given, settings, strategies as st

from curvlab import conditions as cd
from curvlab import curvature_algebra as ca
from curvlab.curvature_algebra import CurvOp, DomainError

FAST = cd.Budget(restarts=16, iterations=120)


def test_psc_identity_in():
    mem = cd.builtin("psc", 4).membership(ca.identity(4))
    assert mem.inside and mem.margin == pytest.approx(12)


def test_k_pos_ric_on_boundary():
    mem = cd.builtin("k_pos_ric", 7, {"k": 3}).membership(ca.model_operator(7, 4))
    assert not mem.inside
    assert mem.margin == pytest.approx(0.0, abs=1e-14)
    vals = np.linalg.eigvalsh(ca.ricci_matrix(ca.model_operator(7, 4)))
    np.testing.assert_allclose(vals, [0, 0, 0, 3, 3, 3, 3], atol=1e-14)


def test_sec_pos_out_on_model():
    mem = cd.builtin("sec_pos", 5).membership(ca.model_operator(5, 3))
    assert not mem.inside
    assert mem.margin == pytest.approx(0.0, abs=1e-8)
    # the witness is a plane with zero curvature
    assert ca.sec(ca.model_operator(5, 3), mem.witness) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_sec_pos_identity(n):
    assert cd.min_functional(cd.builtin("sec_pos", n), ca.identity(n))[0] == pytest.approx(1.0, abs=1e-10)


def test_p_curv_sphere_line():
    C = cd.builtin("p_curv", 7, {"p": 1})
    value, witness = cd.min_functional(C, ca.model_operator(7, 4))
    assert value == pytest.approx(6.0, abs=1e-8)
    # the minimizing line sits in the sphere block
    assert np.linalg.norm(witness.vecs[:3, 0]) == pytest.approx(0.0, abs=1e-4)


def test_p_curv_optimizer_beats_sampling(rng):
    C = cd.builtin("p_curv", 6, {"p": 2})
    R = ca.random_curvature_operator(6, rng)
    opt, witness = cd.min_functional(C, R)
    brute, _ = cd.min_functional(C, R, mode="brute", samples=20_000)
    assert opt <= brute + 1e-9
    # the witness is a genuine 2-plane attaining the reported value
    assert ca.p_curvature(R, witness) == pytest.approx(opt, abs=1e-9)


def test_p_curv_line_closed_form_matches_search(rng):
    R = ca.random_curvature_operator(6, rng)
    C = cd.builtin("p_curv", 6, {"p": 1})
    closed, _ = cd.min_functional(C, R)
    searched, _ = cd.minimize_frame_functional("pcurv", R, 1, cd.Budget(), 0, mode="brute", samples=50_000)
    assert closed <= searched + 1e-9


def test_k_pos_ric_against_sampled_frames(rng):
    n, k = 5, 2
    C = cd.builtin("k_pos_ric", n, {"k": k})
    R = ca.random_curvature_operator(n, rng)
    ric = ca.ricci_matrix(R)
    frames = ca.random_frames(n, k, 100_000, rng)
    sums = np.einsum("fia,ij,fja->f", frames, ric, frames)
    assert sums.min() >= C.margin(R) - 1e-12

    def frame_sum(x):
        q, _ = np.linalg.qr(x.reshape(n, k))
        return float(np.trace(q.T @ ric @ q))

    polished = minimize(frame_sum, frames[np.argmin(sums)].ravel(), method="BFGS", options={"gtol": 1e-12})
    assert polished.fun == pytest.approx(C.margin(R), abs=1e-6)


def test_builtin_errors():
    with pytest.raises(DomainError):
        cd.builtin("nope", 4)
    with pytest.raises(DomainError):
        cd.builtin("p_curv", 4, {"p": 3})
    with pytest.raises(DomainError):
        cd.builtin("k_pos_ric", 4, {"k": 5})
    with pytest.raises(DomainError):
        cd.builtin("ric_lt", 4)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        cd.builtin("psc", 5).margin(ca.identity(4))


def test_condition_json_round_trip():
    C = cd.builtin("k_pos_ric", 6, {"k": 4})
    D = cd.Condition.from_json(C.to_json())
    assert (D.name, D.n, D.params, D.claimed_codim) == (C.name, C.n, C.params, C.claimed_codim)


# cone radius --------------------------------------------------------------------


def test_psc_cone_radius_exact():
    cert = cd.cone_radius(cd.builtin("psc", 5), ca.model_operator(5, 3))
    assert cert.exact
    assert cert.radius == pytest.approx(6 / (2 * math.sqrt(10)), abs=1e-10)
    assert cert.sampled_radius <= cert.radius + 1e-12


def test_psc_cone_radius_flat_model():
    # the flat model is the zero operator: scal = 0, so no ball fits
    with pytest.raises(DomainError):
        cd.cone_radius(cd.builtin("psc", 5), ca.model_operator(5, 1))
    assert cd.builtin("psc", 5).margin(ca.model_operator(5, 1)) == 0.0


def test_cone_radius_zero_outside():
    cert = cd.cone_radius(cd.builtin("psc", 5), ca.model_operator(5, 1) - ca.identity(5))
    assert cert.radius == 0.0 and not cert.certified


def test_k_pos_ric_cone_radius_sampled_below_exact():
    C = cd.builtin("k_pos_ric", 6, {"k": 3})
    cert = cd.cone_radius(C, ca.model_operator(6, 4), directions=128)
    assert cert.exact and cert.certified
    assert cert.sampled_radius <= cert.radius + 1e-12


def test_sampled_refutation_on_boundary():
    ref = cd.sampled_refutation(cd.builtin("psc", 6), ca.model_operator(6, 1), directions=64)
    assert ref.refuted
    assert 0.0 < ref.exit_fraction < 1.0


# inner ray and deformability --------------------------------------------------------


def test_inner_ray_psc_identity():
    assert cd.inner_ray_check(cd.builtin("psc", 5), ca.identity(5), lam_max=1e3).passed


def test_inner_ray_p_curv():
    C = cd.builtin("p_curv", 7, {"p": 1}, budget=FAST)
    R = ca.model_operator(7, 4) + 0.05 * ca.identity(7)
    assert cd.inner_ray_check(C, R, lam_max=1e3, steps=6, q=4).passed


def test_inner_ray_scal_lt_fails():
    C = cd.builtin("scal_lt", 5, {"beta": 30.0})
    rep = cd.inner_ray_check(C, ca.identity(5), lam_max=1e3)
    assert not rep.passed and math.isfinite(rep.first_fail)


def test_deformability_psc():
    rep = cd.deformability_check(cd.builtin("psc", 6))
    assert rep.passed and rep.codim == 3


def test_deformability_p_curv():
    C = cd.builtin("p_curv", 7, {"p": 1}, budget=FAST)
    assert cd.deformability_check(C, members=1, lam_steps=4).passed


def test_deformability_sec_pos_fails():
    rep = cd.deformability_check(cd.builtin("sec_pos", 5, budget=FAST), members=0, lam_steps=3)
    assert not rep.passed and not rep.model_scaling


# stability scans --------------------------------------------------------------------


def test_scan_psc_n6():
    res = cd.surgery_codim_scan(cd.builtin("psc", 6), directions=64)
    assert res.codim == 3 and res.monotone and res.refutation.refuted


@pytest.mark.parametrize("k, expected", [(2, 7), (5, 4), (7, 3)])
def test_scan_k_pos_ric(k, expected):
    res = cd.surgery_codim_scan(cd.builtin("k_pos_ric", 7, {"k": k}), directions=64)
    assert res.codim == expected and res.monotone


def test_lambda_threshold_cone():
    assert cd.lambda_threshold(cd.builtin("psc", 5), 3).lower == 0.0
    assert cd.lambda_threshold(cd.builtin("k_pos_ric", 5, {"k": 4}), 2).lower == 0.0


def test_lambda_threshold_ceiling():
    th = cd.lambda_threshold(cd.builtin("scal_lt", 5, {"beta": 12.0}), 3)
    assert not th.cone
    assert th.upper == pytest.approx(2.0, rel=1e-6)  # scal(lam model(5,3)) = 6 lam


# properties ---------------------------------------------------------------------------

EXACT = [("psc", {}), ("k_pos_ric", {"k": 3}), ("ric_lt", {"alpha": 2.0}), ("scal_lt", {"beta": 5.0})]


@given(n=st.integers(4, 7), which=st.sampled_from(EXACT), seed=st.integers(0, 2**32 - 1))
def test_exact_margin_invariance(n, which, seed):
    rng = np.random.default_rng(seed)
    C = cd.builtin(which[0], n, which[1])
    R = ca.random_curvature_operator(n, rng)
    A = ca.random_orthogonal(n, rng)
    assert C.margin(ca.act(A, R)) == pytest.approx(C.margin(R), abs=1e-8)


@settings(max_examples=5)
@given(seed=st.integers(0, 2**32 - 1))
def test_search_margin_invariance(seed):
    rng = np.random.default_rng(seed)
    C = cd.builtin("p_curv", 5, {"p": 1})
    R = ca.random_curvature_operator(5, rng)
    A = ca.random_orthogonal(5, rng)
    assert C.margin(ca.act(A, R)) == pytest.approx(C.margin(R), abs=1e-3)


def _member(C, rng):
    n = C.n
    for _ in range(200):
        R = ca.model_operator(n, n) + 0.3 * CurvOp(n, cd.random_directions(n, 1, rng)[0])
        if C.contains(R):
            return R
    raise AssertionError("no member found")


@settings(max_examples=10)
@given(which=st.sampled_from([("psc", {}), ("p_curv", {"p": 1}), ("k_pos_ric", {"k": 2})]),
       seed=st.integers(0, 2**32 - 1))
def test_cone_closure(which, seed):
    rng = np.random.default_rng(seed)
    C = cd.builtin(which[0], 5, which[1], budget=FAST)
    a, b = _member(C, rng), _member(C, rng)
    s, t = rng.uniform(0.01, 10, 2)
    assert C.contains(s * a + t * b)


@settings(max_examples=10)
@given(seed=st.integers(0, 2**32 - 1))
def test_nesting_chains(seed):
    rng = np.random.default_rng(seed)
    n = 6
    R = ca.random_curvature_operator(n, rng) + 1.5 * ca.identity(n)
    for k in range(1, n):
        if cd.builtin("k_pos_ric", n, {"k": k}).contains(R):
            assert cd.builtin("k_pos_ric", n, {"k": k + 1}).contains(R)
    for p in range(0, 3):
        if cd.builtin("p_curv", n, {"p": p + 1}, budget=FAST).contains(R):
            assert cd.builtin("p_curv", n, {"p": p}, budget=FAST).contains(R)
