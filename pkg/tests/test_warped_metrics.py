import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvlab import conditions as cd
from curvlab import curvature_algebra as ca
from curvlab import warped_metrics as wm
from curvlab.curvature_algebra import DomainError


def test_torpedo_values():
    b = wm.TorpedoProfile(1.0, 2.0)
    assert b(math.pi / 4) == pytest.approx(math.sin(math.pi / 4), abs=1e-15)
    assert b(1.9) == 1.0
    j = b.jet(np.array([0.0]), 1)
    assert j[0, 0] == 0.0 and j[1, 0] == 1.0


def test_torpedo_rejects_short_interval():
    with pytest.raises(DomainError):
        wm.TorpedoProfile(1.0, 1.5)


def test_profile_json_round_trip():
    b = wm.TorpedoProfile(0.7, 2.0, "mollified")
    c = wm.profile_from_dict(b.to_dict())
    r = np.linspace(0, 2, 33)
    np.testing.assert_array_equal(b(r), c(r))


def test_coefficients_on_cap_are_round():
    b = wm.TorpedoProfile(1.0, 2.0)
    lam, mu = wm.warped_coefficients(b, np.array([math.pi / 4]))
    assert lam[0] == pytest.approx(1.0, abs=1e-14)
    assert mu[0] == pytest.approx(1.0, abs=1e-14)
    R = wm.warped_curvature(b, math.pi / 4, 6, 3).op
    assert R.allclose(ca.model_operator(6, 3), atol=1e-14)


def test_coefficients_on_cylinder():
    w = wm.warped_curvature(wm.TorpedoProfile(1.0, 2.0), 1.9, 6, 3)
    assert (w.lam, w.mu_l) == (1.0, 0.0)
    assert w.op.allclose(ca.model_operator(6, 2), atol=0)


def test_flat_profile_is_flat():
    w = wm.warped_curvature(wm.LinearProfile(1.0), 0.5, 5, 3)
    assert w.lam == 0.0 and w.mu_l == 0.0 and w.op.norm() == 0.0


def test_limit_at_centre():
    lam, mu = wm.warped_coefficients(wm.TorpedoProfile(0.5, 2.0), np.array([0.0]))
    assert lam[0] == pytest.approx(4.0) and mu[0] == pytest.approx(4.0)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("n, q", [(6, 3), (7, 5), (8, 8)])
def test_cap_roundness(mu, n, q):
    b = wm.TorpedoProfile(mu, mu * 2.0)
    r = np.linspace(0.0, mu * math.pi / 2, 257)[:-1]
    mats = wm.warped_curvature_mats(b, r, n, q)
    err = np.linalg.norm(mats - ca.model_operator(n, q).mat / mu**2, axis=(1, 2))
    assert err.max() <= 1e-8


# concavity ----------------------------------------------------------------------


def test_concavity_torpedo():
    assert wm.concavity_check(wm.TorpedoProfile(1.0, 2.0)).passed


def test_concavity_linear_boundary_case():
    rep = wm.concavity_check(wm.LinearProfile(1.0))
    assert rep.passed and rep.min_defect == 0.0


def test_concavity_failure_witness():
    b = wm.FunctionProfile(1.4, [lambda r: np.sin(r) + 0.2 * r**2,
                                 lambda r: np.cos(r) + 0.4 * r,
                                 lambda r: -np.sin(r) + 0.4])
    rep = wm.concavity_check(b)
    assert not rep.passed
    # beta'' = 0.4 - sin r > 0 below arcsin(0.4), and beta' > 1 somewhere there as well
    assert rep.witness_r <= math.asin(0.4) + 1e-3


def test_expression_profile():
    b = wm.ExpressionProfile("sin(r)", 1.0)
    assert b(0.5) == pytest.approx(math.sin(0.5))


# shrinking -------------------------------------------------------------------------


def test_shrink_identity():
    b = wm.TorpedoProfile(1.0, 2.0)
    assert wm.shrink_fiber(b, 1.0) is b


def test_shrink_torpedo_exact():
    s = wm.shrink_fiber(wm.TorpedoProfile(1.0, 2.0), 0.5)
    ref = wm.TorpedoProfile(0.5, 1.0)
    r = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(s(r), ref(r))


def test_shrink_rejects_bad_factor():
    with pytest.raises(DomainError):
        wm.shrink_fiber(wm.LinearProfile(1.0), 1.5)


@given(s=st.floats(0.05, 1.0), t=st.floats(0.05, 1.0))
def test_shrink_composition(s, t):
    b = wm.SumProfile([wm.TorpedoProfile(0.4, 1.0, "mollified"),
                       wm.BumpProfile(0.003, 0.7, 0.75, 0.8, 0.9, 1.0)])
    lhs = wm.shrink_fiber(wm.shrink_fiber(b, s), t)
    rhs = wm.shrink_fiber(b, s * t)
    r = np.linspace(0, rhs.delta, 65)
    assert np.max(np.abs(lhs.jet(r, 2) - rhs.jet(r, 2)) / np.maximum(1.0, np.abs(rhs.jet(r, 2)))) <= 1e-12


@settings(max_examples=20)
@given(mu=st.floats(0.2, 0.6), amp=st.floats(-0.004, 0.0), t=st.floats(0.1, 1.0))
def test_shrink_preserves_concavity(mu, amp, t):
    b = wm.SumProfile([wm.TorpedoProfile(mu, 1.0, "mollified"),
                       wm.BumpProfile(amp * mu, 0.0, 0.97, 0.98, 0.99, 1.0)])
    before = wm.concavity_check(b, grid_n=257).passed
    assert wm.concavity_check(wm.shrink_fiber(b, t), grid_n=257).passed == before


def test_t_star_torpedo_psc():
    est = wm.t_star_estimate(wm.TorpedoProfile(1.0, 2.0), cd.builtin("psc", 6), 4)
    assert est["t_star"] == 1.0 and est["label"] == "estimate"


# torpedo curve and embedding ----------------------------------------------------------


def test_torpedo_curve_alpha():
    c = wm.torpedo_curve(wm.TorpedoProfile(1.0, 2.0), 129)
    cap = c.r <= math.pi / 2
    np.testing.assert_allclose(c.alpha[cap], 1 - np.cos(c.r[cap]), atol=1e-15)
    tail = ~cap
    np.testing.assert_allclose(np.diff(c.alpha[tail]), np.diff(c.r[tail]), atol=1e-14)


def test_torpedo_curve_quadrature_matches_closed_form():
    prof = wm.SineCapProfile(1.0, 1.2)
    r = np.linspace(0, 1.2, 17)
    np.testing.assert_allclose(wm._alpha_quadrature(prof, r), 1 - np.cos(r), atol=1e-14)


def test_flat_disc_embedding_is_boundary():
    rep = wm.embedding_check(wm.LinearProfile(1.0), 3)
    assert rep.status == "boundary" and not rep.passed


@pytest.mark.parametrize("q", [3, 4, 5])
def test_torpedo_embedding(q):
    rep = wm.embedding_check(wm.TorpedoProfile(1.0, 2.0), q)
    assert rep.passed and rep.residual <= 1e-8


def test_curve_csv(tmp_path):
    c = wm.torpedo_curve(wm.TorpedoProfile(1.0, 2.0), 9)
    path = tmp_path / "curve.csv"
    c.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "r,alpha,beta,beta1,beta2" and len(lines) == 10


# finite differences and membership ----------------------------------------------------


def test_grid_derivatives_match_analytic():
    b = wm.TorpedoProfile(1.0, 2.0)
    r = np.linspace(0.01, 1.99, 997)
    r = r[np.abs(r - math.pi / 2) > 0.01]
    err = np.abs(b.sampled(2048).jet(r, 1) - b.jet(r, 1))
    assert err.max() <= 1e-7


def test_grid_derivatives_mollified_collar():
    # the smoothing collar is 1/20 wide, so it needs the finer grid
    b = wm.TorpedoProfile(1.0, 2.0, "mollified")
    r = np.linspace(0.01, 1.99, 997)
    err = np.abs(b.sampled(4096).jet(r, 1) - b.jet(r, 1))
    assert err.max() <= 1e-7


def test_grid_profile_converges_fourth_order():
    b = wm.SineCapProfile(1.0, 1.5)
    r = np.linspace(0.1, 1.4, 41)
    errs = [np.max(np.abs(b.sampled(n).jet(r, 1)[1] - b.jet(r, 1)[1])) for n in (33, 65)]
    assert errs[0] / errs[1] >= 12.0


@pytest.mark.parametrize("name, params, q", [
    ("psc", {}, 3), ("psc", {}, 5), ("p_curv", {"p": 1}, 4), ("k_pos_ric", {"k": 3}, 6),
])
def test_concave_profiles_are_members(name, params, q):
    n = 7
    C = cd.builtin(name, n, params)
    b = wm.TorpedoProfile(0.8, 2.0)
    assert wm.concavity_check(b).passed
    r = wm.sample_radii(b, 257)
    lam, mu = wm.warped_coefficients(b, r)
    assert np.min(wm.warped_margins(C, lam, mu, q)) >= -cd.EPS_STRICT


@settings(max_examples=15)
@given(name=st.sampled_from([("psc", {}), ("sec_pos", {}), ("p_curv", {"p": 2}), ("k_pos_ric", {"k": 4}),
                             ("ric_lt", {"alpha": 3.0}), ("scal_lt", {"beta": 9.0})]),
       q=st.integers(2, 6), lam=st.floats(-3, 3), mu=st.floats(-3, 3))
def test_warped_margins_match_generic(name, q, lam, mu):
    n = 6
    C = cd.builtin(name[0], n, name[1])
    R = wm.assemble(lam, mu, n, q)
    fast = float(wm.warped_margins(C, np.array(lam), np.array(mu), q))
    if C.margin_is_exact:
        assert fast == pytest.approx(C.margins_batch(R.mat[None])[0], abs=1e-10)
    else:
        assert fast <= C.margin(R) + 1e-9
        assert fast == pytest.approx(C.margin(R), abs=1e-3)
