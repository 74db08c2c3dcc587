import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from curvlab import bending as bd
from curvlab import conditions as cd
from curvlab import warped_metrics as wm
from curvlab.curvature_algebra import DomainError

HALF_PI = math.pi / 2


@pytest.fixture(scope="module")
def params():
    return bd.BendParams(rho=0.5, C2=1.0, theta0=0.1, rbar=1.0)


@pytest.fixture(scope="module")
def bent(params):
    return bd.build_curve(params)


# reconstruction -------------------------------------------------------------------


def test_zero_angle_is_radial_segment():
    c = bd.curve_from_theta(np.zeros(101), 1.0, 0.8)
    np.testing.assert_allclose(c.r, 1.0 - c.s, atol=1e-15)
    assert np.all(c.t == 0)


def test_vertical_angle_is_vertical_line():
    c = bd.curve_from_theta(np.full(101, HALF_PI), 1.0, 2.0)
    np.testing.assert_allclose(c.r, 1.0, atol=1e-15)
    np.testing.assert_allclose(c.t, c.s, atol=1e-14)


def test_reconstruction_against_adaptive_quadrature():
    s_max, n = 2.0, 4097  # s = 1 is a grid point, so the kink sits on a cell edge
    s = np.linspace(0, s_max, n)
    c = bd.curve_from_theta(HALF_PI * np.minimum(s, 1.0), 1.0, s_max)
    for i in range(0, n, 256):
        x = s[i]
        pts = [1.0] if x > 1.0 else None
        r = 1.0 - quad(lambda u: math.cos(HALF_PI * min(u, 1.0)), 0, x, points=pts, epsabs=1e-14)[0]
        t = quad(lambda u: math.sin(HALF_PI * min(u, 1.0)), 0, x, points=pts, epsabs=1e-14)[0]
        assert abs(c.r[i] - r) <= 1e-9 and abs(c.t[i] - t) <= 1e-9


def test_reconstruction_rejects_escaping_angle():
    with pytest.raises(bd.CurveError) as err:
        bd.curve_from_theta(np.linspace(0, 2.0, 50), 1.0, 1.0)
    assert err.value.witness is not None


def test_arc_length(bent):
    checked = 0
    for p in bent.curve.pieces:
        # below this spacing the differences of t (of size 1) are rounding noise
        if p.segment.h < 1e-5:
            continue
        dr, _ = bd.fd_derivatives(p.r, p.segment.h)
        dt, _ = bd.fd_derivatives(p.t, p.segment.h)
        assert np.max(np.abs(dr**2 + dt**2 - 1.0)) <= 1e-8
        checked += 1
    assert checked >= 3


def test_kappa_round_trip(bent):
    seg = bent.curve.segments[0]
    th, ka = seg.angles(0.0)
    again = bd.curve_from_kappa(ka, 1.0, seg.length)
    np.testing.assert_allclose(again.theta, th, atol=1e-6)
    np.testing.assert_allclose(again.r, bd.curve_from_theta(th, 1.0, seg.length).r, atol=1e-6)


# classification ---------------------------------------------------------------------


def test_classify_radial_segment():
    cls = bd.classify(bd.straight_curve(1.0))
    assert cls.tag == "Gamma_b"
    assert cls.b == pytest.approx(1.0, abs=1e-12)


def test_classify_vertical_line_is_none():
    assert bd.classify(bd.curve_from_theta(np.full(65, HALF_PI), 1.0, 1.0)).tag == "none"


def test_classify_built_curve(bent):
    cls = bd.classify(bent.curve)
    assert cls.tag == "Gamma_tilde_b"
    knots = bent.curve.knots
    h = max(seg.h for seg in bent.curve.segments)
    for name in ("s2", "s3", "s4", "s5", "s6"):
        assert abs(cls.partition[name] - knots[name]) <= h, name
    assert cls.b == pytest.approx(knots["b"], abs=1e-9)


def test_partition_flat_pieces(bent):
    c, part = bent.curve, bd.classify(bent.curve).partition
    s, ka, r = c.s, c.kappa, c.r
    for a, b in (("s0", "s1"), ("s2", "s3"), ("s4", "s5")):
        sel = (s > part[a]) & (s < part[b])
        assert np.max(np.abs(ka[sel]), initial=0.0) <= 1e-6
    sel = (s >= part["s4"]) & (s <= part["s5"])
    assert np.ptp(r[sel]) <= 1e-6


def test_monotone_geometry(bent):
    c = bent.curve
    assert np.all(np.diff(c.r) <= 1e-12)
    assert np.all(np.diff(c.t) >= -1e-12)


# the bend ------------------------------------------------------------------------------


def test_step_bound_value(params):
    assert params.step_bound() == 472


def test_step_count_and_halving(bent):
    assert bent.log.steps <= bent.log.bound
    assert bent.log.halving_ok
    r = np.array(bent.log.r_start)
    assert np.all(r[1:] >= 0.5 * r[:-1])


def test_bending_inequality_factor_two(bent, params):
    rep = bd.bending_inequality(bent.curve, params.rho, params.C2, factor=2.0, only_roles=("bend",))
    assert rep.holds() and rep.max_ratio <= 0.5 + 1e-9


def test_bending_inequality_whole_curve(bent, params):
    rep = bd.bending_inequality(bent.curve, params.rho, params.C2, factor=2.0)
    assert rep.holds()


def test_initial_bend_flat_ends(params):
    seg = bd.initial_bend(params)
    th, ka = seg.angles(0.0)
    assert abs(ka[0]) <= 1e-300 and abs(ka[-1]) <= 1e-300
    assert th[0] == 0.0 and th[-1] == pytest.approx(params.theta0, abs=1e-15)
    assert np.min(np.diff(th)) >= 0.0


def test_initial_bend_degenerate():
    p = bd.BendParams(rho=0.5, C2=1.0, theta0=0.0)
    th, _ = bd.initial_bend(p).angles(0.0)
    assert np.all(th == 0.0)


def test_bend_params_validation():
    with pytest.raises(DomainError):
        bd.BendParams(rho=0.5, C2=1.0, theta0=HALF_PI)
    with pytest.raises(DomainError):
        bd.BendParams(rho=0.5, C2=1.0, s2=0.0)
    with pytest.raises(DomainError):
        bd.BendParams(rho=-1.0, C2=1.0)


def test_second_bend_non_convergence():
    p = bd.BendParams(rho=0.5, C2=1.0, theta0=0.1, max_steps=3)
    with pytest.raises(bd.CurveError):
        bd.second_bend(p, 0.5)


def test_close_curve_hits_axis_perpendicular(bent):
    c = bent.curve
    assert c.end["theta"] == 0.0
    assert abs(c.end["r"]) <= 1e-12
    axis = c.pieces[-1]
    assert np.ptp(axis.t) == 0.0


def test_close_curve_needs_vertical_end(params):
    with pytest.raises(bd.CurveError):
        bd.close_curve([bd.initial_bend(params)], params)


def test_r_target_reached():
    p = bd.BendParams(rho=2.0, C2=1.0, theta0=0.6, r_target=0.05)
    bent = bd.build_curve(p)
    assert bent.r_target_exact
    assert bent.r_tube == pytest.approx(0.05, rel=1e-6)


def test_r_target_unreachable_is_reported():
    p = bd.BendParams(rho=0.5, C2=1.0, theta0=0.1, r_target=0.05)
    bent = bd.build_curve(p)
    assert not bent.r_target_exact and bent.r_tube < 0.05


# flat model ----------------------------------------------------------------------------


def test_flat_model_straight_curve_is_flat():
    C = cd.builtin("psc", 7)
    trace, ident = bd.flat_model_check(bd.straight_curve(1.0), 3, 4, C)
    assert np.max(np.abs([smp.margin for smp in trace.samples])) == 0.0
    assert not trace.all_positive(cd.EPS_STRICT)


def test_flat_identity_on_built_curve():
    # few, long steps and a finely sampled descent keep every piece resolved
    p = bd.BendParams(rho=2.0, C2=1.0, theta0=0.6, bend_grid=16384, ramp_nodes=2049, descent_nodes=2049)
    _, ident = bd.flat_model_check(bd.build_curve(p).curve, 3, 4, cd.builtin("psc", 7))
    assert ident.max_rel <= 1e-6


def test_flat_identity_reference_curve():
    _, ident = bd.flat_model_check(bd.reference_curve(4096), 3, 4, cd.builtin("psc", 7))
    assert ident.max_abs <= 1e-6


def test_flat_model_dimension_mismatch(bent):
    with pytest.raises(DomainError):
        bd.flat_model_check(bent.curve, 3, 4, cd.builtin("psc", 6))


def test_torpedo_ambient_margins_positive():
    C = cd.builtin("psc", 7)
    ambient = wm.TorpedoProfile(1.0, 2.0)
    consts = bd.bend_constants(C, 4, ambient)
    assert consts["rho"] > 0
    assert consts["C2"] == pytest.approx(math.sqrt(3))
    p = bd.BendParams(rho=consts["rho"], C2=consts["C2"], theta0=0.1, rbar=1.0)
    trace, _ = bd.flat_model_check(bd.build_curve(p).curve, 3, 4, C, ambient, identity=False)
    assert trace.all_positive(0.0)


# isotopy ------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def isotopy(bent):
    return bd.straighten_isotopy(bent, samples=11)


def test_isotopy_start_reproduces_curve(isotopy, bent):
    assert bd.hausdorff(isotopy.samples[0].curve, bent.curve) <= 1e-6


def test_isotopy_end_is_radial(isotopy):
    assert bd.hausdorff(isotopy.samples[-1].curve, bd.straight_curve(1.0)) <= 1e-6


def test_isotopy_turning_balance(isotopy):
    assert max(abs(x) for x in isotopy.total_turning()) <= 1e-8


def test_isotopy_keeps_inequality(isotopy):
    assert all(rep.holds() for rep in isotopy.inequality())


def test_isotopy_curves_reach_axis(isotopy):
    for smp in isotopy.samples:
        assert bd.classify(smp.curve).tag in ("Gamma_b", "Gamma_tilde_b")


def test_isotopy_needs_built_curve():
    p = bd.BendParams(rho=0.5, C2=1.0)
    with pytest.raises(bd.IsotopyError):
        bd.isotopy_curve(bd.straight_curve(1.0), p, 0.3)


# properties ----------------------------------------------------------------------------------


@settings(max_examples=10)
@given(ratio=st.floats(0.25, 4.0), C2=st.floats(0.5, 2.0), theta0=st.floats(0.1, 0.6))
def test_built_curves_satisfy_certificate(ratio, C2, theta0):
    # ratio bounds the step count, so each step keeps enough grid points
    rho = ratio * C2
    p = bd.BendParams(rho=rho, C2=C2, theta0=theta0)
    bent = bd.build_curve(p)
    assert bd.classify(bent.curve).tag == "Gamma_tilde_b"
    assert bd.bending_inequality(bent.curve, rho, C2, factor=2.0, only_roles=("bend",)).holds()
    assert bent.log.halving_ok and bent.log.steps <= p.step_bound()
    c = bent.curve
    assert np.all(np.diff(c.r) <= 1e-12) and np.all(np.diff(c.t) >= -1e-12)


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_axis_length_is_lipschitz_in_angle(eps):
    s = np.linspace(0, 2.0, 4097)
    base = 0.6 * np.sin(np.pi * np.minimum(s, 1.0)) ** 2
    bump = np.where(s < 1.0, np.sin(np.pi * s) ** 2, 0.0)
    L0 = bd.classify(bd.curve_from_theta(base, 1.0, 2.0)).b
    L1 = bd.classify(bd.curve_from_theta(base + eps * bump, 1.0, 2.0)).b
    assert L0 is not None and L1 is not None
    assert abs(L1 - L0) / eps <= 5.0
