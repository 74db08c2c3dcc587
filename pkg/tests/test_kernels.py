import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvlab import kernels
from curvlab.bending import cumquad_eno
from curvlab.curvature_algebra import random_curvature_operator, random_frames

BACKENDS = kernels.available_backends()


def test_backend_name_is_known():
    assert kernels.BACKEND_NAME in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("n", [2, 3, 4, 5, 17, 256])
def test_cumquad4_polynomial_exactness(name, n):
    # exact on polynomials of degree min(n - 1, 3)
    x = np.linspace(0.0, 2.0, n)
    coef = [1.0, 1.0, -2.0, 1.0][: min(n, 4)]
    f = np.polynomial.polynomial.polyval(x, coef)
    F = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyint(coef))
    assert np.max(np.abs(BACKENDS[name].cumquad4(f, x[1] - x[0]) - F)) <= 1e-12


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_cumquad4_fourth_order(name):
    errs = []
    for n in (65, 129, 257):
        x = np.linspace(0.0, 3.0, n)
        errs.append(np.max(np.abs(BACKENDS[name].cumquad4(np.cos(x), x[1] - x[0]) - np.sin(x))))
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")
@given(st.integers(2, 300), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_backends_agree_on_quadrature(n, seed):
    f = np.random.default_rng(seed).normal(size=n)
    a = BACKENDS["python"].cumquad4(f, 0.01)
    b = BACKENDS["compiled"].cumquad4(f, 0.01)
    assert np.max(np.abs(a - b)) <= 1e-13 * max(1.0, np.max(np.abs(a)))


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")
@pytest.mark.parametrize("n,k", [(4, 2), (6, 3), (7, 5)])
def test_backends_agree_on_frames(n, k):
    rng = np.random.default_rng(n * 10 + k)
    t4 = random_curvature_operator(n, rng).tensor()
    q = random_frames(n, k, 50, rng)
    va = BACKENDS["python"].frame_values(t4, q)
    vb = BACKENDS["compiled"].frame_values(t4, q)
    assert np.max(np.abs(va - vb)) <= 1e-12 * max(1.0, np.max(np.abs(va)))
    (va2, ga), (vb2, gb) = BACKENDS["python"].frame_values_grad(t4, q), BACKENDS["compiled"].frame_values_grad(t4, q)
    assert np.max(np.abs(va2 - vb2)) <= 1e-12 * max(1.0, np.max(np.abs(va2)))
    assert np.max(np.abs(ga - gb)) <= 1e-12 * max(1.0, np.max(np.abs(ga)))


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_frame_gradient_matches_differences(name):
    rng = np.random.default_rng(5)
    n, k = 5, 2
    t4 = random_curvature_operator(n, rng).tensor()
    q = random_frames(n, k, 3, rng)
    _, grad = BACKENDS[name].frame_values_grad(t4, q)
    eps = 1e-6
    d = rng.normal(size=q.shape)
    fd = (BACKENDS[name].frame_values(t4, q + eps * d) - BACKENDS[name].frame_values(t4, q - eps * d)) / (2 * eps)
    assert np.max(np.abs(fd - np.einsum("rij,rij->r", grad, d))) <= 1e-6


def test_eno_matches_centred_rule_on_smooth_data():
    x = np.linspace(0.0, 2.0, 401)
    f = np.exp(-x) * np.sin(3 * x)
    a = cumquad_eno(f, x[1] - x[0])
    b = kernels.cumquad4(f, x[1] - x[0])
    assert np.max(np.abs(a - b)) <= 1e-10


@pytest.mark.parametrize("n,tol", [(301, 1e-13), (300, None)])
def test_eno_handles_a_kink(n, tol):
    # integral of min(x, 1) on [0, 2]: exact when the kink is a node,
    # otherwise only the kink's own cell carries an O(h^2) error
    x = np.linspace(0.0, 2.0, n)
    f = np.minimum(x, 1.0)
    exact = np.where(x <= 1.0, x**2 / 2, x - 0.5)
    h = x[1] - x[0]
    eno = np.max(np.abs(cumquad_eno(f, h) - exact))
    plain = np.max(np.abs(kernels.cumquad4(f, h) - exact))
    assert eno <= (tol if tol is not None else h * h / 8)
    assert eno < plain
