"""FORM (HL-RF) and Breitung SORM against closed-form limit states."""
import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from piwno.form_sorm import (fd_gradient, fd_hessian, form_hlrf, sorm_breitung,
                             standard_normal_to_uniform, uniform_to_standard_normal)


@pytest.mark.parametrize("a,b", [(3.0, [1.0, 0.0]), (2.0, [0.6, -0.8, 0.0]), (-1.0, [1.0, 1.0])])
def test_form_is_exact_on_affine_limit_states(a, b):
    b = np.asarray(b)
    res = form_hlrf(lambda u: a - b @ u, np.zeros(b.size), tol=1e-10)
    assert res.converged and res.iterations <= 3
    assert res.beta_form == pytest.approx(a / np.linalg.norm(b), abs=1e-9)
    assert res.pf_form == pytest.approx(stats.norm.cdf(-a / np.linalg.norm(b)), rel=1e-9)
    # the design point lies on the limit state along the normal
    assert np.allclose(res.u_star, a * b / (b @ b), atol=1e-9)


def test_breitung_equals_form_at_zero_curvature():
    res = form_hlrf(lambda u: 3.0 - u[0] + 0.5 * u[1], np.zeros(3))
    sorm = sorm_breitung(lambda u: 3.0 - u[0] + 0.5 * u[1], res)
    assert sorm.defined
    assert np.abs(sorm.curvatures).max() < 1e-6
    assert sorm.pf == pytest.approx(res.pf_form, rel=1e-6)


def paraboloid(u):
    return 2.5 - u[0] + 0.1 * (u[1] ** 2 + u[2] ** 2)


def test_paraboloid_curvatures_and_accuracy():
    res = form_hlrf(paraboloid, np.zeros(3))
    assert res.beta_form == pytest.approx(2.5, abs=1e-8)
    sorm = sorm_breitung(paraboloid, res)
    assert np.allclose(sorm.curvatures, [0.2, 0.2], atol=1e-5)
    assert sorm.pf == pytest.approx(stats.norm.cdf(-2.5) / 1.5, rel=1e-5)
    # exact: u2^2 + u3^2 is chi-square with 2 dof
    exact, _ = integrate.quad(lambda r: stats.norm.sf(2.5 + 0.1 * r) * 0.5 * math.exp(-r / 2), 0, np.inf)
    assert abs(sorm.pf - exact) < abs(res.pf_form - exact)


def test_sphere_curvature():
    g = lambda u: 2.5 - np.linalg.norm(u)  # noqa: E731
    res = form_hlrf(g, np.array([0.3, 0.1]))
    assert res.beta_form == pytest.approx(2.5, abs=1e-6)
    # a spherical surface curves towards the origin with radius 2.5, so
    # 1 + beta * kappa sits at the singular value 0 and may warn
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sorm = sorm_breitung(g, res, step=1e-3)
    assert np.allclose(sorm.curvatures, [-0.4], atol=1e-4)


def test_breitung_undefined_for_strong_concave_curvature():
    g = lambda u: 3.0 - u[0]  # noqa: E731
    res = form_hlrf(g, np.zeros(2))
    with pytest.warns(RuntimeWarning):
        sorm = sorm_breitung(g, res, hessian=np.diag([0.0, -1.0]))
    assert np.allclose(sorm.curvatures, [-1.0])
    assert not sorm.defined and math.isnan(sorm.pf)


def test_beta_sign_when_origin_fails():
    res = form_hlrf(lambda u: -1.0 + u[0], np.zeros(2))
    assert res.beta_form == pytest.approx(-1.0, abs=1e-9)
    assert res.pf_form == pytest.approx(stats.norm.cdf(1.0))


def test_vectorized_evaluation_matches_scalar():
    def gv(points):
        return 2.5 - points[:, 0] + 0.1 * (points[:, 1] ** 2 + points[:, 2] ** 2)
    a = form_hlrf(paraboloid, np.zeros(3))
    b = form_hlrf(gv, np.zeros(3), vectorized=True)
    assert np.allclose(a.u_star, b.u_star, atol=1e-12)
    assert sorm_breitung(gv, b, vectorized=True).pf == pytest.approx(sorm_breitung(paraboloid, a).pf, rel=1e-9)


def test_non_convergence_warns():
    with pytest.warns(RuntimeWarning):
        res = form_hlrf(lambda u: 2.0 - u[0] - 0.3 * u[1] ** 2 + 0.05 * u[0] ** 3, np.zeros(2), max_iter=1)
    assert not res.converged
    with pytest.raises(ValueError):
        sorm_breitung(lambda u: 0.0, res)


def test_finite_differences_on_a_quadratic():
    a = np.array([[2.0, 0.5], [0.5, -1.0]])
    g = lambda u: 1.0 + u @ np.array([1.0, -2.0]) + 0.5 * u @ a @ u  # noqa: E731
    u = np.array([0.3, -0.7])
    val, grad = fd_gradient(g, u)
    assert val == pytest.approx(g(u))
    assert np.allclose(grad, np.array([1.0, -2.0]) + a @ u, atol=1e-8)
    assert np.allclose(fd_hessian(g, u), a, atol=1e-6)


def test_probability_transforms():
    q = np.array([0.0, 0.025, 0.5, 0.975, 1.0])
    z = uniform_to_standard_normal(q)
    assert z[0] == -np.inf and z[-1] == np.inf and z[2] == 0.0
    assert z[3] == pytest.approx(1.959963985, abs=1e-8)
    assert np.allclose(standard_normal_to_uniform(z), q)
    with pytest.raises(ValueError):
        uniform_to_standard_normal(np.array([1.2]))
