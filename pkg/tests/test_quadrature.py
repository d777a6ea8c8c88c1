from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_control.quadrature import SUPPORTED_DEGREES, triangle_quadrature


def monomial_exact(a, b, c, area):
    """int lambda1^a lambda2^b lambda3^c over a triangle of the given area."""
    return 2 * area * factorial(a) * factorial(b) * factorial(c) \
        / factorial(a + b + c + 2)


def rule_integral(rule, a, b, c, area):
    lam = rule.points
    return area * np.sum(rule.weights * lam[:, 0] ** a * lam[:, 1] ** b
                         * lam[:, 2] ** c)


@pytest.mark.parametrize("degree", SUPPORTED_DEGREES)
def test_weights_and_points(degree):
    q = triangle_quadrature(degree)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(q.weights > 0)
    assert np.allclose(q.points.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(q.points >= 0)


@pytest.mark.parametrize("degree", SUPPORTED_DEGREES)
def test_monomials_up_to_degree(degree):
    q = triangle_quadrature(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                exact = monomial_exact(a, b, c, 0.5)
                assert rule_integral(q, a, b, c, 0.5) == pytest.approx(
                    exact, rel=1e-12, abs=1e-15), (a, b, c)


def test_reference_values():
    q = triangle_quadrature(6)
    # int x^2 y over the reference triangle is 1/60; int x y = 1/24
    pts = q.physical_points(np.array([[[0, 0], [1, 0], [0, 1]]], float))[0]
    assert 0.5 * np.sum(q.weights * pts[:, 0] * pts[:, 1]) == pytest.approx(1 / 24)
    assert 0.5 * np.sum(q.weights * pts[:, 0] ** 2 * pts[:, 1]) == pytest.approx(1 / 60)
    # int x^6 = 6! 2 / 8! * area ... = 1/56 on the reference triangle
    assert 0.5 * np.sum(q.weights * pts[:, 0] ** 6) == pytest.approx(1 / 56)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        triangle_quadrature(3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_affine_invariance(c):
    corners = np.array([[c[0], c[1]], [c[0] + 1 + abs(c[2]), c[3]],
                        [c[4], c[3] + 1 + abs(c[5])]])
    d1, d2 = corners[1] - corners[0], corners[2] - corners[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(det) < 1e-3:
        return
    area = 0.5 * abs(det)
    q = triangle_quadrature(4)
    pts = q.physical_points(corners[None])[0]
    # int of an affine function equals area times its centroid value
    f = lambda x: 2.0 * x[:, 0] - 0.5 * x[:, 1] + 1.0
    cen = corners.mean(axis=0, keepdims=True)
    assert area * np.sum(q.weights * f(pts)) == pytest.approx(
        area * f(cen)[0], rel=1e-12, abs=1e-12)
