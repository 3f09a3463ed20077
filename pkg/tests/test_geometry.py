"""Rectangle solid angles against quadrature, limits and symmetries.

The frozen values come from adaptive double quadrature of
y / |r - r'|^3 over the rectangle (absolute error below 1e-8).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penningprobe import geometry

# (extent x1,x2,z1,z2 [m]), (point [m]), quadrature value
QUADRATURE_CASES = [
    ((-25e-6, 25e-6, -2000e-6, 2000e-6), (0.0, 100e-6, 0.0), 9.786670400069e-01),
    ((-25e-6, 25e-6, -2000e-6, 2000e-6), (40e-6, 152e-6, 300e-6), 6.094413192680e-01),
    ((125e-6, 185e-6, -2000e-6, 2000e-6), (-10e-6, 73e-6, 50e-6), 2.739057552322e-01),
    ((190e-6, 440e-6, 150e-6, 250e-6), (12e-6, 101e-6, -37e-6), 4.434256361418e-02),
    ((-1e-6, 1e-6, -1e-6, 1e-6), (3e-6, 5e-6, -2e-6), 8.502838230114e-02),
]


@pytest.mark.parametrize("extent,point,expected", QUADRATURE_CASES)
def test_solid_angle_against_quadrature(extent, point, expected):
    assert abs(geometry.solid_angle(extent, point) - expected) < 1e-6


def test_full_solid_angle_limit():
    # just above the interior of a large rectangle: half space = 2 pi
    omega = geometry.solid_angle((-1.0, 1.0, -1.0, 1.0), (0.0, 1e-9, 0.0))
    assert omega == pytest.approx(2.0 * np.pi, rel=1e-6)


def test_odd_in_height_and_zero_in_plane():
    ext = (-30e-6, 10e-6, -50e-6, 90e-6)
    above = geometry.solid_angle(ext, (5e-6, 40e-6, 5e-6))
    below = geometry.solid_angle(ext, (5e-6, -40e-6, 5e-6))
    assert below == -above
    assert geometry.solid_angle(ext, (200e-6, 0.0, 5e-6)) == 0.0


def test_additivity_under_splitting():
    whole = (-40e-6, 40e-6, -100e-6, 60e-6)
    left = (-40e-6, -5e-6, -100e-6, 60e-6)
    right = (-5e-6, 40e-6, -100e-6, 60e-6)
    pts = np.array(
        [[3e-6, 55e-6, -8e-6], [-60e-6, 120e-6, 200e-6], [0.0, 20e-6, 0.0]]
    )
    total = geometry.solid_angles([whole], pts)[:, 0]
    parts = geometry.solid_angles([left, right], pts).sum(axis=1)
    assert np.allclose(total, parts, rtol=0, atol=1e-13)


@st.composite
def rect_and_point(draw):
    x1 = draw(st.floats(-200.0, 150.0))
    x2 = x1 + draw(st.floats(5.0, 300.0))
    z1 = draw(st.floats(-200.0, 150.0))
    z2 = z1 + draw(st.floats(5.0, 300.0))
    x = draw(st.floats(-250.0, 250.0))
    y = draw(st.floats(8.0, 250.0))
    z = draw(st.floats(-250.0, 250.0))
    scale = 1e-6
    return (
        tuple(c * scale for c in (x1, x2, z1, z2)),
        tuple(c * scale for c in (x, y, z)),
    )


@given(rect_and_point())
@settings(max_examples=60, deadline=None)
def test_gradient_matches_finite_differences(case):
    extent, point = case
    grad = geometry.solid_angle_gradient(extent, point)
    h = 1e-11
    for k in range(3):
        dp = np.array(point)
        dm = np.array(point)
        dp[k] += h
        dm[k] -= h
        fd = (
            geometry.solid_angle(extent, dp) - geometry.solid_angle(extent, dm)
        ) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=2e-3, abs=5e-4)


@given(rect_and_point())
@settings(max_examples=60, deadline=None)
def test_hessian_matches_finite_differences(case):
    extent, point = case
    hess = geometry.solid_angle_hessian(extent, point)
    assert np.allclose(hess, hess.T)
    h = 1e-9
    for k in range(3):
        dp = np.array(point)
        dm = np.array(point)
        dp[k] += h
        dm[k] -= h
        fd = (
            geometry.solid_angle_gradient(extent, dp)
            - geometry.solid_angle_gradient(extent, dm)
        ) / (2 * h)
        scale = max(1.0, np.max(np.abs(hess)))
        assert np.allclose(hess[k], fd, rtol=2e-3, atol=1e-4 * scale)


@given(rect_and_point())
@settings(max_examples=100, deadline=None)
def test_hessian_is_traceless(case):
    extent, point = case
    hess = geometry.solid_angle_hessian(extent, point)
    scale = max(np.max(np.abs(hess)), 1.0)
    assert abs(np.trace(hess)) < 1e-12 * scale


def test_in_plane_gradient_is_normal_to_plane():
    # off the rectangle but in its plane, only the y derivative survives
    ext = (-20e-6, 20e-6, -20e-6, 20e-6)
    grad = geometry.solid_angle_gradient(ext, (50e-6, 0.0, 5e-6))
    assert grad[0] == 0.0 and grad[2] == 0.0
    assert grad[1] > 0.0  # potential rises toward the positive-y side


def test_translation_and_scale_invariance():
    ext = np.array([-20e-6, 35e-6, -10e-6, 80e-6])
    pt = np.array([5e-6, 60e-6, -15e-6])
    ref = geometry.solid_angle(ext, pt)
    shifted = geometry.solid_angle(
        ext + [7e-6, 7e-6, -3e-6, -3e-6], pt + [7e-6, 0.0, -3e-6]
    )
    assert shifted == pytest.approx(ref, rel=1e-12)
    scaled = geometry.solid_angle(ext * 13.0, pt * 13.0)
    assert scaled == pytest.approx(ref, rel=1e-12)
    # gradient scales inversely with length, Hessian with length squared
    g_ref = geometry.solid_angle_gradient(ext, pt)
    g_scaled = geometry.solid_angle_gradient(ext * 13.0, pt * 13.0)
    assert np.allclose(g_scaled, g_ref / 13.0, rtol=1e-12)
    h_ref = geometry.solid_angle_hessian(ext, pt)
    h_scaled = geometry.solid_angle_hessian(ext * 13.0, pt * 13.0)
    assert np.allclose(h_scaled, h_ref / 169.0, rtol=1e-12)


def test_stacked_shapes():
    extents = np.array([[-25e-6, 25e-6, -2e-3, 2e-3], [125e-6, 185e-6, -2e-3, 2e-3]])
    points = np.array([[0.0, 100e-6, 0.0], [0.0, 152e-6, 0.0], [10e-6, 73e-6, 5e-6]])
    omega = geometry.solid_angles(extents, points)
    grad = geometry.solid_angle_gradients(extents, points)
    hess = geometry.solid_angle_hessians(extents, points)
    assert omega.shape == (3, 2)
    assert grad.shape == (3, 2, 3)
    assert hess.shape == (3, 2, 3, 3)
    assert omega[0, 0] == pytest.approx(
        geometry.solid_angle(extents[0], points[0]), rel=1e-14
    )
