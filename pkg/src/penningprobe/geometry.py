"""Signed solid angle of axis-aligned rectangles in the y = 0 plane,
with analytic first and second derivatives.

The rectangle spans (x1, x2) x (z1, z2).  For an observation point at
height y the solid angle is the four-corner arctangent sum

    Omega = sum_ij s_ij * atan(u_i v_j / (y R_ij)),

with u_i = x_i - x, v_j = z_j - z, R_ij = sqrt(u_i^2 + v_j^2 + y^2) and
signs s_11 = s_22 = +1, s_12 = s_21 = -1.  Omega -> 2 pi directly above
the rectangle interior and is odd in y.  Two thin wrappers build the
physics on top of it:

* unit-voltage electrode potential in a grounded plane: Omega / (2 pi)
* dipole-layer potential at density D: D * Omega / (4 pi eps0)

Derivative formulas below were generated symbolically and are exercised
against finite differences in the test suite.  Points on the rectangle
edges are genuine singularities of the derivatives.

Everything is vectorized over a stack of rectangles (k, 4) and a stack
of observation points (n, 3), returning (n, k)-shaped results.
"""

from __future__ import annotations

import numpy as np

_CORNER_SIGNS = np.array([[1.0, -1.0], [-1.0, 1.0]])  # s_ij, i->x corner, j->z corner


def _corner_geometry(extents, points):
    """Broadcast helpers u, v, y, R with shape (n, k, 2, 2) (y: (n,1,1,1))."""
    ext = np.atleast_2d(np.asarray(extents, dtype=float))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x = pts[:, 0][:, None, None, None]
    y = pts[:, 1][:, None, None, None]
    z = pts[:, 2][:, None, None, None]
    xc = ext[:, 0:2][None, :, :, None]  # (1, k, 2, 1)
    zc = ext[:, 2:4][None, :, None, :]  # (1, k, 1, 2)
    u = xc - x
    v = zc - z
    r = np.sqrt(u * u + v * v + y * y)
    return u, v, y, r


def solid_angles(extents, points) -> np.ndarray:
    """Signed solid angles, shape (n, k).

    Exactly in-plane points return 0, the correct off-rectangle limit;
    in-plane points on the rectangle itself are the caller's problem
    (the potential is discontinuous there).
    """
    u, v, y, r = _corner_geometry(extents, points)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.arctan(u * v / (y * r))
    omega = np.einsum("nkij,ij->nk", terms, _CORNER_SIGNS)
    in_plane = (y == 0.0)[:, 0, 0, 0]
    if np.any(in_plane):
        omega[in_plane, :] = 0.0
    return omega


def solid_angle_gradients(extents, points) -> np.ndarray:
    """d Omega / d(x, y, z) at each point, shape (n, k, 3)."""
    u, v, y, r = _corner_geometry(extents, points)
    a = u * u + y * y
    b = v * v + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = -y * v / (a * r)
        gz = -y * u / (b * r)
        gy = -u * v * (r * r + y * y) / (a * b * r)
    grad = np.stack(
        [
            np.einsum("nkij,ij->nk", gx, _CORNER_SIGNS),
            np.einsum("nkij,ij->nk", gy, _CORNER_SIGNS),
            np.einsum("nkij,ij->nk", gz, _CORNER_SIGNS),
        ],
        axis=-1,
    )
    return grad


def solid_angle_hessians(extents, points) -> np.ndarray:
    """Second derivatives of Omega, shape (n, k, 3, 3); exactly traceless."""
    u, v, y, r = _corner_geometry(extents, points)
    a = u * u + y * y
    b = v * v + y * y
    r2 = r * r
    r3 = r2 * r
    y2 = y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        gxx = -u * v * y * (2.0 * r2 + a) / (a * a * r3)
        gzz = -u * v * y * (2.0 * r2 + b) / (b * b * r3)
        gxz = y / r3
        gxy = -v * (r2 * (u * u - y2) - y2 * a) / (a * a * r3)
        gzy = -u * (r2 * (v * v - y2) - y2 * b) / (b * b * r3)
    n, k = gxx.shape[:2]
    hess = np.empty((n, k, 3, 3))
    hess[..., 0, 0] = np.einsum("nkij,ij->nk", gxx, _CORNER_SIGNS)
    hess[..., 2, 2] = np.einsum("nkij,ij->nk", gzz, _CORNER_SIGNS)
    # Omega is harmonic off the plane, so the yy entry follows exactly
    hess[..., 1, 1] = -(hess[..., 0, 0] + hess[..., 2, 2])
    hess[..., 0, 1] = hess[..., 1, 0] = np.einsum("nkij,ij->nk", gxy, _CORNER_SIGNS)
    hess[..., 0, 2] = hess[..., 2, 0] = np.einsum("nkij,ij->nk", gxz, _CORNER_SIGNS)
    hess[..., 1, 2] = hess[..., 2, 1] = np.einsum("nkij,ij->nk", gzy, _CORNER_SIGNS)
    return hess


def solid_angle(extent, point) -> float:
    """Scalar convenience wrapper for a single rectangle and point."""
    return float(solid_angles([extent], [point])[0, 0])


def solid_angle_gradient(extent, point) -> np.ndarray:
    return solid_angle_gradients([extent], [point])[0, 0]


def solid_angle_hessian(extent, point) -> np.ndarray:
    return solid_angle_hessians([extent], [point])[0, 0]
