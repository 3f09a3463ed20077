"""Surface dipole-density patches: forward fields and regularized inversion.

A patch of uniform dipole-moment surface density D (dipoles along +y,
i.e. out of the surface) produces the double-layer potential
phi = D * Omega / (4 pi eps0) with Omega the signed solid angle of the
rectangle.  Densities are SI (C/m) internally; the adsorbate-physics
unit e*Angstrom/um^2 is accepted and produced at the I/O boundary.

The inverse problem — field samples to a density map plus a uniform
background over the region — is linear; it is solved as a Tikhonov
least-squares problem in which the background column is exempt from the
penalty so the fit is free to move charge into it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from penningprobe import geometry
from penningprobe.constants import EA_PER_UM2_TO_C_PER_M, EPSILON_0

_FOUR_PI_EPS0 = 4.0 * np.pi * EPSILON_0


def density_from_ea_um2(value):
    """Convert a dipole density from e*Angstrom/um^2 to C/m."""
    return np.asarray(value, dtype=float) * EA_PER_UM2_TO_C_PER_M


def density_to_ea_um2(value):
    """Convert a dipole density from C/m to e*Angstrom/um^2."""
    return np.asarray(value, dtype=float) / EA_PER_UM2_TO_C_PER_M


def work_function_shift(D_bg: float) -> float:
    """Contact-potential change (volts) of a dipole layer of density D_bg (C/m)."""
    return -D_bg / EPSILON_0


@dataclass(frozen=True)
class DipolePatch:
    """One rectangle (x1, x2) x (z1, z2) of uniform dipole density D (C/m)."""

    extent: tuple
    D: float

    def __post_init__(self):
        ext = tuple(float(v) for v in self.extent)
        if len(ext) != 4 or not (ext[0] < ext[1] and ext[2] < ext[3]):
            raise ValueError("extent must be (x1, x2, z1, z2) with x1 < x2, z1 < z2")
        if not np.isfinite(ext).all() or not np.isfinite(self.D):
            raise ValueError("patch extent and density must be finite")
        object.__setattr__(self, "extent", ext)


def _reject_on_patches(extents, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ext = np.atleast_2d(np.asarray(extents, dtype=float))
    in_plane = pts[:, 1] == 0.0
    if np.any(in_plane):
        p = pts[in_plane]
        inside = (
            (p[:, 0, None] >= ext[None, :, 0])
            & (p[:, 0, None] <= ext[None, :, 1])
            & (p[:, 2, None] >= ext[None, :, 2])
            & (p[:, 2, None] <= ext[None, :, 3])
        )
        if np.any(inside):
            raise ValueError(
                "point lies in the patch plane on a patch (potential discontinuity)"
            )
    return pts


def patch_field(patch: DipolePatch, r):
    """Field (V/m) and potential (V) of one patch at r (not on the patch)."""
    pts = _reject_on_patches([patch.extent], r)
    omega = geometry.solid_angles([patch.extent], pts)[:, 0]
    grad = geometry.solid_angle_gradients([patch.extent], pts)[:, 0, :]
    phi = patch.D * omega / _FOUR_PI_EPS0
    E = -patch.D * grad / _FOUR_PI_EPS0
    if np.ndim(r) == 1:
        return E[0], float(phi[0])
    return E, phi


@dataclass
class DipoleGrid:
    """Rectangular region tiled by nx x nz patches plus a background layer."""

    region: tuple = (-0.5e-3, 0.5e-3, -0.5e-3, 0.5e-3)
    nx: int = 20
    nz: int = 20
    densities: np.ndarray = None  # (nx, nz), C/m
    background: float = 0.0  # C/m, applied over the whole region

    def __post_init__(self):
        reg = tuple(float(v) for v in self.region)
        if not (reg[0] < reg[1] and reg[2] < reg[3]):
            raise ValueError("region must be (x1, x2, z1, z2) with x1 < x2, z1 < z2")
        if self.nx < 1 or self.nz < 1:
            raise ValueError("grid must have at least one patch per axis")
        self.region = reg
        if self.densities is None:
            self.densities = np.zeros((self.nx, self.nz))
        else:
            self.densities = np.asarray(self.densities, dtype=float)
            if self.densities.shape != (self.nx, self.nz):
                raise ValueError("densities must have shape (nx, nz)")

    def patch_extents(self) -> np.ndarray:
        """All patch rectangles, shape (nx*nz, 4), x-major order."""
        x_edges = np.linspace(self.region[0], self.region[1], self.nx + 1)
        z_edges = np.linspace(self.region[2], self.region[3], self.nz + 1)
        out = np.empty((self.nx * self.nz, 4))
        k = 0
        for i in range(self.nx):
            for j in range(self.nz):
                out[k] = (x_edges[i], x_edges[i + 1], z_edges[j], z_edges[j + 1])
                k += 1
        return out

    def patch_centers(self) -> np.ndarray:
        """Patch centers (x, z), shape (nx*nz, 2), matching patch_extents."""
        ext = self.patch_extents()
        return np.column_stack(
            [(ext[:, 0] + ext[:, 1]) / 2.0, (ext[:, 2] + ext[:, 3]) / 2.0]
        )


def grid_field(grid: DipoleGrid, r):
    """Superposed field (V/m) of all patches plus the background layer."""
    extents = np.vstack([grid.patch_extents(), np.asarray(grid.region)[None, :]])
    pts = _reject_on_patches(extents, r)
    grads = geometry.solid_angle_gradients(extents, pts)
    dens = np.concatenate([grid.densities.reshape(-1), [grid.background]])
    E = -np.einsum("nkd,k->nd", grads, dens) / _FOUR_PI_EPS0
    return E[0] if np.ndim(r) == 1 else E


@dataclass(frozen=True)
class FieldSample:
    """One field measurement: position (m), E (V/m), per-axis sigma (V/m)."""

    position: tuple
    E: np.ndarray
    sigma_E: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "E", np.asarray(self.E, dtype=float))
        object.__setattr__(self, "sigma_E", np.asarray(self.sigma_E, dtype=float))
        if self.E.shape != (3,) or self.sigma_E.shape != (3,):
            raise ValueError("E and sigma_E must be 3-vectors")
        if not np.all(self.sigma_E > 0):
            raise ValueError("sigma_E must be positive componentwise")


class RankDeficientError(ValueError):
    """Unregularized inversion of an under-constrained design matrix."""


@dataclass
class InversionDiagnostics:
    """Solver report attached to an inverted DipoleGrid."""

    lambda_reg: float
    chi2: float
    n_data: int
    n_params: int
    rank: int
    residuals: np.ndarray  # (n_samples, 3), in units of sigma
    gradient_norm_ratio: float  # |grad J| at solution over at zero
    sigma_densities: np.ndarray  # (nx, nz)
    sigma_background: float

    @property
    def under_constrained(self) -> bool:
        return self.rank < self.n_params


class _TikhonovSystem:
    """Whitened design with the background column projected out.

    Minimizing |A_p x + a_b x_b - b|^2 + lam |x|^2 over (x, x_b) with an
    unpenalized scalar column a_b is equivalent to the plain Tikhonov
    problem on the component of (A_p, b) orthogonal to a_b; one SVD then
    serves every lambda.
    """

    def __init__(self, A_p: np.ndarray, a_b: np.ndarray, b: np.ndarray):
        self.A_p = A_p
        self.a_b = a_b
        self.b = b
        unit = a_b / np.linalg.norm(a_b)
        self.A_perp = A_p - np.outer(unit, unit @ A_p)
        self.b_perp = b - unit * (unit @ b)
        self.u, self.s, self.vt = np.linalg.svd(self.A_perp, full_matrices=False)

    def solve(self, lam: float) -> tuple:
        utb = self.u.T @ self.b_perp
        # exact degeneracies (e.g. background == sum of tiles) survive the
        # projection only as float noise; treat them as zero modes so a
        # small lambda recovers the minimum-norm solution instead of
        # amplifying them
        live = self.s > 1e-10 * self.s[0]
        filt = np.where(live, self.s / (self.s**2 + lam), 0.0)
        x = self.vt.T @ (filt * utb)
        resid_b = self.b - self.A_p @ x
        x_b = float(self.a_b @ resid_b) / float(self.a_b @ self.a_b)
        return x, x_b


def _build_design(samples, grid: DipoleGrid):
    pts = np.array([s.position for s in samples])
    extents = np.vstack([grid.patch_extents(), np.asarray(grid.region)[None, :]])
    _reject_on_patches(extents, pts)
    grads = geometry.solid_angle_gradients(extents, pts)  # (n, K+1, 3)
    coeff = -grads / _FOUR_PI_EPS0  # field per unit density
    sigma = np.array([s.sigma_E for s in samples])  # (n, 3)
    E = np.array([s.E for s in samples])
    # rows ordered sample-major, axis-minor
    A = (coeff / sigma[:, None, :]).transpose(0, 2, 1).reshape(-1, extents.shape[0])
    b = (E / sigma).reshape(-1)
    return A, b


def invert_dipoles(
    samples,
    grid_spec: DipoleGrid | None = None,
    lambda_reg: float = 0.0,
) -> tuple:
    """Fit patch densities and a uniform background to field samples.

    Minimizes sum(((E_model - E_meas)/sigma)^2) + lambda_reg * sum(D_i^2)
    with the background density exempt from the penalty.  Returns
    (DipoleGrid, InversionDiagnostics).  lambda_reg has units of the
    whitened objective per (C/m)^2.

    Raises RankDeficientError when lambda_reg == 0 and the data do not
    determine all parameters.
    """
    if len(samples) < 1:
        raise ValueError("need at least one field sample")
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")
    grid = grid_spec if grid_spec is not None else DipoleGrid()
    A, b = _build_design(samples, grid)
    n_params = A.shape[1]
    rank = np.linalg.matrix_rank(A)
    if lambda_reg == 0.0:
        if rank < n_params:
            raise RankDeficientError(
                f"design matrix rank {rank} < {n_params} parameters; "
                "an unregularized fit needs lambda_reg > 0"
            )
        x_all, *_ = np.linalg.lstsq(A, b, rcond=None)
        x, x_b = x_all[:-1], float(x_all[-1])
    else:
        system = _TikhonovSystem(A[:, :-1], A[:, -1], b)
        x, x_b = system.solve(lambda_reg)

    x_all = np.concatenate([x, [x_b]])
    resid = A @ x_all - b
    penalty = np.concatenate([lambda_reg * x, [0.0]])
    grad_norm = np.linalg.norm(2.0 * (A.T @ resid) + 2.0 * penalty)
    grad0_norm = np.linalg.norm(2.0 * (A.T @ b))
    chi2 = float(resid @ resid)

    # parameter covariance under the measurement noise model
    M = A.T @ A + lambda_reg * np.diag(np.r_[np.ones(n_params - 1), 0.0])
    Minv = np.linalg.pinv(M)
    cov = Minv @ (A.T @ A) @ Minv
    sigmas = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    fitted = DipoleGrid(
        region=grid.region,
        nx=grid.nx,
        nz=grid.nz,
        densities=x.reshape(grid.nx, grid.nz),
        background=x_b,
    )
    diag = InversionDiagnostics(
        lambda_reg=lambda_reg,
        chi2=chi2,
        n_data=A.shape[0],
        n_params=n_params,
        rank=int(rank),
        residuals=resid.reshape(-1, 3),
        gradient_norm_ratio=float(grad_norm / grad0_norm) if grad0_norm > 0 else 0.0,
        sigma_densities=sigmas[:-1].reshape(grid.nx, grid.nz),
        sigma_background=float(sigmas[-1]),
    )
    return fitted, diag


def choose_lambda(samples, grid_spec: DipoleGrid | None = None, lambdas=None) -> float:
    """L-curve pick: the lambda of maximum curvature of
    (log residual norm, log penalty norm) over a logarithmic grid."""
    grid = grid_spec if grid_spec is not None else DipoleGrid()
    A, b = _build_design(samples, grid)
    system = _TikhonovSystem(A[:, :-1], A[:, -1], b)
    if lambdas is None:
        scale = float(np.mean(system.s**2))
        lambdas = scale * np.logspace(-8.0, 1.0, 28)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size < 5:
        raise ValueError("need at least 5 lambda candidates")
    rho = np.empty(lambdas.size)
    xi = np.empty(lambdas.size)
    for i, lam in enumerate(lambdas):
        x, x_b = system.solve(lam)
        r = A[:, :-1] @ x + A[:, -1] * x_b - b
        rho[i] = np.log(max(float(r @ r), 1e-300))
        xi[i] = np.log(max(float(x @ x), 1e-300))
    t = np.log(lambdas)
    dr, dx = np.gradient(rho, t), np.gradient(xi, t)
    d2r, d2x = np.gradient(dr, t), np.gradient(dx, t)
    curvature = (dr * d2x - dx * d2r) / np.power(dr**2 + dx**2, 1.5)
    return float(lambdas[int(np.argmax(curvature))])
