"""Stray-field extraction from curvature-scaled position readouts, and
magnetic-field mapping from Rabi and gradient fits.

The static-field calibration rests on one identity: an ion in a trap
scaled to axial frequency factor f sits where the applied field, the
stray field, and the quadrupole restoring force balance,

    E_applied = grad_phi_stray + f^2 M (r - r0),

with M the diagonal curvature matrix of the reference trap.  Two
co-located readings at different f therefore separate the two gradients
algebraically.  Positions are only known to camera pixels (floor
quantization laterally, a dithered point-spread-function width for the
out-of-plane axis), so the extraction is iterated until the apparent
gradient falls below the pixel-limited field sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from penningprobe import core
from penningprobe.constants import BOHR_MAGNETON, G_ELECTRON, HBAR

QUAD_CURVATURES = core.QUADRUPOLE_CURVATURES  # (-1/2, -1/2, 1)


@dataclass(frozen=True)
class CameraGeometry:
    """Imaging model: lateral pixels plus a width-vs-defocus curve.

    The camera looks down the y axis; x and z land on the sensor with
    the given magnification and are floor-quantized to pixels.  Height
    is inferred from the point-spread-function width
    |w(y)| = w0 sqrt(1 + ((y - focus_height)/y_R)^2), in pixels.
    """

    pixel_size: float = 16e-6  # m, on the sensor
    magnification: float = 20.0
    w0: float = 4.0  # px, in-focus width
    y_R: float = 50e-6  # m, defocus scale
    focus_height: float = 152e-6  # m

    def __post_init__(self):
        if min(self.pixel_size, self.magnification, self.w0, self.y_R) <= 0:
            raise ValueError("camera parameters must be positive")

    @property
    def object_pixel(self) -> float:
        """Length of one pixel referred back to the object plane (m)."""
        return self.pixel_size / self.magnification

    def pixel_of(self, coordinate: float) -> int:
        return int(np.floor(coordinate / self.object_pixel))

    def width_at(self, y: float) -> float:
        u = (y - self.focus_height) / self.y_R
        return self.w0 * np.sqrt(1.0 + u * u)

    def defocus_of(self, width: float) -> float:
        """|y - focus_height| consistent with a width (px); 0 below focus width."""
        r2 = (max(width, self.w0) / self.w0) ** 2 - 1.0
        return self.y_R * np.sqrt(max(r2, 0.0))


@dataclass(frozen=True)
class PositionReading:
    """One camera readout under an applied correction field."""

    f_ax: float  # axial-frequency scale factor (dimensionless)
    E_applied: tuple  # V/m
    px: int
    pz: int
    width: float  # px
    lost: bool = False

    def __post_init__(self):
        if not self.f_ax > 0:
            raise ValueError("f_ax must be positive")
        E = tuple(float(c) for c in self.E_applied)
        if len(E) != 3:
            raise ValueError("E_applied must be a 3-vector")
        object.__setattr__(self, "E_applied", E)


@dataclass(frozen=True)
class StrayFieldResult:
    grad_phi_stray: np.ndarray  # V/m
    grad_phi_app: np.ndarray  # V/m
    sigma_stray: np.ndarray  # V/m, per axis, > 0
    sigma_app: np.ndarray  # V/m, per axis, > 0


def curvature_diagonal(species: core.IonSpecies, omega_ref: float) -> np.ndarray:
    """Diagonal of M (V/m per m): field change per unit equilibrium shift."""
    return QUAD_CURVATURES * species.mass * omega_ref**2 / species.q


def sensitivity_bounds(
    species: core.IonSpecies, omega_ref: float, camera: CameraGeometry
) -> np.ndarray:
    """Per-axis field resolution of a single reading at scale f = 1.

    Lateral axes resolve half a pixel; the width axis resolves the
    defocus change produced by one pixel of width at focus.
    """
    M = np.abs(curvature_diagonal(species, omega_ref))
    dy = camera.y_R * np.sqrt((1.0 + 1.0 / camera.w0) ** 2 - 1.0)
    half_px = 0.5 * camera.object_pixel
    return np.array([M[0] * half_px, M[1] * dy, M[2] * half_px])


def extract_stray_field(
    reading1: PositionReading,
    reading2: PositionReading,
    species: core.IonSpecies,
    omega_ref: float,
    camera: CameraGeometry,
    lateral_tol_px: int = 1,
    width_tol_px: float = 2.5,
) -> StrayFieldResult:
    """Separate stray and apparent gradients from two co-located readings.

        grad_phi_app   = (E2 - E1) / (f2^2 - f1^2)
        grad_phi_stray = -(f1^2 E2 - f2^2 E1) / (f2^2 - f1^2)

    The readings must agree to camera resolution; the residual
    co-location slack (half a pixel per lateral axis, one pixel of
    width) is propagated to first order into the uncertainties.
    """
    f1, f2 = reading1.f_ax, reading2.f_ax
    if f1 == f2:
        raise ValueError("degenerate pair: the two scale factors are equal")
    if reading1.lost or reading2.lost:
        raise ValueError("cannot extract from a lost-ion reading")
    if (
        abs(reading1.px - reading2.px) > lateral_tol_px
        or abs(reading1.pz - reading2.pz) > lateral_tol_px
    ):
        raise ValueError("readings are not co-located laterally")
    if abs(reading1.width - reading2.width) > width_tol_px:
        raise ValueError("readings are not co-located in width")

    E1 = np.asarray(reading1.E_applied)
    E2 = np.asarray(reading2.E_applied)
    den = f2**2 - f1**2
    grad_app = (E2 - E1) / den
    grad_stray = -(f1**2 * E2 - f2**2 * E1) / den

    # co-location slack: half a pixel laterally; one pixel of width via
    # the defocus curve, evaluated at the measured operating width
    M = np.abs(curvature_diagonal(species, omega_ref))
    half_px = 0.5 * camera.object_pixel
    w_op = max(reading1.width, reading2.width)
    dy = camera.defocus_of(w_op + 1.0) - camera.defocus_of(w_op)
    slack = np.array([half_px, dy, half_px])
    sigma_stray = (f1**2 * f2**2 / abs(den)) * M * slack
    sigma_app = ((f1**2 + f2**2) / abs(den)) * M * slack
    return StrayFieldResult(
        grad_phi_stray=grad_stray,
        grad_phi_app=grad_app,
        sigma_stray=sigma_stray,
        sigma_app=sigma_app,
    )


@dataclass
class CalibrationResult:
    """Outcome of the iterative stray-field calibration."""

    result: StrayFieldResult
    trace: list  # StrayFieldResult per iteration
    converged: bool
    iterations: int


class _LateralAxis:
    """Pixel-boundary location on one camera axis at one scale factor.

    A floor-quantized reading flips exactly when the ion crosses a pixel
    boundary, so the flip field marks a sharp position reference that
    both scale factors can share.  The pixel index is monotone in the
    applied field with a known slope 1/(f^2 M), which makes the searches
    derivative-driven and deterministic.
    """

    def __init__(self, oracle, f, E_base, axis, attr, m_axis, object_pixel):
        self.oracle = oracle
        self.f = f
        self.E_base = np.array(E_base, dtype=float)
        self.axis = axis
        self.attr = attr
        self.dedr = f**2 * m_axis  # field change per unit position change
        self.opx = object_pixel

    def read(self, e) -> int:
        E = self.E_base.copy()
        E[self.axis] = e
        r = self.oracle(tuple(E), self.f)
        if r.lost:
            raise RuntimeError("ion lost during edge search")
        return getattr(r, self.attr)

    def walk_to(self, e, pixel) -> float:
        """Field putting the reading on `pixel` or its left neighbour."""
        for _ in range(80):
            p = self.read(e)
            if p in (pixel - 1, pixel):
                return e
            # estimated position error, in pixels, to the boundary
            e += self.dedr * (pixel - (p + 0.5)) * self.opx
        raise RuntimeError("pixel walk failed to reach the target boundary")

    def bracket(self, e, pixel, tol) -> float:
        """Bisect the flip between pixels (pixel-1, pixel) near e."""
        p = self.read(e)
        sgn = 1.0 if (self.dedr > 0) == (p <= pixel - 1) else -1.0
        step = abs(self.dedr) * self.opx * 0.75
        other = None
        for _ in range(30):
            cand = e + sgn * step
            if self.read(cand) != p:
                other = cand
                break
            step *= 1.6
        if other is None:
            raise RuntimeError("failed to bracket the pixel boundary")
        lo, hi = min(e, other), max(e, other)
        plo = self.read(lo)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.read(mid) == plo:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def find_any_edge(self, e0, tol):
        """Nearest flip to e0; returns (edge field, boundary pixel index)."""
        p0 = self.read(e0)
        step = abs(self.dedr) * self.opx * 0.6
        e1 = None
        for _ in range(30):
            for sgn in (1.0, -1.0):
                cand = e0 + sgn * step
                if self.read(cand) != p0:
                    e1 = cand
                    break
            if e1 is not None:
                break
            step *= 1.6
        if e1 is None:
            raise RuntimeError("no pixel boundary found near the working point")
        lo, hi = min(e0, e1), max(e0, e1)
        plo = self.read(lo)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.read(mid) == plo:
                lo = mid
            else:
                hi = mid
        boundary = max(self.read(lo - 2 * tol), self.read(hi + 2 * tol))
        return 0.5 * (lo + hi), boundary

    def find_edge_of(self, e_guess, pixel, tol) -> float:
        """Flip field of one specific boundary, approached from e_guess."""
        e = self.walk_to(e_guess, pixel)
        return self.bracket(e, pixel, tol)


def _width_vertex(oracle, f, E_base, span, n_scan):
    """Vertex of w^2 vs E_y: the applied field nulling the y offset.

    w^2 is exactly quadratic in the equilibrium height, and the height
    is affine in E_y, so the parabola vertex sits at the field that
    cancels the stray component regardless of f.
    """
    used, w2 = [], []
    for e in E_base[1] + np.linspace(-span, span, n_scan):
        E = np.array(E_base, dtype=float)
        E[1] = e
        r = oracle(tuple(E), f)
        if r.lost:  # scan edge pushed the ion out of view; skip the point
            continue
        used.append(e)
        w2.append(r.width**2)
    if len(used) < 6:
        raise RuntimeError("width scan lost the ion on too many points")
    used = np.array(used)
    coeffs = np.polynomial.polynomial.polyfit(used - used[0], w2, 2)
    if coeffs[2] <= 0:
        raise RuntimeError("width scan shows no curvature; widen the scan")
    return used[0] - coeffs[1] / (2.0 * coeffs[2])


def iterate_calibration(
    oracle,
    species: core.IonSpecies,
    omega_ref: float,
    camera: CameraGeometry,
    f_pair=(1.6, 2.5),
    start=(0.0, 0.0, 0.0),
    max_iterations: int = 8,
    scan_span: float = 800.0,
    n_scan: int = 25,
) -> CalibrationResult:
    """Drive the applied correction to the stray field against an oracle.

    Each iteration builds a co-located pair: on the lateral axes the
    fields that put the ion exactly on a shared pixel boundary at the
    two scale factors; on the width axis the vertex of the w^2 parabola
    at each factor.  The pair is fed to extract_stray_field and the
    correction updated to the recovered stray gradient, until the
    apparent gradient drops below the per-axis sensitivity bound.
    """
    f1, f2 = f_pair
    if f1 == f2:
        raise ValueError("f_pair must contain two distinct scale factors")
    bounds = sensitivity_bounds(species, omega_ref, camera)
    M = curvature_diagonal(species, omega_ref)
    estimate = np.array(start, dtype=float)
    trace: list = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        try:
            E1 = np.array(estimate)
            E2 = np.array(estimate)
            for axis, attr in ((0, "px"), (2, "pz")):
                tol = bounds[axis] / 25.0
                ax1 = _LateralAxis(
                    oracle, f1, estimate, axis, attr, M[axis], camera.object_pixel
                )
                E1[axis], boundary = ax1.find_any_edge(estimate[axis], f1**2 * tol)
                # lock onto the same physical boundary at the second factor
                ax2 = _LateralAxis(
                    oracle, f2, estimate, axis, attr, M[axis], camera.object_pixel
                )
                guess = estimate[axis] + (f2**2 / f1**2) * (E1[axis] - estimate[axis])
                E2[axis] = ax2.find_edge_of(guess, boundary, f2**2 * tol)
            E1[1] = _width_vertex(oracle, f1, estimate, scan_span, n_scan)
            E2[1] = _width_vertex(oracle, f2, estimate, scan_span, n_scan)

            r1 = oracle(tuple(E1), f1)
            r2 = oracle(tuple(E2), f2)
            result = extract_stray_field(r1, r2, species, omega_ref, camera)
        except RuntimeError:
            if not trace:
                raise  # nothing usable yet: the very first pass failed
            break  # a later pass wandered off; report the non-converged trace
        trace.append(result)
        estimate = np.array(result.grad_phi_stray)
        if np.all(np.abs(result.grad_phi_app) <= bounds):
            converged = True
            break
    return CalibrationResult(
        result=trace[-1], trace=trace, converged=converged, iterations=len(trace)
    )


# --- Rabi spectroscopy and gradient mapping ----------------------------------


def rabi_probability(detuning, rabi_rate, t):
    """Two-level P(up) after a square pulse, starting in |up>."""
    W = np.sqrt(np.asarray(detuning, dtype=float) ** 2 + rabi_rate**2)
    frac = np.where(W > 0, (rabi_rate / np.where(W > 0, W, 1.0)) ** 2, 0.0)
    return 1.0 - frac * np.sin(W * t / 2.0) ** 2


def rabi_gradient(detuning, rabi_rate, t):
    """(dP/d_detuning, dP/d_rabi_rate) of rabi_probability.

    Analytic, because the absolute-frequency parameter is many orders
    larger than the linewidth and finite differencing cannot pick a
    sane step for it.
    """
    D = np.asarray(detuning, dtype=float)
    O = rabi_rate
    W = np.sqrt(D**2 + O**2)
    safe = W > 0
    Ws = np.where(safe, W, 1.0)
    u = Ws * t / 2.0
    s2 = np.sin(u) ** 2
    s2u = np.sin(2.0 * u)
    dP_dD = 2.0 * O**2 * D / Ws**4 * s2 - O**2 / Ws**2 * s2u * t * D / (2.0 * Ws)
    dP_dO = -2.0 * O * D**2 / Ws**4 * s2 - O**3 * t * s2u / (2.0 * Ws**3)
    zero = np.zeros_like(Ws)
    return np.where(safe, dP_dD, zero), np.where(safe, dP_dO, zero)


class FlatScanError(ValueError):
    """Scan carries no identifiable lineshape."""


@dataclass(frozen=True)
class RabiScan:
    """Measured P(up) versus drive frequency or pulse duration."""

    kind: str  # "frequency" | "duration"
    abscissa: np.ndarray  # rad/s for frequency scans, s for duration scans
    p_up: np.ndarray
    shots: np.ndarray
    pulse_time: float | None = None  # required for frequency scans

    def __post_init__(self):
        if self.kind not in ("frequency", "duration"):
            raise ValueError("kind must be 'frequency' or 'duration'")
        a = np.asarray(self.abscissa, dtype=float)
        p = np.asarray(self.p_up, dtype=float)
        n = np.asarray(self.shots)
        if a.ndim != 1 or a.shape != p.shape or a.shape != n.shape:
            raise ValueError("abscissa, p_up, shots must be 1-d and equal length")
        if np.any((p < 0) | (p > 1)):
            raise ValueError("p_up must lie in [0, 1]")
        if np.any(n <= 0):
            raise ValueError("shots must be positive")
        if self.kind == "frequency" and not (self.pulse_time and self.pulse_time > 0):
            raise ValueError("frequency scans need a positive pulse_time")
        object.__setattr__(self, "abscissa", a)
        object.__setattr__(self, "p_up", p)
        object.__setattr__(self, "shots", n.astype(float))


def _binomial_sigma(p, n):
    # mildly shrunk estimate keeps the weight finite at p = 0 or 1
    pt = (p * n + 0.5) / (n + 1.0)
    return np.sqrt(pt * (1.0 - pt) / n)


@dataclass
class RabiFit:
    center: float | None  # rad/s, frequency scans
    rabi_rate: float  # rad/s
    sigma_center: float | None
    sigma_rabi: float
    chi2: float
    n_points: int


def fit_rabi(scan: RabiScan) -> RabiFit:
    """Weighted least-squares fit of the two-level lineshape.

    Frequency scans fit (center, Rabi rate) at fixed pulse time;
    duration scans fit the Rabi rate at zero detuning.  Starting points
    come from a deterministic candidate grid, so repeated fits of the
    same scan are identical.
    """
    if scan.abscissa.size < 5:
        raise ValueError("need at least 5 scan points")
    p, n = scan.p_up, scan.shots
    sigma = _binomial_sigma(p, n)
    if p.max() - p.min() < 3.0 * np.median(sigma):
        raise FlatScanError(
            "scan is flat within counting noise; lineshape not identifiable"
        )

    if scan.kind == "frequency":
        t = scan.pulse_time
        w = scan.abscissa

        def residuals(theta):
            return (rabi_probability(w - theta[0], abs(theta[1]), t) - p) / sigma

        def jacobian(theta):
            dD, dO = rabi_gradient(w - theta[0], abs(theta[1]), t)
            return np.column_stack([-dD, np.sign(theta[1]) * dO]) / sigma[:, None]

        centers = [w[int(np.argmin(p))], 0.5 * (w.max() + w.min())]
        rabis = np.pi / t * np.array([0.3, 1.0, 3.0])
        starts = [(c, r) for c in centers for r in rabis]
        best = None
        for s0 in starts:
            res = optimize.least_squares(
                residuals, s0, jac=jacobian, method="lm", max_nfev=2000
            )
            if best is None or res.cost < best.cost:
                best = res
        center, rabi = best.x[0], abs(best.x[1])
        cov = _fit_covariance(best)
        return RabiFit(
            center=float(center),
            rabi_rate=float(rabi),
            sigma_center=float(np.sqrt(cov[0, 0])),
            sigma_rabi=float(np.sqrt(cov[1, 1])),
            chi2=float(2.0 * best.cost),
            n_points=int(p.size),
        )

    t = scan.abscissa

    def residuals(theta):
        return (rabi_probability(0.0, abs(theta[0]), t) - p) / sigma

    def jacobian(theta):
        _, dO = rabi_gradient(np.zeros_like(t), abs(theta[0]), t)
        return (np.sign(theta[0]) * dO / sigma)[:, None]

    t_scale = np.median(t[t > 0]) if np.any(t > 0) else 1.0
    candidates = np.pi / t_scale * np.geomspace(0.05, 20.0, 24)
    best = None
    for r0 in candidates:
        res = optimize.least_squares(
            residuals, [r0], jac=jacobian, method="lm", max_nfev=2000
        )
        if best is None or res.cost < best.cost - 1e-12 * (1 + abs(best.cost)):
            best = res
    rabi = abs(best.x[0])
    cov = _fit_covariance(best)
    return RabiFit(
        center=None,
        rabi_rate=float(rabi),
        sigma_center=None,
        sigma_rabi=float(np.sqrt(cov[0, 0])),
        chi2=float(2.0 * best.cost),
        n_points=int(p.size),
    )


def _fit_covariance(res) -> np.ndarray:
    J = res.jac
    # equilibrate columns so pinv's cutoff is per-parameter, not global
    col = np.linalg.norm(J, axis=0)
    col[col == 0] = 1.0
    return np.linalg.pinv((J / col).T @ (J / col)) / np.outer(col, col)


@dataclass
class GradientFit:
    slope: float
    intercept: float
    sigma_slope: float
    sigma_intercept: float
    residuals: np.ndarray


def fit_gradient(coords, values, sigmas=None) -> GradientFit:
    """Weighted straight-line fit of a field value against one coordinate."""
    x = np.asarray(coords, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("coords and values must be 1-d and equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissa: all coordinates coincide")
    if sigmas is None:
        s = np.ones_like(x)
    else:
        s = np.asarray(sigmas, dtype=float)
        if s.shape != x.shape or np.any(s <= 0):
            raise ValueError("sigmas must be positive and match coords")
    X = np.column_stack([x, np.ones_like(x)]) / s[:, None]
    coef, *_ = np.linalg.lstsq(X, y / s, rcond=None)
    cov = np.linalg.inv(X.T @ X)
    resid = y - (coef[0] * x + coef[1])
    return GradientFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        sigma_slope=float(np.sqrt(cov[0, 0])),
        sigma_intercept=float(np.sqrt(cov[1, 1])),
        residuals=resid,
    )


def delta_B_from_delta_omega(delta_omega, sensitivity: float | None = None):
    """Convert a transition-frequency shift to a field shift (tesla).

    Default sensitivity is the free-electron-spin g mu_B / hbar.
    """
    if sensitivity is None:
        sensitivity = G_ELECTRON * BOHR_MAGNETON / HBAR
    return np.asarray(delta_omega, dtype=float) / sensitivity
