"""Single-ion Penning-trap physics: species, potentials, mode spectra and
conversions between motional heating rates and electric-field noise.

Conventions
-----------
All quantities are SI unless a function says otherwise.  The magnetic
field points along z (the axial direction); x and y span the radial
plane, with y the out-of-plane direction above the trap chip.  Angular
frequencies are rad/s throughout; helpers that accept or print MHz say
so explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import (
    ATOMIC_MASS,
    BERYLLIUM_9_ATOMIC_MASS_U,
    ELECTRON_MASS,
    ELEMENTARY_CHARGE,
    HBAR,
)

AXIAL = "z"
CYCLOTRON = "+"
MAGNETRON = "-"
MODE_LABELS = (AXIAL, CYCLOTRON, MAGNETRON)

# Curvature pattern of the cylindrically symmetric quadrupole: the axial
# curvature is +omega_z^2 (in units of m*omega_z^2/e for the potential
# Hessian) and each radial curvature is -1/2 of that.
QUADRUPOLE_CURVATURES = np.array([-0.5, -0.5, 1.0])


class UnstableTrapError(ValueError):
    """Trap parameters violate the radial stability condition."""


@dataclass(frozen=True)
class IonSpecies:
    """A trapped ion: charge in multiples of e, mass in kg."""

    charge: int
    mass: float
    name: str = ""

    def __post_init__(self):
        if self.charge == 0:
            raise ValueError("ion charge must be nonzero")
        if not self.mass > 0:
            raise ValueError("ion mass must be positive")

    @property
    def q(self) -> float:
        """Signed charge in coulombs."""
        return self.charge * ELEMENTARY_CHARGE


def beryllium_9() -> IonSpecies:
    """9Be+ with mass = neutral atomic mass minus one electron mass."""
    mass = BERYLLIUM_9_ATOMIC_MASS_U * ATOMIC_MASS - ELECTRON_MASS
    return IonSpecies(charge=1, mass=mass, name="9Be+")


@dataclass(frozen=True)
class TrapSettings:
    """Static trap operating point: field B along z, axial frequency
    omega_z, and the potential null position (metres)."""

    B: float
    omega_z: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("magnetic field must be positive")
        if not self.omega_z > 0:
            raise ValueError("axial frequency must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("center must be a 3-vector")

    @property
    def r0(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class ModeSpectrum:
    """The four characteristic angular frequencies of a single ion."""

    omega_c: float
    omega_plus: float
    omega_minus: float
    omega_z: float

    def frequency(self, mode: str) -> float:
        if mode == AXIAL:
            return self.omega_z
        if mode == CYCLOTRON:
            return self.omega_plus
        if mode == MAGNETRON:
            return self.omega_minus
        raise ValueError(f"unknown mode label {mode!r}")

    def consistency(self) -> dict:
        """Relative residuals of the exact single-ion relations.

        Useful for validating a quoted spectrum: a measured or published
        set of frequencies need not satisfy the ideal-trap identities,
        and this reports by how much it misses each one.  No attempt is
        made to decide which value is off; the caller judges.
        """
        sum_resid = self.omega_plus + self.omega_minus - self.omega_c
        prod_resid = self.omega_plus * self.omega_minus - self.omega_z**2 / 2.0
        quad_resid = (
            self.omega_plus**2 + self.omega_minus**2 + self.omega_z**2 - self.omega_c**2
        )
        return {
            "sum": sum_resid / self.omega_c,
            "product": prod_resid / self.omega_c**2,
            "quadrature": quad_resid / self.omega_c**2,
            "sum_abs": sum_resid,
        }


def mode_frequencies(species: IonSpecies, settings: TrapSettings) -> ModeSpectrum:
    """Mode spectrum of a single ion in an ideal Penning trap.

    omega_c = qB/m is the bare cyclotron frequency and the radial modes
    sit at omega_pm = omega_c/2 +- sqrt(omega_c^2 - 2 omega_z^2)/2.

    Raises
    ------
    UnstableTrapError
        If omega_c^2 < 2 omega_z^2 (no stable radial motion).
    """
    omega_c = abs(species.q) * settings.B / species.mass
    omega_z = settings.omega_z
    disc = omega_c**2 - 2.0 * omega_z**2
    if disc < 0:
        raise UnstableTrapError(
            f"unstable configuration: omega_c^2 - 2 omega_z^2 = {disc:.4e} < 0 "
            f"(omega_c = 2pi x {omega_c / (2 * np.pi) / 1e6:.4f} MHz, "
            f"omega_z = 2pi x {omega_z / (2 * np.pi) / 1e6:.4f} MHz)"
        )
    half_split = np.sqrt(disc) / 2.0
    return ModeSpectrum(
        omega_c=omega_c,
        omega_plus=omega_c / 2.0 + half_split,
        omega_minus=omega_c / 2.0 - half_split,
        omega_z=omega_z,
    )


@dataclass(frozen=True)
class ModeGeometry:
    """Zero-point spread and normalized (complex) mode vector of one mode."""

    label: str
    zero_point_spread: float
    vector: np.ndarray = field(compare=False)

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=complex)
        norm = np.sum(np.abs(vec) ** 2)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("mode vector must have unit norm")
        object.__setattr__(self, "vector", vec)


def mode_geometry(mode: str, spectrum: ModeSpectrum, species: IonSpecies) -> ModeGeometry:
    """Mode vector and zero-point spread for one of the three modes.

    The axial vector is e_z with r_z0 = sqrt(hbar/(2 m omega_z)).  The
    radial vectors are (1, -+i, 0)/sqrt(2) with spread
    sqrt(hbar/(2 m (omega_+ - omega_-))), which makes the general
    heating-rate formula reduce to the standard radial conversion.
    """
    m = species.mass
    if mode == AXIAL:
        spread = np.sqrt(HBAR / (2.0 * m * spectrum.omega_z))
        vec = np.array([0.0, 0.0, 1.0], dtype=complex)
    elif mode in (CYCLOTRON, MAGNETRON):
        split = spectrum.omega_plus - spectrum.omega_minus
        if split <= 0:
            raise ValueError("radial mode splitting must be positive")
        spread = np.sqrt(HBAR / (2.0 * m * split))
        sign = -1.0 if mode == CYCLOTRON else 1.0
        vec = np.array([1.0, sign * 1j, 0.0], dtype=complex) / np.sqrt(2.0)
    else:
        raise ValueError(f"unknown mode label {mode!r}")
    return ModeGeometry(label=mode, zero_point_spread=spread, vector=vec)


def quadrupole_potential(settings: TrapSettings, species: IonSpecies, r) -> tuple:
    """Ideal trapping potential, its gradient and Hessian at r.

    phi(r) = m omega_z^2 (2(z-z0)^2 - (x-x0)^2 - (y-y0)^2) / (4q), in
    volts.  The gradient vanishes at the centre and the Hessian is the
    constant diagonal (-1/2, -1/2, 1) * m omega_z^2 / q.
    """
    rel = np.asarray(r, dtype=float) - settings.r0
    scale = species.mass * settings.omega_z**2 / species.q
    hess = np.diag(QUADRUPOLE_CURVATURES * scale)
    grad = QUADRUPOLE_CURVATURES * scale * rel
    phi = 0.5 * float(rel @ (QUADRUPOLE_CURVATURES * scale * rel))
    return phi, grad, hess


def heating_rate_from_noise(
    mode: ModeGeometry, spectrum: ModeSpectrum, species: IonSpecies, S_E
) -> float:
    """Heating rate (quanta/s) of a mode exposed to field noise S_E.

    S_E is the per-axis one-sided electric-field PSD (V^2 m^-2 Hz^-1) at
    the mode frequency; a scalar is treated as isotropic.  The rate is

        ndot = q^2 r0^2 / (2 hbar^2) * sum_nu |gamma_nu|^2 S_E_nu.
    """
    psd = np.broadcast_to(np.asarray(S_E, dtype=float), (3,))
    if np.any(psd < 0):
        raise ValueError("field PSD must be nonnegative")
    weights = np.abs(mode.vector) ** 2
    return float(
        species.q**2
        * mode.zero_point_spread**2
        / (2.0 * HBAR**2)
        * np.dot(weights, psd)
    )


def noise_from_heating_rate(
    mode: str, spectrum: ModeSpectrum, species: IonSpecies, rate: float
) -> float:
    """Electric-field PSD (V^2 m^-2 Hz^-1) implied by a heating rate.

    S_E,z = 4 hbar m omega_z ndot / q^2 for the axial mode;
    S_E,r = 4 hbar m (omega_+ - omega_-) ndot / q^2 for the radial ones
    (assuming the noise along the relevant axes drives the mode).
    """
    if rate < 0:
        raise ValueError("heating rate must be nonnegative")
    m = species.mass
    if mode == AXIAL:
        omega_eff = spectrum.omega_z
    elif mode in (CYCLOTRON, MAGNETRON):
        omega_eff = spectrum.omega_plus - spectrum.omega_minus
    else:
        raise ValueError(f"unknown mode label {mode!r}")
    return 4.0 * HBAR * m * omega_eff * rate / species.q**2


def displacement_from_field(settings: TrapSettings, species: IonSpecies, E) -> np.ndarray:
    """Static equilibrium shift (metres) caused by a uniform field E.

    Per axis, shift = q E / (m * curvature) with the quadrupole
    curvatures (-1/2, -1/2, 1) * omega_z^2; radial shifts are opposite
    in direction and twice the size of axial ones.  The magnetic field
    does not enter: it provides dynamical stability, not a static force.
    """
    # mode_frequencies validates stability as a side effect
    mode_frequencies(species, settings)
    E = np.asarray(E, dtype=float)
    curvatures = QUADRUPOLE_CURVATURES * settings.omega_z**2
    return species.q * E / (species.mass * curvatures)


def field_sensitivity(
    settings: TrapSettings,
    species: IonSpecies,
    pixel: float,
    magnification: float,
    axis: str = "z",
) -> float:
    """Smallest resolvable quasi-static field from camera position reads.

    A position shift below p/(2M) is not resolvable, so the minimal
    axial field is Delta_E_z = m p omega_z^2 / (2 q M).  Radial fields
    move the ion twice as far per V/m, making the bound half as large
    for axis "x" or "y".
    """
    if pixel <= 0 or magnification <= 0:
        raise ValueError("pixel size and magnification must be positive")
    axial = (
        species.mass * pixel * settings.omega_z**2
        / (2.0 * abs(species.q) * magnification)
    )
    if axis == "z":
        return axial
    if axis in ("x", "y"):
        return axial / 2.0
    raise ValueError(f"unknown axis {axis!r}")


def depth_of_field(wavelength: float, numerical_aperture: float) -> float:
    """High-NA depth of field lambda / NA^2 of the imaging system."""
    if wavelength <= 0 or numerical_aperture <= 0:
        raise ValueError("wavelength and NA must be positive")
    return wavelength / numerical_aperture**2
