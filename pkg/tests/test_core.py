"""Single-ion mode physics: frequencies, heating conversions, statics.

Expected numbers were frozen from direct transcriptions of the textbook
formulas evaluated independently of the package code.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penningprobe import core
from penningprobe.core import (
    AXIAL,
    CYCLOTRON,
    MAGNETRON,
    IonSpecies,
    TrapSettings,
    UnstableTrapError,
    beryllium_9,
    mode_frequencies,
)

TWOPI = 2.0 * np.pi
BE = beryllium_9()
SETTINGS = TrapSettings(B=3.0, omega_z=TWOPI * 2.6e6)


def test_bare_cyclotron_frequency():
    spec = mode_frequencies(BE, SETTINGS)
    assert spec.omega_c / TWOPI == pytest.approx(5.112097316e6, rel=1e-9)


def test_radial_mode_frequencies():
    spec = mode_frequencies(BE, SETTINGS)
    assert spec.omega_plus / TWOPI == pytest.approx(4.331825880e6, rel=1e-9)
    assert spec.omega_minus / TWOPI == pytest.approx(7.802714360e5, rel=1e-9)


def test_unstable_configuration_raises():
    # omega_z too large for the field: omega_c^2 < 2 omega_z^2
    bad = TrapSettings(B=0.1, omega_z=TWOPI * 2.6e6)
    with pytest.raises(UnstableTrapError):
        mode_frequencies(BE, bad)


def test_mode_ordering():
    spec = mode_frequencies(BE, SETTINGS)
    assert spec.omega_minus < spec.omega_z < spec.omega_plus < spec.omega_c


@st.composite
def stable_configs(draw):
    b = draw(st.floats(0.5, 10.0))
    mass_u = draw(st.floats(1.0, 200.0))
    charge = draw(st.integers(1, 3))
    species = IonSpecies(charge=charge, mass=mass_u * 1.66053906660e-27)
    omega_c = species.q * b / species.mass
    # keep safely inside the stability region
    frac = draw(st.floats(0.01, 0.69))
    return species, TrapSettings(B=b, omega_z=frac * omega_c)


@given(stable_configs())
@settings(max_examples=200)
def test_spectrum_identities(config):
    species, trap = config
    spec = mode_frequencies(species, trap)
    resid = spec.consistency()
    assert abs(resid["sum"]) < 1e-12
    assert abs(resid["product"]) < 1e-12
    assert abs(resid["quadrature"]) < 1e-12


def test_consistency_flags_inconsistent_spectrum():
    # a quadruple that does not close under omega_+ + omega_- = omega_c
    spec = core.ModeSpectrum(
        omega_c=TWOPI * 5.118e6,
        omega_plus=TWOPI * 4.32e6,
        omega_minus=TWOPI * 0.845e6,
        omega_z=TWOPI * 2.6e6,
    )
    resid = spec.consistency()
    assert abs(resid["sum_abs"]) / TWOPI == pytest.approx(47e3, rel=0.05)
    assert abs(resid["sum"]) > 1e-3


def test_mode_vectors_orthonormal():
    spec = mode_frequencies(BE, SETTINGS)
    plus = core.mode_geometry(CYCLOTRON, spec, BE)
    minus = core.mode_geometry(MAGNETRON, spec, BE)
    axial = core.mode_geometry(AXIAL, spec, BE)
    for g in (plus, minus, axial):
        assert np.sum(np.abs(g.vector) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.vdot(plus.vector, minus.vector)) < 1e-12
    assert abs(np.vdot(plus.vector, axial.vector)) < 1e-12


def test_zero_point_spreads():
    spec = mode_frequencies(BE, SETTINGS)
    axial = core.mode_geometry(AXIAL, spec, BE)
    radial = core.mode_geometry(CYCLOTRON, spec, BE)
    assert axial.zero_point_spread == pytest.approx(14.686561921e-9, rel=1e-9)
    assert radial.zero_point_spread == pytest.approx(12.566015074e-9, rel=1e-9)


def test_axial_heating_rate_from_noise():
    spec = mode_frequencies(BE, SETTINGS)
    axial = core.mode_geometry(AXIAL, spec, BE)
    rate = core.heating_rate_from_noise(axial, spec, BE, 1e-12)
    assert rate == pytest.approx(2.489308669e2, rel=1e-9)


def test_noise_per_unit_heating_rate():
    spec = mode_frequencies(BE, SETTINGS)
    assert core.noise_from_heating_rate(AXIAL, spec, BE, 1.0) == pytest.approx(
        4.017179598e-15, rel=1e-9
    )
    assert core.noise_from_heating_rate(CYCLOTRON, spec, BE, 1.0) == pytest.approx(
        5.487396945e-15, rel=1e-9
    )
    # both radial modes share the same conversion
    assert core.noise_from_heating_rate(
        MAGNETRON, spec, BE, 1.0
    ) == core.noise_from_heating_rate(CYCLOTRON, spec, BE, 1.0)


@given(
    st.sampled_from([AXIAL, CYCLOTRON, MAGNETRON]),
    st.floats(1e-18, 1e-8),
)
def test_heating_noise_round_trip(mode, psd):
    spec = mode_frequencies(BE, SETTINGS)
    geom = core.mode_geometry(mode, spec, BE)
    rate = core.heating_rate_from_noise(geom, spec, BE, psd)
    back = core.noise_from_heating_rate(mode, spec, BE, rate)
    assert back == pytest.approx(psd, rel=1e-12)


def test_anisotropic_noise_weighting():
    # axial mode only sees the z component
    spec = mode_frequencies(BE, SETTINGS)
    axial = core.mode_geometry(AXIAL, spec, BE)
    assert core.heating_rate_from_noise(axial, spec, BE, [1e-12, 1e-12, 0.0]) == 0.0
    # radial modes average the two in-plane components
    rad = core.mode_geometry(CYCLOTRON, spec, BE)
    iso = core.heating_rate_from_noise(rad, spec, BE, 1e-12)
    xy = core.heating_rate_from_noise(rad, spec, BE, [2e-12, 0.0, 0.0])
    assert xy == pytest.approx(iso, rel=1e-12)


def test_quadrupole_hessian_and_gradient():
    phi0, grad0, hess = core.quadrupole_potential(SETTINGS, BE, SETTINGS.r0)
    assert phi0 == 0.0
    assert np.all(grad0 == 0.0)
    scale = BE.mass * SETTINGS.omega_z**2 / BE.q
    assert np.allclose(np.diag(hess), [-0.5 * scale, -0.5 * scale, scale])
    assert abs(np.trace(hess)) < 1e-9 * scale

    # finite-difference check of the gradient away from centre
    r = np.array([11e-6, -7e-6, 23e-6])
    _, grad, _ = core.quadrupole_potential(SETTINGS, BE, r)
    h = 1e-9
    for k in range(3):
        dp = r.copy()
        dm = r.copy()
        dp[k] += h
        dm[k] -= h
        fd = (
            core.quadrupole_potential(SETTINGS, BE, dp)[0]
            - core.quadrupole_potential(SETTINGS, BE, dm)[0]
        ) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-12)


def test_static_displacement_values():
    shift = core.displacement_from_field(SETTINGS, BE, [0.0, 0.0, 500.0])
    assert shift[2] * 1e6 == pytest.approx(20.059555164, rel=1e-9)
    shift = core.displacement_from_field(SETTINGS, BE, [500.0, 0.0, 0.0])
    assert shift[0] * 1e6 == pytest.approx(-40.119110328, rel=1e-9)


@given(st.floats(-1e3, 1e3), st.floats(2.5, 8.0))
def test_displacement_linearity_and_field_independence(E, B):
    trap = TrapSettings(B=B, omega_z=TWOPI * 2.6e6)
    base = core.displacement_from_field(trap, BE, [E, 0.0, 0.0])
    doubled = core.displacement_from_field(trap, BE, [2 * E, 0.0, 0.0])
    assert np.allclose(doubled, 2 * base)
    # B provides stability, not a static restoring force
    ref = core.displacement_from_field(SETTINGS, BE, [E, 0.0, 0.0])
    assert np.allclose(base, ref)


def test_radial_axial_displacement_ratio():
    shift = core.displacement_from_field(SETTINGS, BE, [100.0, 100.0, 100.0])
    assert shift[0] == pytest.approx(-2.0 * shift[2], rel=1e-12)
    assert shift[1] == pytest.approx(shift[0], rel=1e-12)


def test_field_sensitivity():
    bound = core.field_sensitivity(SETTINGS, BE, pixel=0.5e-6, magnification=20.0)
    assert bound == pytest.approx(0.311572213, rel=1e-9)
    radial = core.field_sensitivity(
        SETTINGS, BE, pixel=0.5e-6, magnification=20.0, axis="x"
    )
    assert radial == pytest.approx(bound / 2.0, rel=1e-12)
    ref = TrapSettings(B=3.0, omega_z=TWOPI * 1.0e6)
    assert core.field_sensitivity(ref, BE, 0.5e-6, 20.0) == pytest.approx(
        0.046090564, rel=1e-8
    )


def test_depth_of_field():
    assert core.depth_of_field(313e-9, 0.55) * 1e6 == pytest.approx(
        1.034710744, rel=1e-9
    )


def test_species_validation():
    with pytest.raises(ValueError):
        IonSpecies(charge=0, mass=1e-26)
    with pytest.raises(ValueError):
        IonSpecies(charge=1, mass=-1.0)
    assert BE.q > 0
    assert BE.mass == pytest.approx(9.0121831 * 1.66053906660e-27, rel=1e-4)
