"""Voltage solver and transport waveform behavior."""

import numpy as np
import pytest

from penningprobe import core, transport
from penningprobe.core import TrapSettings, beryllium_9
from penningprobe.electrodes import default_trap_model
from penningprobe.transport import (
    PotentialTarget,
    SlewBudgetError,
    equilibrium_position,
    field_target,
    make_waveform,
    quadrupole_target,
    realized_potential,
    solve_potential,
)

TWOPI = 2.0 * np.pi
TRAP = default_trap_model()
BE = beryllium_9()
CENTER = (0.0, 100e-6, 0.0)
SETTINGS_1MHZ = TrapSettings(B=3.0, omega_z=TWOPI * 1e6, center=CENTER)


def test_zero_target_gives_zero_voltages():
    target = PotentialTarget(position=CENTER)
    for vmax in (10.0, np.inf):
        sol = solve_potential(TRAP, target, V_max=vmax)
        assert np.allclose(sol.vector(TRAP), 0.0, atol=1e-12)
        assert sol.residual == pytest.approx(0.0, abs=1e-15)


def test_quadrupole_target_realized():
    target = quadrupole_target(SETTINGS_1MHZ, BE)
    sol = solve_potential(TRAP, target)
    assert sol.feasible
    assert np.abs(sol.vector(TRAP)).max() <= 10.0
    assert np.abs(sol.gradient_error).max() < 0.1  # V/m
    scale = np.abs(target.hessian).max()
    assert np.abs(sol.hessian_error).max() < 0.02 * scale
    # realized curvature actually traps at the requested frequency
    _, _, hess = realized_potential(TRAP, sol.voltages, [CENTER])
    wz = np.sqrt(hess[0, 2, 2] * BE.q / BE.mass)
    assert wz == pytest.approx(TWOPI * 1e6, rel=1e-3)


def test_solution_linearity_unbounded():
    target = quadrupole_target(SETTINGS_1MHZ, BE)
    base = solve_potential(TRAP, target, V_max=np.inf)
    scaled_target = PotentialTarget(
        position=target.position, gradient=3.0 * target.gradient, hessian=3.0 * target.hessian
    )
    scaled = solve_potential(TRAP, scaled_target, V_max=np.inf)
    np.testing.assert_allclose(scaled.vector(TRAP), 3.0 * base.vector(TRAP), rtol=1e-9)


def test_field_solution_displaces_ion_as_predicted():
    settings = TrapSettings(B=3.0, omega_z=TWOPI * 2.6e6, center=CENTER)
    E = np.array([0.0, 0.0, 50.0])
    sol = solve_potential(TRAP, field_target(CENTER, E))
    assert sol.feasible
    E_real = -realized_potential(TRAP, sol.voltages, [CENTER])[1][0]

    def quad(r):
        _, grad, hess = core.quadrupole_potential(settings, BE, r)
        return grad, hess

    r_eq = equilibrium_position(TRAP, sol.voltages, CENTER, extra=quad)
    predicted = core.displacement_from_field(settings, BE, E_real)
    np.testing.assert_allclose(r_eq - np.asarray(CENTER), predicted, rtol=5e-3, atol=1e-9)
    # 50 V/m along z at 2.6 MHz sits at about +2 um
    assert predicted[2] == pytest.approx(2.006e-6, rel=1e-3)


def test_infeasible_target_flagged_not_raised():
    sol = solve_potential(TRAP, field_target(CENTER, [100.0, 0.0, 0.0]), V_max=1e-4)
    assert not sol.feasible
    assert np.abs(sol.gradient_error).max() > 1.0
    assert np.isfinite(sol.residual)


def test_waveform_translation_duration_and_spacing():
    wf = make_waveform(
        TRAP,
        [
            (CENTER, SETTINGS_1MHZ),
            ((0.0, 100e-6, 100e-6), TrapSettings(B=3.0, omega_z=TWOPI * 1e6)),
        ],
        speed=0.02,
    )
    assert wf.duration == pytest.approx(5e-3, rel=1e-12)  # 100 um at 2 cm/s
    assert 1e-3 <= wf.duration <= 8e-3
    steps = np.linalg.norm(np.diff(wf.positions, axis=0), axis=1)
    assert steps.max() <= 1e-6 + 1e-12
    assert len(wf.samples) == len(wf.positions) == 101
    # voltage sequences are smooth: bounded second differences
    v = wf.voltage_matrix()
    assert np.abs(np.diff(v, n=2, axis=0)).max() < 0.05


def test_single_point_path_is_constant():
    wf = make_waveform(TRAP, [(CENTER, SETTINGS_1MHZ)])
    assert wf.duration == 0.0
    assert len(wf.samples) == 1


def test_waveform_reversal_symmetry():
    path = [
        (CENTER, SETTINGS_1MHZ),
        ((0.0, 100e-6, 30e-6), SETTINGS_1MHZ),
    ]
    fwd = make_waveform(TRAP, path, speed=0.04)
    rev = make_waveform(TRAP, path[::-1], speed=0.04)
    np.testing.assert_allclose(rev.positions, fwd.positions[::-1], atol=0)
    np.testing.assert_allclose(rev.voltage_matrix(), fwd.voltage_matrix()[::-1], atol=0)
    np.testing.assert_allclose(
        rev.times, fwd.duration - fwd.times[::-1], atol=1e-18
    )


def test_waveform_equilibria_track_commanded_path():
    path = [
        (CENTER, SETTINGS_1MHZ),
        ((0.0, 100e-6, 10e-6), SETTINGS_1MHZ),
    ]
    wf = make_waveform(TRAP, path, speed=0.02)
    for p, sample in zip(wf.positions, wf.samples):
        r_eq = equilibrium_position(TRAP, sample.voltages, p)
        assert np.linalg.norm(r_eq - p) < 0.1e-6


def test_excessive_speed_rejected():
    path = [
        (CENTER, SETTINGS_1MHZ),
        ((0.0, 100e-6, 20e-6), SETTINGS_1MHZ),
    ]
    with pytest.raises(SlewBudgetError) as err:
        make_waveform(TRAP, path, speed=5.0)
    assert err.value.electrode_id in TRAP.electrode_ids
    assert err.value.sample_index >= 1


def test_step_limit_enforced():
    with pytest.raises(ValueError, match="1 um"):
        make_waveform(TRAP, [(CENTER, SETTINGS_1MHZ)], step=2e-6)


def test_realized_potential_is_harmonic():
    target = quadrupole_target(SETTINGS_1MHZ, BE)
    sol = solve_potential(TRAP, target)
    rng = np.random.default_rng(3)
    pts = np.column_stack(
        [
            rng.uniform(-200e-6, 200e-6, 200),
            rng.uniform(20e-6, 300e-6, 200),
            rng.uniform(-200e-6, 200e-6, 200),
        ]
    )
    _, _, hess = realized_potential(TRAP, sol.voltages, pts)
    trace = np.abs(np.trace(hess, axis1=1, axis2=2))
    scale = np.abs(hess).max(axis=(1, 2))
    assert np.all(trace <= 1e-9 * scale)
