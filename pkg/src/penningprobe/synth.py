"""Synthetic measurement generation: the forward oracle for every
inverse procedure in the package.

A ScenarioSpec pins the ground truth — trap, stray field, dipole map,
noise parameters, camera — plus one integer seed.  Every oracle output
is a pure function of (scenario, inputs): random draws use hash-derived
sub-seeds, so regenerating any dataset is byte-identical and generating
different datasets in any order never perturbs the streams.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from penningprobe import core, noise, sensing, surfacecharge


def _subseed(seed: int, tag: str, *parts) -> np.random.Generator:
    """Deterministic per-draw generator from canonical input encodings."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    h.update(tag.encode())
    for p in parts:
        if isinstance(p, float):
            h.update(float(p).hex().encode())
        elif isinstance(p, (tuple, list, np.ndarray)):
            for v in np.asarray(p, dtype=float).reshape(-1):
                h.update(float(v).hex().encode())
        else:
            h.update(str(p).encode())
        h.update(b"|")
    return np.random.default_rng(int.from_bytes(h.digest()[:8], "big"))


@dataclass
class ScenarioSpec:
    """Ground truth for synthetic measurements."""

    trap: object  # electrodes.TrapModel
    omega_ref: float = 2 * np.pi * 1e6
    center: tuple = (0.0, 152e-6, 0.0)
    stray_field: tuple = (0.0, 0.0, 0.0)  # uniform grad_phi_stray, V/m
    dipole_grid: surfacecharge.DipoleGrid | None = None
    noise_params: dict = field(default_factory=dict)  # mode -> NoiseModelParams
    camera: sensing.CameraGeometry = None
    region: tuple = (-400e-6, 400e-6, 10e-6, 390e-6, -400e-6, 400e-6)
    omega0_line: tuple = (0.0, (0.0, 0.0, 0.0))  # spin frequency: value at center, gradient
    rabi_line: tuple = (0.0, (0.0, 0.0, 0.0))  # drive rate: value at center, gradient
    seed: int = 0

    def __post_init__(self):
        if self.camera is None:
            self.camera = sensing.CameraGeometry(focus_height=self.center[1])
        self.center = tuple(float(c) for c in self.center)
        self.stray_field = tuple(float(c) for c in self.stray_field)
        if len(self.region) != 6:
            raise ValueError("region must be (x1, x2, y1, y2, z1, z2)")
        if not self.region[2] > 0:
            raise ValueError("modeled region must stay above the trap plane")

    def in_region(self, r) -> bool:
        x1, x2, y1, y2, z1, z2 = self.region
        return bool(
            x1 <= r[0] <= x2 and y1 <= r[1] <= y2 and z1 <= r[2] <= z2
        )

    def stray_at(self, r) -> np.ndarray:
        """Total stray gradient grad_phi_stray at r (V/m)."""
        out = np.array(self.stray_field, dtype=float)
        if self.dipole_grid is not None:
            # the dipole layer contributes its field E = -grad phi
            out = out - surfacecharge.grid_field(self.dipole_grid, np.asarray(r))
        return out


def equilibrium_position(scenario: ScenarioSpec, E_applied, f_ax: float):
    """Solve E_applied = grad_phi_stray(r) + f^2 M (r - r0) for r."""
    species = scenario.trap.species
    Mdiag = sensing.curvature_diagonal(species, f_ax * scenario.omega_ref)
    r0 = np.array(scenario.center)
    E = np.asarray(E_applied, dtype=float)
    if scenario.dipole_grid is None:
        return r0 + (E - np.array(scenario.stray_field)) / Mdiag

    # the dipole layer's field gradient can rival the trap curvature, so
    # plain fixed-point iteration need not contract; use a damped solver
    y_floor = 1e-6  # keep probes off the y = 0 plane during the solve

    def balance(r):
        probe = np.array(r)
        probe[1] = max(probe[1], y_floor)
        return E - scenario.stray_at(probe) - Mdiag * (r - r0)

    sol = optimize.root(balance, r0, method="hybr", options={"xtol": 1e-14})
    return sol.x


def camera_oracle(scenario: ScenarioSpec, E_applied, f_ax: float) -> sensing.PositionReading:
    """Pixel-quantized reading of the ion's equilibrium position.

    Lateral coordinates are floor-quantized to pixels; the width comes
    from the defocus curve with a deterministic +/-1 px dither keyed to
    (seed, applied field, scale factor).  An equilibrium outside the
    modeled region is flagged lost.
    """
    if not f_ax > 0:
        raise ValueError("f_ax must be positive")
    r = equilibrium_position(scenario, E_applied, f_ax)
    cam = scenario.camera
    rng = _subseed(scenario.seed, "camera-width", E_applied, f_ax)
    dither = rng.uniform(-1.0, 1.0)
    return sensing.PositionReading(
        f_ax=f_ax,
        E_applied=tuple(np.asarray(E_applied, dtype=float)),
        px=cam.pixel_of(r[0]),
        pz=cam.pixel_of(r[2]),
        width=max(cam.width_at(r[1]) + dither, 0.1),
        lost=not scenario.in_region(r),
    )


def make_camera_oracle(scenario: ScenarioSpec):
    """Bind a scenario into the (E_applied, f_ax) -> reading callable."""

    def oracle(E_applied, f_ax):
        return camera_oracle(scenario, E_applied, f_ax)

    return oracle


def field_samples(
    scenario: ScenarioSpec,
    heights,
    n_samples: int,
    noise_frac: float = 0.05,
    sigma_floor: float = 1e-3,
):
    """Noisy stray-field map: samples at fixed heights over the region.

    Positions are uniform over the lateral extent of the modeled region,
    cycling through `heights`; the value is the total stray E field with
    per-axis Gaussian noise of scale max(noise_frac * |E|, sigma_floor).
    """
    heights = [float(h) for h in heights]
    if not heights or min(heights) <= 0:
        raise ValueError("heights must be positive (above the trap plane)")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x1, x2, _, _, z1, z2 = scenario.region
    rng = _subseed(scenario.seed, "field-sample-positions", heights, float(n_samples))
    out = []
    for k in range(int(n_samples)):
        r = np.array([rng.uniform(x1, x2), heights[k % len(heights)], rng.uniform(z1, z2)])
        E = -scenario.stray_at(r)
        sig = np.maximum(noise_frac * np.abs(E), sigma_floor)
        wiggle = _subseed(scenario.seed, "field-noise", r).normal(0.0, 1.0, 3)
        out.append(
            surfacecharge.FieldSample(position=tuple(r), E=E + sig * wiggle, sigma_E=sig)
        )
    return out


def phonon_series(
    scenario: ScenarioSpec,
    mode: str,
    position,
    omega: float,
    wait_times,
    shots: int,
    detached=(),
):
    """Phonon-growth dataset and its fitted HeatingRecord.

    The mean phonon number grows linearly at the scenario's model rate;
    each point is a Poisson-sampled estimate over `shots` repetitions.
    Returns (record, wait_times, nbar_estimates, nbar_sigmas).
    """
    wait_times = np.asarray(wait_times, dtype=float)
    if np.unique(wait_times).size < 2:
        raise ValueError("need at least 2 distinct wait times")
    if shots < 1:
        raise ValueError("shots must be positive")
    if mode not in scenario.noise_params:
        raise KeyError(f"scenario has no noise parameters for mode {mode!r}")
    params = scenario.noise_params[mode]
    rate_true, _ = noise.model_heating_rate(
        scenario.trap, params, mode, position, omega, detached=detached
    )
    rng = _subseed(scenario.seed, "phonon", mode, position, omega, wait_times, shots)
    means = rate_true * wait_times
    counts = rng.poisson(means * shots)
    nbar = counts / shots
    sigma = np.sqrt(np.maximum(counts, 1.0)) / shots
    if wait_times.size == 2:  # exact two-point slope; fit needs >= 3
        dt = wait_times[1] - wait_times[0]
        rate = (nbar[1] - nbar[0]) / dt
        sigma_rate = float(np.hypot(sigma[0], sigma[1]) / abs(dt))
    else:
        fit = sensing.fit_gradient(wait_times, nbar, sigma)
        rate, sigma_rate = fit.slope, fit.sigma_slope
    record = noise.HeatingRecord(
        mode=mode,
        position=tuple(float(c) for c in position),
        omega=omega,
        rate=rate,
        sigma_rate=sigma_rate,
        detached=tuple(detached),
    )
    return record, wait_times, nbar, sigma


def rabi_oracle(
    scenario: ScenarioSpec,
    position,
    abscissa,
    shots: int,
    kind: str = "frequency",
    pulse_time: float | None = None,
) -> sensing.RabiScan:
    """Binomially sampled Rabi scan at a position-dependent working point.

    The spin frequency and drive rate vary linearly across the region:
    omega0(r) = omega0_c + g . (r - r0), likewise the Rabi rate.
    """
    r = np.asarray(position, dtype=float)
    d = r - np.array(scenario.center)
    w0_c, w0_grad = scenario.omega0_line
    om_c, om_grad = scenario.rabi_line
    omega0 = float(w0_c + np.dot(np.asarray(w0_grad, dtype=float), d))
    rabi = float(om_c + np.dot(np.asarray(om_grad, dtype=float), d))
    abscissa = np.asarray(abscissa, dtype=float)
    if kind == "frequency":
        if not (pulse_time and pulse_time > 0):
            raise ValueError("frequency scans need a positive pulse_time")
        p = sensing.rabi_probability(abscissa - omega0, rabi, pulse_time)
    elif kind == "duration":
        p = sensing.rabi_probability(0.0, rabi, abscissa)
    else:
        raise ValueError("kind must be 'frequency' or 'duration'")
    rng = _subseed(
        scenario.seed, "rabi", position, abscissa, shots, kind, pulse_time or 0.0
    )
    counts = rng.binomial(shots, np.clip(p, 0.0, 1.0))
    return sensing.RabiScan(
        kind=kind,
        abscissa=abscissa,
        p_up=counts / shots,
        shots=np.full(abscissa.size, shots),
        pulse_time=pulse_time,
    )
