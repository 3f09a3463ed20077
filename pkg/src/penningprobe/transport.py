"""Electrode voltages for target potentials, and transport waveforms.

The solver is a bounded linear least-squares fit of the electrode basis
to a requested gradient and Hessian at one point (the potential offset
is physically irrelevant and left free).  Waveforms chain solutions
along a path resampled in steps of at most 1 um, with the per-sample
voltage slew checked against what the RC filters can pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from penningprobe import core, electrodes
from penningprobe.core import IonSpecies, TrapSettings
from penningprobe.electrodes import TrapModel

TWOPI = 2.0 * np.pi

# index pairs of the independent Hessian entries; off-diagonals carry
# sqrt(2) so the objective counts both symmetric partners
_HESS_COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_HESS_WEIGHTS = (1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0))


@dataclass(frozen=True)
class PotentialTarget:
    """Desired local expansion of the potential at one point."""

    position: tuple
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hessian: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float))
        hess = np.asarray(self.hessian, dtype=float)
        if not np.allclose(hess, hess.T, atol=0):
            raise ValueError("target Hessian must be symmetric")
        object.__setattr__(self, "hessian", hess)


def quadrupole_target(settings: TrapSettings, species: IonSpecies) -> PotentialTarget:
    """Trapping target: zero field, ideal quadrupole curvature at r0."""
    scale = species.mass * settings.omega_z**2 / species.q
    return PotentialTarget(
        position=settings.center,
        gradient=np.zeros(3),
        hessian=np.diag(core.QUADRUPOLE_CURVATURES * scale),
    )


def field_target(position, E) -> PotentialTarget:
    """Pure-field target: E at the point, no curvature."""
    return PotentialTarget(
        position=position, gradient=-np.asarray(E, dtype=float), hessian=np.zeros((3, 3))
    )


@dataclass
class VoltageSolution:
    """One set of electrode voltages with its realization errors."""

    voltages: dict
    residual: float  # rms potential mismatch over the probe region, volts
    gradient_error: np.ndarray  # realized - target, V/m
    hessian_error: np.ndarray  # realized - target, V/m^2
    feasible: bool

    def vector(self, trap: TrapModel) -> np.ndarray:
        return np.array([self.voltages[eid] for eid in trap.electrode_ids])


def realized_potential(trap: TrapModel, voltages, points):
    """Potential, gradient and Hessian of a voltage set at given points.

    voltages: map electrode id -> volts (missing ids mean 0 V).
    Returns (phi (n,), grad (n, 3), hess (n, 3, 3)).
    """
    vals, grads, hesss = electrodes.evaluate_basis(trap, points)
    v = np.array([voltages.get(eid, 0.0) for eid in trap.electrode_ids])
    return vals @ v, np.einsum("nkd,k->nd", grads, v), np.einsum("nkij,k->nij", hesss, v)


def _design_rows(trap: TrapModel, target: PotentialTarget, sigma_g, sigma_h):
    _, grads, hesss = electrodes.evaluate_basis(trap, [target.position])
    rows = np.empty((9, len(trap.electrode_ids)))
    rhs = np.empty(9)
    rows[:3] = grads[0].T / sigma_g
    rhs[:3] = target.gradient / sigma_g
    for k, ((i, j), w) in enumerate(zip(_HESS_COMPONENTS, _HESS_WEIGHTS)):
        rows[3 + k] = hesss[0, :, i, j] * (w / sigma_h)
        rhs[3 + k] = target.hessian[i, j] * (w / sigma_h)
    return rows, rhs


def solve_potential(
    trap: TrapModel,
    target: PotentialTarget,
    weights: dict | None = None,
    V_max: float = 10.0,
    ridge: float = 0.0,
    probe_radius: float = 20e-6,
    gradient_tolerance: float = 0.1,
) -> VoltageSolution:
    """Least-squares voltages realizing a target expansion at one point.

    weights: optional {"gradient": V/m, "hessian": V/m^2} scales that set
    the trade-off between field and curvature errors.  The hessian scale
    defaults to 0.5% of the larger of the target curvature and a 1 MHz
    trap curvature.  V_max bounds every voltage; ridge > 0 adds Tikhonov
    damping of the voltage vector.  An unreachable target is returned
    with feasible=False and best-effort errors, not raised.
    """
    if V_max <= 0:
        raise ValueError("V_max must be positive")
    if target.position[1] <= 0:
        raise ValueError("target must be above the trap plane")
    weights = weights or {}
    curvature_floor = (
        trap.species.mass * (TWOPI * 1e6) ** 2 / abs(trap.species.q)
    )
    sigma_g = weights.get("gradient", 0.01)
    sigma_h = weights.get(
        "hessian", 0.005 * max(np.abs(target.hessian).max(), curvature_floor)
    )
    rows, rhs = _design_rows(trap, target, sigma_g, sigma_h)
    n = rows.shape[1]
    if ridge > 0:
        rows = np.vstack([rows, np.sqrt(ridge) * np.eye(n)])
        rhs = np.concatenate([rhs, np.zeros(n)])
    if np.isinf(V_max):
        v, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    else:
        v = lsq_linear(rows, rhs, bounds=(-V_max, V_max)).x

    voltages = dict(zip(trap.electrode_ids, v))
    r0 = np.asarray(target.position)
    _, grad, hess = realized_potential(trap, voltages, [r0])
    grad_err = grad[0] - target.gradient
    hess_err = hess[0] - target.hessian

    # rms potential mismatch (offset-free) over a small cube around r0
    offs = probe_radius * np.array([-1.0, 0.0, 1.0])
    probe = r0 + np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), -1).reshape(-1, 3)
    phi, _, _ = realized_potential(trap, voltages, probe)
    rel = probe - r0
    phi_t = rel @ target.gradient + 0.5 * np.einsum(
        "ni,ij,nj->n", rel, target.hessian, rel
    )
    diff = phi - phi_t
    residual = float(np.sqrt(np.mean((diff - diff.mean()) ** 2)))

    return VoltageSolution(
        voltages=voltages,
        residual=residual,
        gradient_error=grad_err,
        hessian_error=hess_err,
        feasible=bool(np.abs(grad_err).max() <= gradient_tolerance),
    )


def equilibrium_position(trap: TrapModel, voltages, guess, extra=None, steps: int = 25):
    """Newton search for the stationary point of the realized potential.

    extra: optional callable r -> (gradient, hessian) added to the
    electrode potential (e.g. an ideal quadrupole).  Returns the
    position; raises if the iteration does not settle.
    """
    r = np.asarray(guess, dtype=float).copy()
    for _ in range(steps):
        _, grad, hess = realized_potential(trap, voltages, [r])
        g, h = grad[0], hess[0]
        if extra is not None:
            ge, he = extra(r)
            g = g + ge
            h = h + he
        step = np.linalg.solve(h, -g)
        limit = 20e-6  # keep Newton honest far from the solution
        norm = np.linalg.norm(step)
        if norm > limit:
            step *= limit / norm
        r += step
        if norm < 1e-12:
            return r
    raise RuntimeError("equilibrium search did not converge")


class SlewBudgetError(ValueError):
    """A waveform step asks the filtered line to move faster than it can."""

    def __init__(self, electrode_id, sample_index, rate, budget):
        self.electrode_id = electrode_id
        self.sample_index = sample_index
        super().__init__(
            f"electrode {electrode_id!r} at sample {sample_index}: "
            f"{rate:.3g} V/s exceeds filter budget {budget:.3g} V/s"
        )


@dataclass
class Waveform:
    """Voltage samples along a transport path."""

    times: np.ndarray  # seconds, starting at 0
    positions: np.ndarray  # (n, 3) commanded equilibrium positions
    samples: list  # VoltageSolution per position
    electrode_ids: tuple
    duration: float

    def voltage_matrix(self) -> np.ndarray:
        return np.array(
            [[s.voltages[eid] for eid in self.electrode_ids] for s in self.samples]
        )


def _resample_path(path, step):
    """Equal sub-steps per segment (symmetric under path reversal)."""
    positions = [np.asarray(p, dtype=float) for p, _ in path]
    omegas = [s.omega_z for _, s in path]
    pts = [positions[0]]
    wz = [omegas[0]]
    for a, b, wa, wb in zip(positions, positions[1:], omegas, omegas[1:]):
        seg = np.linalg.norm(b - a)
        n_sub = max(1, int(np.ceil(seg / step - 1e-9)))
        for k in range(1, n_sub + 1):
            t = k / n_sub
            pts.append(a + t * (b - a))
            wz.append(wa + t * (wb - wa))
    return np.array(pts), np.array(wz)


def make_waveform(
    trap: TrapModel,
    path,
    step: float = 1e-6,
    speed: float = 0.02,
    slew_tolerance: float = 0.05,
    V_max: float = 10.0,
    weights: dict | None = None,
) -> Waveform:
    """Transport waveform along a piecewise-linear path of trap centers.

    path: list of (position, TrapSettings) waypoints; positions and the
    axial frequency are interpolated linearly between them.  speed (m/s)
    sets the duration.  The filter budget allows a per-electrode slew of
    slew_tolerance/(R C) — the voltage lag tolerated across the RC.
    """
    if not path:
        raise ValueError("path must contain at least one waypoint")
    if step > 1e-6 + 1e-12:
        raise ValueError("step must be at most 1 um")
    if speed <= 0:
        raise ValueError("speed must be positive")
    b_field = path[0][1].B
    species = trap.species

    pts, wzs = _resample_path(path, step)
    samples = []
    for p, wz in zip(pts, wzs):
        settings = TrapSettings(B=b_field, omega_z=wz, center=tuple(p))
        samples.append(
            solve_potential(
                trap, quadrupole_target(settings, species), weights=weights, V_max=V_max
            )
        )

    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    times = np.concatenate([[0.0], np.cumsum(seg / speed)])
    duration = float(times[-1])

    budgets = {
        e.id: slew_tolerance / (trap.filters[e.group].R * trap.filters[e.group].C)
        for e in trap.electrodes
    }
    for k in range(1, len(samples)):
        dt = times[k] - times[k - 1]
        if dt == 0.0:
            continue
        for eid in trap.electrode_ids:
            rate = abs(samples[k].voltages[eid] - samples[k - 1].voltages[eid]) / dt
            if rate > budgets[eid]:
                raise SlewBudgetError(eid, k, rate, budgets[eid])

    return Waveform(
        times=times,
        positions=pts,
        samples=samples,
        electrode_ids=trap.electrode_ids,
        duration=duration,
    )
