"""Heating-rate models over distance and frequency, and their fits.

Measured heating rates are decomposed into a thermal (Johnson) part
computed from the wiring model, a surface term C (d/d0)^-beta, and a
technical part: voltage noise coherent across all electrodes for the
radial modes, a flat pickup floor for the axial mode.  The fits keep
the Johnson part fixed — it is not a free parameter — and solve for the
remaining amplitudes and the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from penningprobe import core, electrodes

PIVOT_DISTANCE = 100e-6  # m


@dataclass(frozen=True)
class HeatingRecord:
    """One measured heating rate (quanta/s) of one mode at one position."""

    mode: str
    position: tuple  # (x, y, z) in m
    omega: float  # mode angular frequency, rad/s
    rate: float
    sigma_rate: float
    distance: float | None = None  # m; defaults to the height above the plane
    detached: tuple = ()  # electrode ids floating during the measurement

    def __post_init__(self):
        if self.mode not in core.MODE_LABELS:
            raise ValueError(f"unknown mode {self.mode!r}")
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 3:
            raise ValueError("position must be a 3-vector")
        object.__setattr__(self, "position", pos)
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.sigma_rate > 0:
            raise ValueError("sigma_rate must be positive")
        if self.distance is None:
            object.__setattr__(self, "distance", pos[1])
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        object.__setattr__(self, "detached", tuple(self.detached))


def spectrum_for(trap: electrodes.TrapModel, mode: str, omega: float):
    """Full mode spectrum consistent with one known mode frequency.

    The magnetic field pins the cyclotron sum, so a single measured mode
    frequency determines the other two.
    """
    species = trap.species
    omega_c = species.q * trap.B / species.mass
    if mode == core.AXIAL:
        settings = core.TrapSettings(B=trap.B, omega_z=omega)
        return core.mode_frequencies(species, settings)
    if mode == core.CYCLOTRON:
        other = omega_c - omega
        if not 0 < other <= omega:
            raise ValueError("cyclotron frequency must lie in [omega_c/2, omega_c)")
    elif mode == core.MAGNETRON:
        other = omega_c - omega
        if not 0 < omega <= other:
            raise ValueError("magnetron frequency must lie in (0, omega_c/2]")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    omega_z = np.sqrt(2.0 * omega * other)
    return core.mode_frequencies(
        species, core.TrapSettings(B=trap.B, omega_z=omega_z)
    )


@dataclass
class NoiseModelParams:
    """Fitted noise decomposition for one mode family.

    C is the surface-term rate (quanta/s) at the pivot distance;
    S_V_corr (V^2/Hz) drives the radial correlated term and n_EMI
    (quanta/s) is the axial pickup floor.  covariance is 3x3 over the
    parameters named in `fitted`.
    """

    C: float
    beta: float
    S_V_corr: float = 0.0
    n_EMI: float = 0.0
    pivot: float = PIVOT_DISTANCE
    covariance: np.ndarray | None = None
    fitted: tuple = ()
    converged: bool = True

    def sigma(self, name: str) -> float:
        if self.covariance is None or name not in self.fitted:
            raise ValueError(f"no fitted uncertainty for {name!r}")
        return float(np.sqrt(self.covariance[self.fitted.index(name)][self.fitted.index(name)]))


def surface_rate(params: NoiseModelParams, distance) -> float:
    """Power-law surface term C (d/d0)^-beta."""
    return params.C * (np.asarray(distance) / params.pivot) ** (-params.beta)


def johnson_heating_rate(trap, mode, position, omega, detached=()) -> float:
    """Heating rate from the thermal noise of the wiring alone."""
    spectrum = spectrum_for(trap, mode, omega)
    geom = core.mode_geometry(mode, spectrum, trap.species)
    psd = [
        electrodes.johnson_field_psd(trap, position, omega, ax, detached)
        for ax in "xyz"
    ]
    return core.heating_rate_from_noise(geom, spectrum, trap.species, psd)


def correlated_rate_per_psd(trap, mode, position, omega, detached=()) -> float:
    """Heating rate per unit coherent voltage PSD (quanta/s per V^2/Hz)."""
    spectrum = spectrum_for(trap, mode, omega)
    geom = core.mode_geometry(mode, spectrum, trap.species)
    inv_d2 = [
        electrodes.correlated_field(trap, position, omega, ax, detached) ** 2
        for ax in "xyz"
    ]
    return core.heating_rate_from_noise(geom, spectrum, trap.species, inv_d2)


def model_heating_rate(
    trap: electrodes.TrapModel,
    params: NoiseModelParams,
    mode: str,
    position,
    omega: float,
    distance: float | None = None,
    detached=(),
):
    """Predicted rate and its additive breakdown for one configuration.

    Returns (total, breakdown); the total is exactly the sum of the
    breakdown values.  Radial modes carry a correlated-voltage term, the
    axial mode a flat pickup floor.
    """
    position = tuple(float(c) for c in position)
    d = position[1] if distance is None else float(distance)
    breakdown = {
        "johnson": johnson_heating_rate(trap, mode, position, omega, detached),
        "surface": float(surface_rate(params, d)),
    }
    if mode == core.AXIAL:
        breakdown["emi"] = params.n_EMI
    else:
        breakdown["correlated"] = params.S_V_corr * correlated_rate_per_psd(
            trap, mode, position, omega, detached
        )
    return sum(breakdown.values()), breakdown


def predicted_rate(trap, params, record: HeatingRecord) -> float:
    total, _ = model_heating_rate(
        trap,
        params,
        record.mode,
        record.position,
        record.omega,
        record.distance,
        record.detached,
    )
    return total


def fit_distance_scaling(
    trap: electrodes.TrapModel,
    records,
    pivot: float = PIVOT_DISTANCE,
    beta_range=(1.0, 8.0),
) -> NoiseModelParams:
    """Weighted fit of (C, beta, technical amplitude) to rate-vs-distance data.

    The exponent is scanned on a deterministic grid and polished with a
    bounded 1-d search; at each candidate the two amplitudes follow from
    a nonnegative linear solve, so the result does not depend on a
    starting guess.
    """
    records = list(records)
    if len(records) < 4:
        raise ValueError("need at least 4 records to fit 3 parameters")
    modes = {r.mode for r in records}
    if len(modes) != 1:
        raise ValueError(f"records mix modes {sorted(modes)}; fit one at a time")
    mode = modes.pop()
    axial = mode == core.AXIAL

    d = np.array([r.distance for r in records])
    y = np.array([r.rate for r in records])
    sig = np.array([r.sigma_rate for r in records])
    n_j = np.array(
        [
            johnson_heating_rate(trap, mode, r.position, r.omega, r.detached)
            for r in records
        ]
    )
    if axial:
        h = np.ones(len(records))
    else:
        h = np.array(
            [
                correlated_rate_per_psd(trap, mode, r.position, r.omega, r.detached)
                for r in records
            ]
        )
    target = (y - n_j) / sig

    def amplitudes(beta):
        g = (d / pivot) ** (-beta)
        A = np.column_stack([g / sig, h / sig])
        x, rnorm = optimize.nnls(A, target)
        return x, rnorm**2

    grid = np.arange(beta_range[0], beta_range[1] + 1e-9, 0.125)
    costs = np.array([amplitudes(b)[1] for b in grid])
    b0 = grid[int(np.argmin(costs))]
    lo = max(beta_range[0], b0 - 0.25)
    hi = min(beta_range[1], b0 + 0.25)
    res = optimize.minimize_scalar(
        lambda b: amplitudes(b)[1],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    beta = float(res.x)
    (C, amp), cost = amplitudes(beta)
    converged = bool(res.success) and beta_range[0] + 1e-6 < beta < beta_range[1] - 1e-6

    g = (d / pivot) ** (-beta)
    J = np.column_stack(
        [g / sig, -C * np.log(d / pivot) * g / sig, h / sig]
    )  # d/d(C, beta, amp)
    # equilibrate columns before inverting: the amplitude parameters live
    # on wildly different scales (V^2/Hz vs quanta/s)
    col = np.linalg.norm(J, axis=0)
    col[col == 0] = 1.0
    covariance = np.linalg.pinv((J / col).T @ (J / col)) / np.outer(col, col)
    if not np.all(np.isfinite(covariance)):
        converged = False

    return NoiseModelParams(
        C=float(C),
        beta=beta,
        S_V_corr=0.0 if axial else float(amp),
        n_EMI=float(amp) if axial else 0.0,
        pivot=pivot,
        covariance=covariance,
        fitted=("C", "beta", "n_EMI" if axial else "S_V_corr"),
        converged=converged,
    )


@dataclass
class FrequencyScaling:
    """Power-law spectrum S(omega) = S_ref (omega/omega_ref)^-alpha."""

    alpha: float
    S_ref: float
    omega_ref: float
    sigma_alpha: float
    sigma_S_ref: float
    rejected: tuple = ()  # indices of nonpositive inputs left out of the fit
    n_used: int = 0


def fit_frequency_scaling(omega, S, sigma, omega_ref=None) -> FrequencyScaling:
    """Weighted log-log fit of a power law to PSD samples.

    Nonpositive PSD values cannot enter the log fit; they are dropped
    and their indices reported in the result.
    """
    omega = np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if omega.shape != S.shape or S.shape != sigma.shape or omega.ndim != 1:
        raise ValueError("omega, S, sigma must be 1-d arrays of equal length")
    if np.any(omega <= 0) or np.any(sigma <= 0):
        raise ValueError("omega and sigma must be positive")
    keep = S > 0
    rejected = tuple(int(i) for i in np.nonzero(~keep)[0])
    if keep.sum() < 3:
        raise ValueError("need at least 3 positive PSD values")
    w, s, sg = omega[keep], S[keep], sigma[keep]
    if omega_ref is None:
        omega_ref = float(np.exp(np.mean(np.log(w))))
    x = np.log(w / omega_ref)
    yv = np.log(s)
    sy = sg / s
    X = np.column_stack([np.ones_like(x), x]) / sy[:, None]
    b = yv / sy
    coef, *_ = np.linalg.lstsq(X, b, rcond=None)
    cov = np.linalg.inv(X.T @ X)
    S_ref = float(np.exp(coef[0]))
    return FrequencyScaling(
        alpha=float(-coef[1]),
        S_ref=S_ref,
        omega_ref=float(omega_ref),
        sigma_alpha=float(np.sqrt(cov[1, 1])),
        sigma_S_ref=float(S_ref * np.sqrt(cov[0, 0])),
        rejected=rejected,
        n_used=int(keep.sum()),
    )


def rescale_noise(S, omega_from: float, omega_to: float, alpha: float):
    """Carry a PSD along S(omega) ~ omega^-alpha from one frequency to another."""
    if omega_from <= 0 or omega_to <= 0:
        raise ValueError("frequencies must be positive")
    return np.asarray(S, dtype=float) * (omega_from / omega_to) ** alpha


def flag_spikes(rates, sigmas=None, window: int = 5, ratio: float = 3.0, nsigma: float = 3.0):
    """Mark rates that stand above the local running median.

    A point is a spike when it exceeds `ratio` times the median of its
    window and the excess is at least `nsigma` of its own uncertainty.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or rates.size < 8:
        raise ValueError("need at least 8 points in a 1-d series")
    if sigmas is None:
        sigmas = np.zeros_like(rates)
    else:
        sigmas = np.asarray(sigmas, dtype=float)
        if sigmas.shape != rates.shape:
            raise ValueError("sigmas must match rates")
    med = ndimage.median_filter(rates, size=window, mode="nearest")
    return (rates > ratio * med) & (rates - med >= nsigma * sigmas)
