"""Figure emission for the command-line tools.

Every plot is written as an SVG plus a sibling CSV holding exactly the
numbers that were drawn, so downstream checks compare values instead of
pixels.  The SVG backend is pinned to a fixed hash salt and a stripped
date field, keeping repeated runs byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "penning-probe"

import matplotlib.pyplot as plt
import numpy as np

from . import dataio, noise, surfacecharge

UM = dataio.UM
MHZ = dataio.MHZ


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sibling(path) -> str:
    import os

    stem, _ = os.path.splitext(str(path))
    return stem + ".csv"


def dipole_heatmap(grid: surfacecharge.DipoleGrid, path) -> None:
    """Patch-density map over the modeled region, in e*Angstrom/um^2."""
    x_edges = np.linspace(grid.region[0], grid.region[1], grid.nx + 1) / UM
    z_edges = np.linspace(grid.region[2], grid.region[3], grid.nz + 1) / UM
    dens = surfacecharge.density_to_ea_um2(grid.densities)

    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    mesh = ax.pcolormesh(x_edges, z_edges, dens.T, shading="flat", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label=r"dipole density (e$\cdot$A$\,/\,\mu$m$^2$)")
    ax.set_xlabel(r"x ($\mu$m)")
    ax.set_ylabel(r"z ($\mu$m)")
    ax.set_title("recovered dipole-density map")
    ax.set_aspect("equal")
    _save(fig, path)
    dataio.write_dipole_grid(_sibling(path), grid)


def noise_overlay(trap, params: noise.NoiseModelParams, records, mode: str, path) -> None:
    """Rate-vs-distance overlay: data points plus the fitted breakdown."""
    records = list(records)
    d_pts = np.array([r.distance for r in records])
    rates = np.array([r.rate for r in records])
    sig = np.array([r.sigma_rate for r in records])
    # evaluate the model along the height axis above the first record's
    # lateral position, at the median mode frequency of the dataset
    x0, _, z0 = records[0].position
    omega = float(np.median([r.omega for r in records]))
    d = np.geomspace(0.8 * d_pts.min(), 1.25 * d_pts.max(), 60)
    parts = {"johnson": [], "surface": [], "technical": [], "total": []}
    for dk in d:
        total, bd = noise.model_heating_rate(trap, params, mode, (x0, dk, z0), omega)
        parts["johnson"].append(bd["johnson"])
        parts["surface"].append(bd["surface"])
        parts["technical"].append(bd.get("emi", bd.get("correlated", 0.0)))
        parts["total"].append(total)

    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    ax.errorbar(d_pts / UM, rates, yerr=sig, fmt="o", ms=4, color="k", label="measured")
    ax.plot(d / UM, parts["total"], "-", color="C3", label="model total")
    ax.plot(d / UM, parts["johnson"], "--", color="C0", label="Johnson")
    ax.plot(d / UM, parts["surface"], "--", color="C1", label="surface")
    ax.plot(d / UM, parts["technical"], "--", color="C2", label="technical")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"ion-surface distance ($\mu$m)")
    ax.set_ylabel("heating rate (quanta/s)")
    ax.set_title(f"mode {mode!r}: beta = {params.beta:.2f}")
    ax.legend(fontsize=8)
    _save(fig, path)
    dataio.write_table(
        _sibling(path),
        "noise-overlay",
        ("d_um", "johnson_q_per_s", "surface_q_per_s", "technical_q_per_s", "total_q_per_s"),
        [
            (dk / UM, parts["johnson"][k], parts["surface"][k],
             parts["technical"][k], parts["total"][k])
            for k, dk in enumerate(d)
        ],
        meta={"mode": mode},
    )


def gradient_plane(axis: str, coords, centers, sigmas, fit, path) -> None:
    """Fitted spin-frequency-vs-position line over the measured centers."""
    coords = np.asarray(coords, dtype=float)
    centers = np.asarray(centers, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    line = fit.intercept + fit.slope * coords

    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.errorbar(coords / UM, centers / MHZ, yerr=sigmas / MHZ, fmt="o", ms=4, color="k")
    order = np.argsort(coords)
    ax.plot(coords[order] / UM, line[order] / MHZ, "-", color="C3")
    ax.set_xlabel(rf"{axis} offset ($\mu$m)")
    ax.set_ylabel("spin frequency (MHz)")
    ax.set_title(f"gradient along {axis}")
    _save(fig, path)
    dataio.write_table(
        _sibling(path),
        "gradient-plane",
        (f"{axis}_um", "f_MHz", "sigma_MHz", "fit_MHz"),
        [
            (coords[k] / UM, centers[k] / MHZ, sigmas[k] / MHZ, line[k] / MHZ)
            for k in range(coords.size)
        ],
        meta={"axis": axis},
    )
