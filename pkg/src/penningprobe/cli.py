"""Command-line interface: ingestion, fits, and report/plot emission.

Every subcommand is a pure function of (config, input files, seed): data
outputs are byte-identical across reruns.  Exit codes: 0 success, 2
input or schema error, 3 fit non-convergence (a partial report is still
written), 4 internal invariant violation.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import os
import sys
from dataclasses import dataclass, field

import click
import numpy as np

from . import core, dataio, electrodes, noise, plots, sensing, surfacecharge
from . import synth as synthmod
from . import transport as transportmod

UM = dataio.UM
MHZ = dataio.MHZ

DEFAULT_UNITS = {"field": "V_per_m", "frequency": "MHz", "position": "um"}
MODE_NAMES = {"z": "axial", "+": "cyclotron", "-": "magnetron"}


class ConvergenceError(RuntimeError):
    """A fit failed to converge; a partial report was already written."""


@dataclass
class RunConfig:
    """Run-wide settings plus per-subcommand parameter blocks."""

    layout: str | None = None  # trap layout JSON; None -> built-in chip
    seed: int = 0
    seed_given: bool = False
    out: str = "."
    fmt: str = "csv"
    blocks: dict = field(default_factory=dict)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))


def load_config(config_path, out_dir, seed, fmt) -> RunConfig:
    cfg = RunConfig()
    if config_path is not None:
        doc = dataio.read_report(config_path)
        if doc.get("units") != DEFAULT_UNITS:
            raise dataio.SchemaError(
                config_path,
                [f"units policy must be spelled out exactly as {DEFAULT_UNITS}"],
            )
        cfg.layout = doc.get("layout")
        if cfg.layout is not None and not os.path.exists(cfg.layout):
            raise dataio.SchemaError(config_path, [f"layout file {cfg.layout!r} does not exist"])
        cfg.seed = int(doc.get("seed", 0))
        cfg.out = str(doc.get("out", "."))
        cfg.blocks = {k: v for k, v in doc.items() if isinstance(v, dict) and k != "units"}
    if out_dir is not None:
        cfg.out = out_dir
    if seed is not None:
        cfg.seed = int(seed)
        cfg.seed_given = True
    if fmt is not None:
        cfg.fmt = fmt
    os.makedirs(cfg.out, exist_ok=True)
    return cfg


def _trap(cfg: RunConfig) -> electrodes.TrapModel:
    if cfg.layout:
        return electrodes.load_layout(cfg.layout)
    return electrodes.default_trap_model()


def _camera(block: dict) -> sensing.CameraGeometry:
    return sensing.CameraGeometry(
        pixel_size=float(block.get("pixel_size_um", 16.0)) * UM,
        magnification=float(block.get("magnification", 20.0)),
        w0=float(block.get("w0_px", 4.0)),
        y_R=float(block.get("y_R_um", 50.0)) * UM,
        focus_height=float(block.get("focus_height_um", 152.0)) * UM,
    )


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out, name)


def _write_rows(cfg, stem, table, columns, rows, meta=None) -> str:
    """Tabular artifact in the configured format; returns the path."""
    if cfg.fmt == "json":
        path = _out(cfg, stem + ".json")
        dataio.write_report(
            path,
            {
                "kind": "table",
                "table": table,
                "meta": meta or {},
                "columns": list(columns),
                "rows": [list(r) for r in rows],
            },
        )
    else:
        path = _out(cfg, stem + ".csv")
        dataio.write_table(path, table, columns, rows, meta=meta)
    return path


def _common(fn):
    fn = click.option(
        "--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
        help="Format for tabular data outputs (default csv).",
    )(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the run seed.")(fn)
    fn = click.option(
        "--out", "out_dir", type=click.Path(file_okay=False), default=None,
        help="Output directory (default: config value or '.').",
    )(fn)
    fn = click.option(
        "--config", "config_path", type=click.Path(), default=None,
        help="RunConfig JSON; built-in defaults when omitted.",
    )(fn)
    return fn


def _guarded(fn):
    """Map failures onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except dataio.SchemaError as exc:
            click.echo(f"schema error in {exc.path}:", err=True)
            for line in exc.diagnostics:
                click.echo(f"  {line}", err=True)
            sys.exit(2)
        except ConvergenceError as exc:
            click.echo(f"fit did not converge: {exc}", err=True)
            sys.exit(3)
        except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except ValueError as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:  # the exit-code contract needs a catch-all
            click.echo(f"internal invariant violation: {exc!r}", err=True)
            sys.exit(4)

    return wrapper


@click.group()
def main():
    """Analysis toolbox for a scanning single-ion electric-field probe."""


# --- modes ---------------------------------------------------------------------


@main.command()
@click.argument("input_csv", required=False, type=click.Path())
@click.option(
    "--check", default=None,
    help="Quoted spectrum 'f_z,f_minus,f_plus,f_c' in MHz to validate "
    "against the single-ion identities.",
)
@_common
@_guarded
def modes(input_csv, check, config_path, out_dir, seed, fmt):
    """Mode-frequency table for ion/field configurations.

    INPUT_CSV is a 'mode-configs' table with columns species,B_T,f_z_MHz.
    With --check, a quoted spectrum is tested instead and the size of any
    identity violation is reported.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    if check is None and input_csv is None:
        raise click.UsageError("provide a mode-configs table or --check")

    if check is not None:
        tokens = [t for t in check.replace(",", " ").split() if t]
        if len(tokens) != 4:
            raise click.UsageError("--check needs four numbers: f_z,f_minus,f_plus,f_c (MHz)")
        fz, fm, fp, fc = (float(t) for t in tokens)
        spectrum = core.ModeSpectrum(
            omega_c=fc * MHZ, omega_plus=fp * MHZ, omega_minus=fm * MHZ, omega_z=fz * MHZ
        )
        resid = spectrum.consistency()
        report = {
            "kind": "mode-check-report",
            "quoted_MHz": {"f_z": fz, "f_minus": fm, "f_plus": fp, "f_c": fc},
            "sum_mismatch_kHz": abs(resid["sum_abs"]) / (2.0 * np.pi * 1e3),
            "relative_residuals": {
                k: resid[k] for k in ("sum", "product", "quadrature")
            },
        }
        dataio.write_report(_out(cfg, "modes_check.json"), report)
        click.echo(
            f"sum identity |f_minus + f_plus - f_c| misses by "
            f"{report['sum_mismatch_kHz']:.2f} kHz "
            f"(relative {resid['sum']:+.3e})"
        )
        return

    configs = dataio.read_mode_configs(input_csv)
    if not configs:
        raise click.UsageError(f"{input_csv} contains no configuration rows")
    columns = ("species", "B_T", "f_z_MHz", "f_minus_MHz", "f_plus_MHz", "f_c_MHz")
    rows = []
    for species, B, omega_z in configs:
        s = core.mode_frequencies(species, core.TrapSettings(B=B, omega_z=omega_z))
        rows.append(
            (species.name, B, s.omega_z / MHZ, s.omega_minus / MHZ,
             s.omega_plus / MHZ, s.omega_c / MHZ)
        )
    path = _write_rows(cfg, "modes", "mode-spectrum", columns, rows)
    click.echo("  ".join(f"{c:>12}" for c in columns))
    for row in rows:
        click.echo(
            "  ".join(f"{v:>12}" if isinstance(v, str) else f"{v:>12.6f}" for v in row)
        )
    click.echo(f"wrote {path}")


# --- strayfield ----------------------------------------------------------------


@main.command()
@click.argument("readings_csv", type=click.Path())
@_common
@_guarded
def strayfield(readings_csv, config_path, out_dir, seed, fmt):
    """Stray-field extraction from paired camera readings.

    READINGS_CSV is a 'position-readings' table; consecutive rows form
    pairs taken at two axial-frequency scale factors under the same
    applied field.  Writes strayfield.json and a field-map table.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    trap = _trap(cfg)
    block = cfg.block("strayfield")
    omega_ref = float(block.get("f_ref_MHz", 1.0)) * MHZ
    camera = _camera(block.get("camera", {}))

    readings = dataio.read_position_readings(readings_csv)
    if len(readings) < 2 or len(readings) % 2:
        raise dataio.SchemaError(
            readings_csv, [f"need an even number of readings (pairs), got {len(readings)}"]
        )
    report_path = _out(cfg, "strayfield.json")
    pairs = []
    results = []
    for k in range(0, len(readings), 2):
        r1, r2 = readings[k], readings[k + 1]
        try:
            res = sensing.extract_stray_field(r1, r2, trap.species, omega_ref, camera)
        except ValueError as exc:
            dataio.write_report(
                report_path,
                {"kind": "stray-field-report", "f_ref_MHz": omega_ref / MHZ,
                 "pairs": pairs, "converged": False, "error": str(exc)},
            )
            raise ConvergenceError(f"pair {k // 2 + 1}: {exc}")
        results.append(res)
        pairs.append(
            {
                "pair": k // 2 + 1,
                "f_ax": [r1.f_ax, r2.f_ax],
                "grad_phi_stray_V_per_m": res.grad_phi_stray,
                "sigma_stray_V_per_m": res.sigma_stray,
                "grad_phi_app_V_per_m": res.grad_phi_app,
                "sigma_app_V_per_m": res.sigma_app,
            }
        )
    bounds = sensing.sensitivity_bounds(trap.species, omega_ref, camera)
    final = results[-1]
    converged = bool(np.all(np.abs(final.grad_phi_app) <= bounds))
    dataio.write_report(
        report_path,
        {
            "kind": "stray-field-report",
            "f_ref_MHz": omega_ref / MHZ,
            "pairs": pairs,
            "final": pairs[-1],
            "sensitivity_bound_V_per_m": bounds,
            "converged": converged,
        },
    )
    map_columns = (
        "pair", "f_ax_1", "f_ax_2",
        "Ex_stray_V_per_m", "Ey_stray_V_per_m", "Ez_stray_V_per_m",
        "sEx_V_per_m", "sEy_V_per_m", "sEz_V_per_m",
    )
    map_rows = [
        (p["pair"], p["f_ax"][0], p["f_ax"][1],
         *p["grad_phi_stray_V_per_m"], *p["sigma_stray_V_per_m"])
        for p in pairs
    ]
    _write_rows(cfg, "strayfield_map", "stray-field-map", map_columns, map_rows)
    sx, sy, sz = final.grad_phi_stray
    click.echo(
        f"grad phi_stray = ({sx:.3f}, {sy:.3f}, {sz:.3f}) V/m"
        f"{' (converged)' if converged else ' (residual applied field above bound)'}"
    )
    click.echo(f"wrote {report_path}")


# --- dipoles -------------------------------------------------------------------


@main.command()
@click.argument("fields_csv", type=click.Path())
@_common
@_guarded
def dipoles(fields_csv, config_path, out_dir, seed, fmt):
    """Dipole-density map inversion from a 'field-samples' table.

    Writes the recovered grid (dipoles.csv), an inversion report
    (dipoles.json), and a heat-map plot with its sibling data table.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    block = cfg.block("dipoles")
    region_um = block.get("region_um", [-500.0, 500.0, -500.0, 500.0])
    grid_spec = surfacecharge.DipoleGrid(
        region=tuple(float(v) * UM for v in region_um),
        nx=int(block.get("nx", 20)),
        nz=int(block.get("nz", 20)),
    )
    samples = dataio.read_field_samples(fields_csv)
    report_path = _out(cfg, "dipoles.json")
    lam = block.get("lambda")
    try:
        if lam is None:
            lam = surfacecharge.choose_lambda(samples, grid_spec)
        grid, diag = surfacecharge.invert_dipoles(samples, grid_spec, float(lam))
    except surfacecharge.RankDeficientError as exc:
        dataio.write_report(
            report_path,
            {"kind": "dipole-inversion-report", "lambda": lam, "n_data": 3 * len(samples),
             "converged": False, "error": str(exc)},
        )
        raise ConvergenceError(str(exc))
    if cfg.fmt == "json":
        _write_rows(
            cfg, "dipoles", dataio.DIPOLE_TABLE, dataio.DIPOLE_COLUMNS,
            _dipole_rows(grid),
            meta=_dipole_meta(grid),
        )
    else:
        dataio.write_dipole_grid(_out(cfg, "dipoles.csv"), grid)
    dataio.write_report(
        report_path,
        {
            "kind": "dipole-inversion-report",
            "lambda": float(lam),
            "chi2": diag.chi2,
            "n_data": diag.n_data,
            "n_params": diag.n_params,
            "rank": diag.rank,
            "under_constrained": diag.under_constrained,
            "gradient_norm_ratio": diag.gradient_norm_ratio,
            "background_eA_per_um2": surfacecharge.density_to_ea_um2(grid.background),
            "sigma_background_eA_per_um2": surfacecharge.density_to_ea_um2(
                diag.sigma_background
            ),
            "converged": True,
        },
    )
    plots.dipole_heatmap(grid, _out(cfg, "dipoles_map.svg"))
    click.echo(
        f"background = {surfacecharge.density_to_ea_um2(grid.background):.1f} "
        f"+/- {surfacecharge.density_to_ea_um2(diag.sigma_background):.1f} e*A/um^2 "
        f"(lambda = {float(lam):.3e}, chi2/n = {diag.chi2 / max(diag.n_data, 1):.2f})"
    )
    click.echo(f"wrote {report_path}")


def _dipole_rows(grid):
    centers = grid.patch_centers()
    rows = []
    for k in range(grid.nx * grid.nz):
        i, j = divmod(k, grid.nz)
        rows.append(
            (i, j, centers[k, 0] / UM, centers[k, 1] / UM,
             surfacecharge.density_to_ea_um2(grid.densities[i, j]))
        )
    return rows


def _dipole_meta(grid):
    return {
        "x1_um": grid.region[0] / UM, "x2_um": grid.region[1] / UM,
        "z1_um": grid.region[2] / UM, "z2_um": grid.region[3] / UM,
        "nx": grid.nx, "nz": grid.nz,
        "background_eA_per_um2": surfacecharge.density_to_ea_um2(grid.background),
    }


# --- noisefit ------------------------------------------------------------------


@main.command()
@click.argument("records_csv", type=click.Path())
@_common
@_guarded
def noisefit(records_csv, config_path, out_dir, seed, fmt):
    """Noise-model fit from a 'heating-records' table, one fit per mode.

    Writes noisefit.json plus an overlay plot per mode showing the
    measured rates against the fitted Johnson/surface/technical split.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    trap = _trap(cfg)
    block = cfg.block("noisefit")
    pivot = float(block.get("pivot_um", 100.0)) * UM

    records = dataio.read_heating_records(records_csv)
    by_mode: dict = {}
    for r in records:
        by_mode.setdefault(r.mode, []).append(r)
    results = {}
    failed = []
    for mode in sorted(by_mode):
        params = noise.fit_distance_scaling(trap, by_mode[mode], pivot=pivot)
        name = MODE_NAMES[mode]
        results[name] = {
            "mode": mode,
            "n_records": len(by_mode[mode]),
            "C_q_per_s": params.C,
            "beta": params.beta,
            "S_V_corr_V2_per_Hz": params.S_V_corr,
            "n_EMI_q_per_s": params.n_EMI,
            "pivot_um": params.pivot / UM,
            "sigma": {p: params.sigma(p) for p in params.fitted},
            "converged": params.converged,
        }
        plots.noise_overlay(
            trap, params, by_mode[mode], mode, _out(cfg, f"noisefit_{name}.svg")
        )
        if not params.converged:
            failed.append(name)
    report_path = _out(cfg, "noisefit.json")
    dataio.write_report(report_path, {"kind": "noise-fit-report", "modes": results})
    for name, entry in results.items():
        click.echo(
            f"{name}: beta = {entry['beta']:.3f} +/- {entry['sigma']['beta']:.3f}, "
            f"C = {entry['C_q_per_s']:.3g} q/s at {entry['pivot_um']:.0f} um"
        )
    click.echo(f"wrote {report_path}")
    if failed:
        raise ConvergenceError(f"{', '.join(failed)} fit hit the exponent bounds")


# --- magnetics -----------------------------------------------------------------


@main.command()
@click.argument("scans_csv", type=click.Path())
@_common
@_guarded
def magnetics(scans_csv, config_path, out_dir, seed, fmt):
    """Field-gradient extraction from a 'rabi-scans' table.

    Fits each frequency scan's line center, then fits center versus the
    one position coordinate that varies across scans.  Writes
    magnetics.json and a gradient plot with its data table.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    scans = dataio.read_rabi_scans(scans_csv)
    if scans and scans[0][2].kind != "frequency":
        raise click.UsageError("gradient extraction needs frequency scans")
    report_path = _out(cfg, "magnetics.json")
    fits = []
    scan_entries = []
    for scan_id, position, scan in scans:
        try:
            fit = sensing.fit_rabi(scan)
        except sensing.FlatScanError as exc:
            dataio.write_report(
                report_path,
                {"kind": "gradient-report", "scans": scan_entries,
                 "converged": False, "error": f"scan {scan_id}: {exc}"},
            )
            raise ConvergenceError(f"scan {scan_id}: {exc}")
        fits.append((position, fit))
        scan_entries.append(
            {
                "scan_id": scan_id,
                "x_um": position[0] / UM,
                "y_um": position[1] / UM,
                "z_um": position[2] / UM,
                "f_MHz": fit.center / MHZ,
                "sigma_MHz": fit.sigma_center / MHZ,
                "rabi_MHz": fit.rabi_rate / MHZ,
                "chi2": fit.chi2,
                "n_points": fit.n_points,
            }
        )
    positions = np.array([p for p, _ in fits])
    spans = np.ptp(positions, axis=0)
    varying = np.nonzero(spans > 1e-12)[0]
    if varying.size != 1:
        raise dataio.SchemaError(
            scans_csv,
            [f"scan positions must vary along exactly one axis; spans (m) = {spans}"],
        )
    axis = "xyz"[varying[0]]
    coords = positions[:, varying[0]]
    centers = np.array([f.center for _, f in fits])
    sigmas = np.array([f.sigma_center for _, f in fits])
    gfit = sensing.fit_gradient(coords, centers, sigmas)
    slope_T_per_m = sensing.delta_B_from_delta_omega(gfit.slope)
    sigma_T_per_m = sensing.delta_B_from_delta_omega(gfit.sigma_slope)
    dataio.write_report(
        report_path,
        {
            "kind": "gradient-report",
            "axis": axis,
            "slope_MHz_per_um": gfit.slope / MHZ * UM,
            "sigma_slope_MHz_per_um": gfit.sigma_slope / MHZ * UM,
            "slope_nT_per_um": slope_T_per_m * 1e3,
            "sigma_slope_nT_per_um": sigma_T_per_m * 1e3,
            "intercept_MHz": gfit.intercept / MHZ,
            "sigma_intercept_MHz": gfit.sigma_intercept / MHZ,
            "residuals_MHz": gfit.residuals / MHZ,
            "scans": scan_entries,
            "converged": True,
        },
    )
    plots.gradient_plane(
        axis, coords, centers, sigmas, gfit, _out(cfg, "magnetics_gradient.svg")
    )
    click.echo(
        f"d f0 / d {axis} = {slope_T_per_m * 1e3:+.3f} +/- {sigma_T_per_m * 1e3:.3f} nT/um"
    )
    click.echo(f"wrote {report_path}")


# --- synth ---------------------------------------------------------------------


@main.command("synth")
@click.argument("scenario_json", type=click.Path())
@_common
@_guarded
def synth_cmd(scenario_json, config_path, out_dir, seed, fmt):
    """Synthetic dataset from a ground-truth scenario file.

    Emits, per the scenario's contents: calibration readings, stray-field
    maps, heating records, and Rabi scans — all in the CSV schemas the
    analysis subcommands ingest (--format json is rejected here).
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    if cfg.fmt == "json":
        raise click.UsageError("synth datasets are CSV interchange files; use --format csv")
    scenario = dataio.load_scenario(scenario_json)
    if cfg.seed_given:
        scenario = dataclasses.replace(scenario, seed=cfg.seed)
    block = cfg.block("synth")
    written = []

    dataio.save_scenario(_out(cfg, "scenario.json"), scenario)
    written.append("scenario.json")

    # calibration readings: the compensating field parks the ion at the
    # center for every drive, so pairs across drives are co-located.  A
    # displaced verification pair comes first (E = c + f^2 M dr sits at
    # r0 + dr with a known nonzero apparent gradient), then the
    # compensated pair.
    f_pair = tuple(float(f) for f in block.get("f_pair", (1.6, 2.5)))
    oracle = synthmod.make_camera_oracle(scenario)
    compensation = scenario.stray_at(scenario.center)
    Mdiag = sensing.curvature_diagonal(scenario.trap.species, scenario.omega_ref)
    dr_um = block.get("verify_offset_um", [0.5, 5.0, 0.5])
    dr = np.array([float(v) * UM for v in dr_um])
    readings = [
        oracle(tuple(compensation + f**2 * Mdiag * dr), f) for f in f_pair
    ] + [oracle(tuple(compensation), f) for f in f_pair]
    dataio.write_position_readings(_out(cfg, "readings.csv"), readings)
    written.append("readings.csv")

    heights_um = block.get("heights_um", [75.0, 100.0, 152.0])
    samples = synthmod.field_samples(
        scenario,
        [float(h) * UM for h in heights_um],
        int(block.get("n_samples", 240)),
        noise_frac=float(block.get("noise_frac", 0.05)),
        sigma_floor=float(block.get("noise_floor_V_per_m", 1e-3)),
    )
    dataio.write_field_samples(_out(cfg, "fields.csv"), samples)
    written.append("fields.csv")

    if scenario.noise_params:
        spectrum = core.mode_frequencies(
            scenario.trap.species,
            core.TrapSettings(B=scenario.trap.B, omega_z=scenario.omega_ref),
        )
        rec_heights = block.get(
            "record_heights_um", list(np.geomspace(40.0, 300.0, 8))
        )
        waits = [float(w) for w in block.get("wait_times_s", [0.05, 0.1, 0.2, 0.4])]
        shots = int(block.get("record_shots", 500))
        x0, _, z0 = scenario.center
        records = []
        for mode in sorted(scenario.noise_params):
            for h_um in rec_heights:
                rec, _, _, _ = synthmod.phonon_series(
                    scenario, mode, (x0, float(h_um) * UM, z0),
                    spectrum.frequency(mode), waits, shots,
                )
                records.append(rec)
        dataio.write_heating_records(_out(cfg, "records.csv"), records)
        written.append("records.csv")

    if scenario.rabi_line[0] > 0 and scenario.omega0_line[0] > 0:
        offsets_um = block.get("scan_offsets_um", list(np.linspace(-100.0, 100.0, 7)))
        n_det = int(block.get("scan_points", 41))
        span = float(block.get("scan_span_rabi", 4.0))
        shots = int(block.get("scan_shots", 2000))
        rabi = scenario.rabi_line[0]
        pulse = np.pi / rabi
        w0_c, w0_grad = scenario.omega0_line
        center = np.array(scenario.center)
        for axis_index, name in ((2, "z"), (1, "height")):
            scans = []
            for i, off_um in enumerate(offsets_um):
                r = center.copy()
                r[axis_index] += float(off_um) * UM
                w0_r = w0_c + float(np.dot(w0_grad, r - center))
                abscissa = w0_r + np.linspace(-span * rabi, span * rabi, n_det)
                scan = synthmod.rabi_oracle(
                    scenario, r, abscissa, shots, kind="frequency", pulse_time=pulse
                )
                scans.append((i, tuple(r), scan))
            fname = f"scans_{name}.csv"
            dataio.write_rabi_scans(_out(cfg, fname), scans)
            written.append(fname)

    dataio.write_report(
        _out(cfg, "synth.json"),
        {
            "kind": "synth-report",
            "seed": scenario.seed,
            "compensation_V_per_m": compensation,
            "written": written,
        },
    )
    written.append("synth.json")
    click.echo(f"wrote {len(written)} files to {cfg.out}: {', '.join(written)}")


# --- transport -----------------------------------------------------------------


@main.command("transport")
@click.argument("path_json", type=click.Path())
@_common
@_guarded
def transport_cmd(path_json, config_path, out_dir, seed, fmt):
    """Transport waveform for a piecewise-linear path specification.

    PATH_JSON lists waypoints as {position_um, f_z_MHz} plus speed and
    step; writes waveform.csv and transport.json.
    """
    cfg = load_config(config_path, out_dir, seed, fmt)
    trap = _trap(cfg)
    doc = dataio.read_report(path_json)
    if doc.get("kind") != "transport-path":
        raise dataio.SchemaError(path_json, [f"kind {doc.get('kind')!r} is not 'transport-path'"])
    try:
        B = float(doc.get("B_tesla", trap.B))
        speed = float(doc.get("speed_m_per_s", 0.02))
        step = float(doc.get("step_um", 1.0)) * UM
        v_max = float(doc.get("V_max_V", 10.0))
        path = [
            (
                tuple(float(c) * UM for c in wp["position_um"]),
                core.TrapSettings(B=B, omega_z=float(wp["f_z_MHz"]) * MHZ),
            )
            for wp in doc["waypoints"]
        ]
    except (KeyError, TypeError) as exc:
        raise dataio.SchemaError(path_json, [f"bad path document: {exc!r}"]) from exc
    waveform = transportmod.make_waveform(trap, path, step=step, speed=speed, V_max=v_max)
    dataio.write_waveform(_out(cfg, "waveform.csv"), waveform)
    V = waveform.voltage_matrix()
    dataio.write_report(
        _out(cfg, "transport.json"),
        {
            "kind": "transport-report",
            "duration_ms": waveform.duration / 1e-3,
            "n_samples": len(waveform.times),
            "v_extreme_V": float(np.max(np.abs(V))),
            "electrodes": list(waveform.electrode_ids),
        },
    )
    click.echo(
        f"waveform: {len(waveform.times)} samples over {waveform.duration / 1e-3:.3f} ms"
    )


if __name__ == "__main__":
    main()
