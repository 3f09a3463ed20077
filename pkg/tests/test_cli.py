"""End-to-end coverage of the command-line layer: happy paths on
synthetic datasets, the exit-code contract, and byte-level determinism."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from penningprobe import core, dataio, electrodes, noise, sensing, surfacecharge, synth
from penningprobe.cli import main
from penningprobe.noise import HeatingRecord, NoiseModelParams

TWOPI = 2.0 * np.pi
STRAY_TRUTH = (312.0, -127.0, -481.0)
# rad/s of spin frequency per tesla (electron g factor)
SPIN_PER_TESLA = 1.0 / sensing.delta_B_from_delta_omega(1.0)


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def uniform_dataset(runner, ws):
    """Full synthetic dataset for a uniform-stray scenario, via the CLI."""
    scenario = synth.ScenarioSpec(
        trap=electrodes.default_trap_model(),
        stray_field=STRAY_TRUTH,
        noise_params={"z": NoiseModelParams(C=50.0, beta=4.0, n_EMI=0.03)},
        omega0_line=(
            TWOPI * 124e9,
            (0.0, SPIN_PER_TESLA * 5.87e-3, SPIN_PER_TESLA * -5.26e-3),
        ),
        rabi_line=(TWOPI * 50e3, (0.0, 0.0, 0.0)),
        seed=20,
    )
    spath = ws / "uniform_scenario.json"
    dataio.save_scenario(spath, scenario)
    out = ws / "uniform_ds"
    result = runner.invoke(main, ["synth", str(spath), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def dipole_dataset(runner, ws):
    """Dataset for a patchy-layer scenario on a coarse 10 x 10 grid."""
    n = 10
    edges = np.linspace(-0.5e-3, 0.5e-3, n + 1)
    c = (edges[:-1] + edges[1:]) / 2.0
    X, Z = np.meshgrid(c, c, indexing="ij")
    blob = -60e3 * np.exp(-((X - 0.15e-3) ** 2 + (Z + 0.1e-3) ** 2) / (2 * 0.18e-3**2))
    strip = 35e3 * np.exp(-((Z - 0.25e-3) ** 2) / (2 * 0.12e-3**2))
    dmap = blob + strip
    dmap -= dmap.mean()
    grid = surfacecharge.DipoleGrid(
        nx=n, nz=n,
        densities=surfacecharge.density_from_ea_um2(dmap),
        background=surfacecharge.density_from_ea_um2(180e3),
    )
    scenario = synth.ScenarioSpec(
        trap=electrodes.default_trap_model(), dipole_grid=grid, seed=5
    )
    spath = ws / "dipole_scenario.json"
    dataio.save_scenario(spath, scenario)
    out = ws / "dipole_ds"
    result = runner.invoke(main, ["synth", str(spath), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def dipole_config(ws):
    path = ws / "dipole_config.json"
    dataio.write_report(
        path,
        {
            "units": {"field": "V_per_m", "frequency": "MHz", "position": "um"},
            "dipoles": {"nx": 10, "nz": 10, "region_um": [-500, 500, -500, 500]},
        },
    )
    return path


# --- modes -----------------------------------------------------------------


def test_modes_check_reports_quoted_mismatch(runner, tmp_path):
    result = runner.invoke(
        main, ["modes", "--check", "2.6,0.845,4.32,5.118", "--out", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert "47.00 kHz" in result.output
    report = dataio.read_report(tmp_path / "modes_check.json")
    assert report["sum_mismatch_kHz"] == pytest.approx(47.0, abs=1e-9)


def test_modes_table_matches_direct_computation(runner, tmp_path):
    configs = tmp_path / "configs.csv"
    dataio.write_mode_configs(configs, [(core.beryllium_9(), 3.0, TWOPI * 2.6e6)])
    result = runner.invoke(main, ["modes", str(configs), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    _, rows = dataio.read_table(
        tmp_path / "modes.csv", "mode-spectrum",
        ("species", "B_T", "f_z_MHz", "f_minus_MHz", "f_plus_MHz", "f_c_MHz"),
    )
    assert len(rows) == 1
    got = rows[0][2]
    spectrum = core.mode_frequencies(
        core.beryllium_9(), core.TrapSettings(B=3.0, omega_z=TWOPI * 2.6e6)
    )
    assert float(got["f_c_MHz"]) == pytest.approx(spectrum.omega_c / TWOPI / 1e6, rel=1e-12)
    assert float(got["f_plus_MHz"]) == pytest.approx(spectrum.omega_plus / TWOPI / 1e6, rel=1e-12)

    result = runner.invoke(
        main, ["modes", str(configs), "--out", str(tmp_path), "--format", "json"]
    )
    assert result.exit_code == 0
    doc = dataio.read_report(tmp_path / "modes.json")
    assert doc["table"] == "mode-spectrum" and len(doc["rows"]) == 1


def test_modes_usage_errors(runner, tmp_path):
    result = runner.invoke(main, ["modes"])
    assert result.exit_code == 2

    empty = tmp_path / "empty.csv"
    dataio.write_mode_configs(empty, [])
    result = runner.invoke(main, ["modes", str(empty), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "no configuration rows" in result.output


# --- strayfield -------------------------------------------------------------


def test_strayfield_recovers_scenario_truth(runner, ws, uniform_dataset):
    out = ws / "sf"
    result = runner.invoke(
        main, ["strayfield", str(uniform_dataset / "readings.csv"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = dataio.read_report(out / "strayfield.json")
    assert report["converged"] is True
    final = np.array(report["final"]["grad_phi_stray_V_per_m"])
    sigma = np.array(report["final"]["sigma_stray_V_per_m"])
    # lateral axes resolve to a fraction of a volt per meter; the width
    # axis only to its propagated slack
    assert abs(final[0] - STRAY_TRUTH[0]) < 1.0
    assert abs(final[2] - STRAY_TRUTH[2]) < 1.0
    assert abs(final[1] - STRAY_TRUTH[1]) < sigma[1]
    # the displaced verification pair shows the commanded apparent field
    M = sensing.curvature_diagonal(core.beryllium_9(), TWOPI * 1e6)
    expected_app = M * np.array([0.5e-6, 5e-6, 0.5e-6])
    pair1 = np.array(report["pairs"][0]["grad_phi_app_V_per_m"])
    assert np.allclose(pair1, expected_app, rtol=1e-6)
    # field-map table parses and matches the report
    _, rows = dataio.read_table(
        out / "strayfield_map.csv", "stray-field-map",
        ("pair", "f_ax_1", "f_ax_2",
         "Ex_stray_V_per_m", "Ey_stray_V_per_m", "Ez_stray_V_per_m",
         "sEx_V_per_m", "sEy_V_per_m", "sEz_V_per_m"),
    )
    assert len(rows) == 2
    assert float(rows[1][2]["Ex_stray_V_per_m"]) == pytest.approx(final[0], rel=1e-12)


def test_strayfield_rejects_bad_inputs(runner, ws, uniform_dataset, tmp_path):
    text = (uniform_dataset / "readings.csv").read_text()
    odd = tmp_path / "odd.csv"
    odd.write_text("\n".join(text.splitlines()[:-1]) + "\n")
    result = runner.invoke(main, ["strayfield", str(odd), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "even number" in result.stderr

    lines = text.splitlines()
    lines[4] = lines[4].replace(",", ";", 1)
    corrupt = tmp_path / "corrupt.csv"
    corrupt.write_text("\n".join(lines) + "\n")
    result = runner.invoke(main, ["strayfield", str(corrupt), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "row 2" in result.stderr


def test_strayfield_nonconvergence_writes_partial_report(runner, tmp_path):
    readings = [
        sensing.PositionReading(f_ax=1.6, E_applied=(0, 0, 0), px=0, pz=0, width=4.0),
        sensing.PositionReading(f_ax=2.5, E_applied=(0, 0, 0), px=9, pz=0, width=4.0),
    ]
    path = tmp_path / "readings.csv"
    dataio.write_position_readings(path, readings)
    result = runner.invoke(main, ["strayfield", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3
    report = dataio.read_report(tmp_path / "strayfield.json")
    assert report["converged"] is False
    assert "laterally" in report["error"]


# --- dipoles ----------------------------------------------------------------


def test_dipoles_round_trip_with_plot_artifacts(
    runner, ws, dipole_dataset, dipole_config
):
    out = ws / "dp"
    result = runner.invoke(
        main,
        ["dipoles", str(dipole_dataset / "fields.csv"),
         "--config", str(dipole_config), "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    report = dataio.read_report(out / "dipoles.json")
    assert report["converged"] is True
    assert report["background_eA_per_um2"] == pytest.approx(180e3, rel=0.05)
    grid = dataio.read_dipole_grid(out / "dipoles.csv")
    truth = dataio.load_scenario(ws / "dipole_scenario.json").dipole_grid
    corr = np.corrcoef(grid.densities.ravel(), truth.densities.ravel())[0, 1]
    assert corr > 0.9
    svg = (out / "dipoles_map.svg").read_text()
    assert svg.lstrip().startswith("<?xml")
    sibling = dataio.read_dipole_grid(out / "dipoles_map.csv")
    assert np.array_equal(sibling.densities, grid.densities)


def test_dipoles_rank_deficient_exits_3(runner, tmp_path):
    samples = [
        surfacecharge.FieldSample((0.0, 1e-4, 0.0), np.ones(3), np.ones(3)),
        surfacecharge.FieldSample((5e-5, 1e-4, 0.0), np.ones(3), np.ones(3)),
    ]
    fields = tmp_path / "fields.csv"
    dataio.write_field_samples(fields, samples)
    config = tmp_path / "config.json"
    dataio.write_report(
        config,
        {
            "units": {"field": "V_per_m", "frequency": "MHz", "position": "um"},
            "dipoles": {"nx": 10, "nz": 10, "lambda": 0.0},
        },
    )
    result = runner.invoke(
        main, ["dipoles", str(fields), "--config", str(config), "--out", str(tmp_path)]
    )
    assert result.exit_code == 3
    report = dataio.read_report(tmp_path / "dipoles.json")
    assert report["converged"] is False


# --- noisefit ---------------------------------------------------------------


def test_noisefit_recovers_axial_model(runner, ws, uniform_dataset):
    out = ws / "nf"
    result = runner.invoke(
        main, ["noisefit", str(uniform_dataset / "records.csv"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = dataio.read_report(out / "noisefit.json")
    axial = report["modes"]["axial"]
    assert axial["converged"] is True
    assert axial["beta"] == pytest.approx(4.0, abs=0.3)
    assert axial["C_q_per_s"] == pytest.approx(50.0, rel=0.15)
    assert axial["sigma"]["beta"] > 0
    # overlay artifacts: SVG plus the plotted curve values, which sum exactly
    assert (out / "noisefit_axial.svg").exists()
    _, rows = dataio.read_table(
        out / "noisefit_axial.csv", "noise-overlay",
        ("d_um", "johnson_q_per_s", "surface_q_per_s", "technical_q_per_s",
         "total_q_per_s"),
    )
    assert len(rows) == 60
    for _, _, row in rows[::7]:
        total = float(row["johnson_q_per_s"]) + float(row["surface_q_per_s"]) + float(
            row["technical_q_per_s"]
        )
        assert float(row["total_q_per_s"]) == pytest.approx(total, rel=1e-12)


def test_noisefit_pinned_exponent_exits_3(runner, tmp_path):
    trap = electrodes.default_trap_model()
    omega = TWOPI * 4.3e6
    records = []
    for d_um in (40.0, 70.0, 120.0, 200.0, 300.0):
        pos = (0.0, d_um * 1e-6, 0.0)
        nj = noise.johnson_heating_rate(trap, "+", pos, omega)
        # decays slower than any exponent the model admits
        rate = nj + 5.0 * (d_um / 100.0) ** (-0.3)
        records.append(
            HeatingRecord(mode="+", position=pos, omega=omega, rate=rate, sigma_rate=0.05)
        )
    path = tmp_path / "records.csv"
    dataio.write_heating_records(path, records)
    result = runner.invoke(main, ["noisefit", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3
    report = dataio.read_report(tmp_path / "noisefit.json")
    assert report["modes"]["cyclotron"]["converged"] is False


# --- magnetics ----------------------------------------------------------------


def test_magnetics_recovers_gradient(runner, ws, uniform_dataset):
    out = ws / "mg"
    result = runner.invoke(
        main, ["magnetics", str(uniform_dataset / "scans_z.csv"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = dataio.read_report(out / "magnetics.json")
    assert report["axis"] == "z"
    assert abs(report["slope_nT_per_um"] - (-5.26)) < 3 * report["sigma_slope_nT_per_um"]
    assert report["sigma_slope_nT_per_um"] < 0.06
    assert len(report["scans"]) == 7 and len(report["residuals_MHz"]) == 7
    assert (out / "magnetics_gradient.svg").exists()
    _, rows = dataio.read_table(
        out / "magnetics_gradient.csv", "gradient-plane",
        ("z_um", "f_MHz", "sigma_MHz", "fit_MHz"),
    )
    assert len(rows) == 7


def test_magnetics_flat_scan_exits_3(runner, tmp_path):
    scan = sensing.RabiScan(
        kind="frequency",
        abscissa=TWOPI * 124e9 + np.linspace(-1e4, 1e4, 9),
        p_up=np.ones(9),
        shots=np.full(9, 100),
        pulse_time=1e-5,
    )
    path = tmp_path / "scans.csv"
    dataio.write_rabi_scans(
        path, [(i, (0, 1.52e-4, i * 1e-5), scan) for i in range(3)]
    )
    result = runner.invoke(main, ["magnetics", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3
    report = dataio.read_report(tmp_path / "magnetics.json")
    assert report["converged"] is False and "scan 0" in report["error"]


def test_magnetics_rejects_duration_scans(runner, tmp_path):
    scan = sensing.RabiScan(
        kind="duration", abscissa=np.linspace(1e-6, 30e-6, 8),
        p_up=np.linspace(1, 0, 8), shots=np.full(8, 100),
    )
    path = tmp_path / "scans.csv"
    dataio.write_rabi_scans(path, [(0, (0, 1e-4, 0), scan)])
    result = runner.invoke(main, ["magnetics", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "frequency scans" in result.stderr


def test_magnetics_requires_one_varying_axis(runner, ws, uniform_dataset, tmp_path):
    scans = dataio.read_rabi_scans(uniform_dataset / "scans_z.csv")
    moved = []
    for sid, pos, scan in scans:
        # also spread the scans along x so no single scan axis exists
        moved.append((sid, (pos[0] + sid * 1e-5, pos[1], pos[2]), scan))
    path = tmp_path / "scans.csv"
    dataio.write_rabi_scans(path, moved)
    result = runner.invoke(main, ["magnetics", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "exactly one axis" in result.stderr


def test_internal_failures_exit_4(runner, ws, uniform_dataset, tmp_path, monkeypatch):
    import penningprobe.cli as climod

    def boom(*args, **kwargs):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(climod.sensing, "fit_rabi", boom)
    result = runner.invoke(
        main, ["magnetics", str(uniform_dataset / "scans_z.csv"), "--out", str(tmp_path)]
    )
    assert result.exit_code == 4
    assert "internal invariant violation" in result.stderr


# --- synth ---------------------------------------------------------------------


def test_synth_dataset_contents(uniform_dataset):
    report = dataio.read_report(uniform_dataset / "synth.json")
    assert set(report["written"]) == {
        "scenario.json", "readings.csv", "fields.csv", "records.csv",
        "scans_z.csv", "scans_height.csv",
    }
    assert np.allclose(report["compensation_V_per_m"], STRAY_TRUTH)
    readings = dataio.read_position_readings(uniform_dataset / "readings.csv")
    assert len(readings) == 4 and not any(r.lost for r in readings)
    samples = dataio.read_field_samples(uniform_dataset / "fields.csv")
    assert len(samples) == 240
    heights = {round(s.position[1] / 1e-6) for s in samples}
    assert heights == {75, 100, 152}
    records = dataio.read_heating_records(uniform_dataset / "records.csv")
    assert len(records) == 8 and all(r.mode == "z" for r in records)


def test_synth_reruns_are_byte_identical(runner, ws, uniform_dataset):
    out2 = ws / "uniform_ds_again"
    result = runner.invoke(
        main, ["synth", str(ws / "uniform_scenario.json"), "--out", str(out2)]
    )
    assert result.exit_code == 0
    for name in ("scenario.json", "readings.csv", "fields.csv", "records.csv",
                 "scans_z.csv", "scans_height.csv", "synth.json"):
        assert (out2 / name).read_bytes() == (uniform_dataset / name).read_bytes(), name


def test_synth_seed_flag_changes_the_data(runner, ws, uniform_dataset):
    out2 = ws / "uniform_ds_seed99"
    result = runner.invoke(
        main,
        ["synth", str(ws / "uniform_scenario.json"), "--out", str(out2), "--seed", "99"],
    )
    assert result.exit_code == 0
    assert (out2 / "fields.csv").read_bytes() != (uniform_dataset / "fields.csv").read_bytes()


def test_synth_rejects_json_format(runner, ws, tmp_path):
    result = runner.invoke(
        main,
        ["synth", str(ws / "uniform_scenario.json"), "--out", str(tmp_path),
         "--format", "json"],
    )
    assert result.exit_code == 2


# --- transport -------------------------------------------------------------------


def test_transport_waveform_and_report(runner, tmp_path):
    spec = tmp_path / "path.json"
    dataio.write_report(
        spec,
        {
            "kind": "transport-path",
            "speed_m_per_s": 0.02,
            "waypoints": [
                {"position_um": [0, 100, 0], "f_z_MHz": 1.0},
                {"position_um": [0, 100, 100], "f_z_MHz": 1.0},
            ],
        },
    )
    result = runner.invoke(main, ["transport", str(spec), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = dataio.read_report(tmp_path / "transport.json")
    assert report["duration_ms"] == pytest.approx(5.0, rel=1e-9)
    assert 1.0 <= report["duration_ms"] <= 8.0
    lines = (tmp_path / "waveform.csv").read_text().splitlines()
    assert lines[1] == "# table: transport-waveform"
    assert len(lines) == 4 + report["n_samples"]


def test_transport_rejects_malformed_path(runner, tmp_path):
    spec = tmp_path / "path.json"
    dataio.write_report(spec, {"kind": "transport-path", "waypoints": [{"oops": 1}]})
    result = runner.invoke(main, ["transport", str(spec), "--out", str(tmp_path)])
    assert result.exit_code == 2


# --- config handling ---------------------------------------------------------------


def test_config_units_policy_must_be_explicit(runner, ws, uniform_dataset, tmp_path):
    config = tmp_path / "config.json"
    dataio.write_report(
        config, {"units": {"field": "V_per_m", "frequency": "GHz", "position": "um"}}
    )
    result = runner.invoke(
        main,
        ["strayfield", str(uniform_dataset / "readings.csv"),
         "--config", str(config), "--out", str(tmp_path)],
    )
    assert result.exit_code == 2
    assert "units policy" in result.stderr


def test_config_missing_layout_rejected(runner, ws, uniform_dataset, tmp_path):
    config = tmp_path / "config.json"
    dataio.write_report(
        config,
        {
            "units": {"field": "V_per_m", "frequency": "MHz", "position": "um"},
            "layout": str(tmp_path / "nope.json"),
        },
    )
    result = runner.invoke(
        main,
        ["strayfield", str(uniform_dataset / "readings.csv"),
         "--config", str(config), "--out", str(tmp_path)],
    )
    assert result.exit_code == 2
    assert "does not exist" in result.stderr


def test_config_layout_file_is_used(runner, ws, uniform_dataset, tmp_path):
    layout = tmp_path / "layout.json"
    electrodes.save_layout(electrodes.default_trap_model(), layout)
    config = tmp_path / "config.json"
    dataio.write_report(
        config,
        {
            "units": {"field": "V_per_m", "frequency": "MHz", "position": "um"},
            "layout": str(layout),
        },
    )
    result = runner.invoke(
        main,
        ["strayfield", str(uniform_dataset / "readings.csv"),
         "--config", str(config), "--out", str(tmp_path)],
    )
    assert result.exit_code == 0, result.output
