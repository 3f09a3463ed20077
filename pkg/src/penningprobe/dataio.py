"""Versioned table and report files shared by the command-line tools.

Boundary units are micrometers, megahertz (ordinary frequency), and
volts per meter; readers convert to SI immediately and writers convert
back, so the numerical modules never see file units.  Every file opens
with the line ``# penning-probe-schema v1`` and every CSV names its
table, so a reader can reject a file meant for a different command and
report what is wrong row by row.
"""

from __future__ import annotations

import json

import numpy as np

from . import core, electrodes, sensing, surfacecharge, synth
from .noise import HeatingRecord, NoiseModelParams

SCHEMA_LINE = "penning-probe-schema v1"

UM = 1e-6
MHZ = 2.0 * np.pi * 1e6  # rad/s per MHz of ordinary frequency
US = 1e-6


class SchemaError(ValueError):
    """A file failed validation; `diagnostics` names each bad row."""

    def __init__(self, path, diagnostics):
        self.path = str(path)
        self.diagnostics = list(diagnostics)
        head = "; ".join(self.diagnostics[:3])
        more = "" if len(self.diagnostics) <= 3 else f" (+{len(self.diagnostics) - 3} more)"
        super().__init__(f"{self.path}: {head}{more}")


def _fmt(value) -> str:
    if isinstance(value, str):
        if any(c in value for c in ",\n\r"):
            raise ValueError(f"cannot write field containing a comma or newline: {value!r}")
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


# --- generic table layer ------------------------------------------------------


def write_table(path, table: str, columns, rows, meta: dict | None = None) -> None:
    """Write one named CSV table with the schema header and sorted metadata."""
    lines = [f"# {SCHEMA_LINE}", f"# table: {table}"]
    for key in sorted(meta or {}):
        lines.append(f"# {key}: {_fmt((meta or {})[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path, table: str, columns):
    """Read a named table, returning (meta, rows) with string fields.

    rows are (data_row_number, file_line_number, dict) triples.  Raises
    SchemaError when the header, table name, or column set is wrong; the
    typed readers layer per-row value diagnostics on top.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != f"# {SCHEMA_LINE}":
        raise SchemaError(path, [f"line 1: expected header '# {SCHEMA_LINE}'"])
    if len(raw) < 2 or not raw[1].startswith("# table: "):
        raise SchemaError(path, ["line 2: expected '# table: <name>'"])
    found = raw[1][len("# table: "):].strip()
    if found != table:
        raise SchemaError(path, [f"line 2: table {found!r} is not {table!r}"])
    meta = {}
    k = 2
    while k < len(raw) and raw[k].startswith("#"):
        body = raw[k][1:].strip()
        if ":" not in body:
            raise SchemaError(path, [f"line {k + 1}: malformed metadata line {raw[k]!r}"])
        key, _, val = body.partition(":")
        meta[key.strip()] = val.strip()
        k += 1
    if k >= len(raw):
        raise SchemaError(path, ["missing column header row"])
    header = tuple(c.strip() for c in raw[k].split(","))
    if header != tuple(columns):
        raise SchemaError(
            path,
            [f"line {k + 1}: columns {','.join(header)!r} do not match {','.join(columns)!r}"],
        )
    rows = []
    nrow = 0
    diagnostics = []
    for j in range(k + 1, len(raw)):
        line = raw[j].strip()
        if not line:
            continue
        nrow += 1
        fields = [c.strip() for c in line.split(",")]
        if len(fields) != len(header):
            diagnostics.append(
                f"row {nrow} (line {j + 1}): {len(fields)} fields, expected {len(header)}"
            )
            continue
        rows.append((nrow, j + 1, dict(zip(header, fields))))
    if diagnostics:
        raise SchemaError(path, diagnostics)
    return meta, rows


class _Row:
    """Typed field access over one CSV row, accumulating diagnostics."""

    def __init__(self, nrow, lineno, fields, diagnostics):
        self._fields = fields
        self._tag = f"row {nrow} (line {lineno})"
        self._diag = diagnostics
        self.ok = True

    def _fail(self, message):
        self._diag.append(f"{self._tag}: {message}")
        self.ok = False
        return None

    def float(self, col, positive=False, lo=None, hi=None):
        text = self._fields[col]
        try:
            value = float(text)
        except ValueError:
            return self._fail(f"{col} {text!r} is not a number")
        if not np.isfinite(value):
            return self._fail(f"{col} must be finite, got {text}")
        if positive and not value > 0:
            return self._fail(f"{col} must be positive, got {text}")
        if lo is not None and value < lo:
            return self._fail(f"{col} must be >= {lo}, got {text}")
        if hi is not None and value > hi:
            return self._fail(f"{col} must be <= {hi}, got {text}")
        return value

    def int(self, col, positive=False, lo=None):
        text = self._fields[col]
        try:
            value = int(text)
        except ValueError:
            return self._fail(f"{col} {text!r} is not an integer")
        if positive and not value > 0:
            return self._fail(f"{col} must be positive, got {text}")
        if lo is not None and value < lo:
            return self._fail(f"{col} must be >= {lo}, got {text}")
        return value

    def choice(self, col, choices):
        text = self._fields[col]
        if text not in choices:
            return self._fail(f"{col} {text!r} is not one of {sorted(choices)}")
        return text

    def flag(self, col):
        text = self._fields[col]
        if text not in ("0", "1"):
            return self._fail(f"{col} must be 0 or 1, got {text!r}")
        return text == "1"

    def str(self, col):
        return self._fields[col]


def _typed_rows(path, table, columns):
    meta, raw_rows = read_table(path, table, columns)
    diagnostics: list[str] = []
    rows = [(_Row(nrow, ln, fields, diagnostics)) for nrow, ln, fields in raw_rows]
    return meta, rows, diagnostics


def _finish(path, diagnostics):
    if diagnostics:
        raise SchemaError(path, diagnostics)


# --- field samples ------------------------------------------------------------

FIELD_TABLE = "field-samples"
FIELD_COLUMNS = (
    "x_um", "y_um", "z_um",
    "Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m",
    "sEx_V_per_m", "sEy_V_per_m", "sEz_V_per_m",
)


def write_field_samples(path, samples) -> None:
    rows = [
        (s.position[0] / UM, s.position[1] / UM, s.position[2] / UM, *s.E, *s.sigma_E)
        for s in samples
    ]
    write_table(path, FIELD_TABLE, FIELD_COLUMNS, rows)


def read_field_samples(path) -> list:
    _, rows, diag = _typed_rows(path, FIELD_TABLE, FIELD_COLUMNS)
    out = []
    for row in rows:
        pos = [row.float(c) for c in ("x_um", "y_um", "z_um")]
        E = [row.float(c) for c in ("Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m")]
        sig = [row.float(c, positive=True) for c in ("sEx_V_per_m", "sEy_V_per_m", "sEz_V_per_m")]
        if row.ok:
            out.append(
                surfacecharge.FieldSample(
                    position=tuple(p * UM for p in pos), E=np.array(E), sigma_E=np.array(sig)
                )
            )
    _finish(path, diag)
    return out


# --- heating records ----------------------------------------------------------

HEATING_TABLE = "heating-records"
HEATING_COLUMNS = (
    "mode", "x_um", "y_um", "z_um", "d_um", "f_MHz",
    "rate_q_per_s", "sigma_q_per_s", "detached",
)


def write_heating_records(path, records) -> None:
    rows = [
        (
            r.mode,
            r.position[0] / UM, r.position[1] / UM, r.position[2] / UM,
            r.distance / UM,
            r.omega / MHZ,
            r.rate, r.sigma_rate,
            ";".join(r.detached),
        )
        for r in records
    ]
    write_table(path, HEATING_TABLE, HEATING_COLUMNS, rows)


def read_heating_records(path) -> list:
    _, rows, diag = _typed_rows(path, HEATING_TABLE, HEATING_COLUMNS)
    out = []
    for row in rows:
        mode = row.choice("mode", core.MODE_LABELS)
        pos = [row.float(c) for c in ("x_um", "y_um", "z_um")]
        d = row.float("d_um", positive=True)
        f = row.float("f_MHz", positive=True)
        rate = row.float("rate_q_per_s")
        sigma = row.float("sigma_q_per_s", positive=True)
        detached = tuple(t for t in row.str("detached").split(";") if t)
        if row.ok:
            out.append(
                HeatingRecord(
                    mode=mode,
                    position=tuple(p * UM for p in pos),
                    omega=f * MHZ,
                    rate=rate,
                    sigma_rate=sigma,
                    distance=d * UM,
                    detached=detached,
                )
            )
    _finish(path, diag)
    return out


# --- mode-table configurations ---------------------------------------------------

MODE_CONFIG_TABLE = "mode-configs"
MODE_CONFIG_COLUMNS = ("species", "B_T", "f_z_MHz")


def write_mode_configs(path, configs) -> None:
    """Write [(species, B, omega_z), ...] rows."""
    rows = [(sp.name, B, omega_z / MHZ) for sp, B, omega_z in configs]
    write_table(path, MODE_CONFIG_TABLE, MODE_CONFIG_COLUMNS, rows)


def read_mode_configs(path) -> list:
    """Read [(species, B_tesla, omega_z_rad_per_s), ...]."""
    _, rows, diag = _typed_rows(path, MODE_CONFIG_TABLE, MODE_CONFIG_COLUMNS)
    out = []
    for row in rows:
        name = row.choice("species", electrodes._KNOWN_SPECIES)
        B = row.float("B_T", positive=True)
        f_z = row.float("f_z_MHz", positive=True)
        if row.ok:
            out.append((electrodes._KNOWN_SPECIES[name](), B, f_z * MHZ))
    _finish(path, diag)
    return out


# --- camera position readings ---------------------------------------------------

READING_TABLE = "position-readings"
READING_COLUMNS = (
    "f_ax", "Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m", "px", "pz", "width_px", "lost",
)


def write_position_readings(path, readings) -> None:
    rows = [
        (r.f_ax, *r.E_applied, r.px, r.pz, r.width, r.lost)
        for r in readings
    ]
    write_table(path, READING_TABLE, READING_COLUMNS, rows)


def read_position_readings(path) -> list:
    _, rows, diag = _typed_rows(path, READING_TABLE, READING_COLUMNS)
    out = []
    for row in rows:
        f_ax = row.float("f_ax", positive=True)
        E = [row.float(c) for c in ("Ex_V_per_m", "Ey_V_per_m", "Ez_V_per_m")]
        px = row.int("px")
        pz = row.int("pz")
        width = row.float("width_px", positive=True)
        lost = row.flag("lost")
        if row.ok:
            out.append(
                sensing.PositionReading(
                    f_ax=f_ax, E_applied=tuple(E), px=px, pz=pz, width=width, lost=lost
                )
            )
    _finish(path, diag)
    return out


# --- Rabi scans -----------------------------------------------------------------

RABI_TABLE = "rabi-scans"
RABI_COLUMNS = ("scan_id", "x_um", "y_um", "z_um", "abscissa", "p_up", "shots")
_ABSCISSA_UNIT = {"frequency": "MHz", "duration": "us"}


def write_rabi_scans(path, scans) -> None:
    """Write [(scan_id, position, RabiScan), ...] sharing one scan kind."""
    scans = list(scans)
    if not scans:
        raise ValueError("need at least one scan")
    kinds = {s.kind for _, _, s in scans}
    if len(kinds) != 1:
        raise ValueError(f"scans mix kinds {sorted(kinds)}; write one file per kind")
    kind = kinds.pop()
    meta = {"kind": kind, "abscissa_unit": _ABSCISSA_UNIT[kind]}
    if kind == "frequency":
        times = {s.pulse_time for _, _, s in scans}
        if len(times) != 1:
            raise ValueError("frequency scans in one file must share the pulse time")
        meta["pulse_time_us"] = times.pop() / US
    scale = MHZ if kind == "frequency" else US
    rows = []
    for scan_id, position, scan in scans:
        p = np.asarray(position, dtype=float)
        for a, pu, n in zip(scan.abscissa, scan.p_up, scan.shots):
            rows.append((int(scan_id), p[0] / UM, p[1] / UM, p[2] / UM,
                         a / scale, pu, int(n)))
    write_table(path, RABI_TABLE, RABI_COLUMNS, rows, meta=meta)


def read_rabi_scans(path) -> list:
    """Read [(scan_id, position, RabiScan), ...] grouped by scan_id."""
    meta, rows, diag = _typed_rows(path, RABI_TABLE, RABI_COLUMNS)
    kind = meta.get("kind")
    if kind not in _ABSCISSA_UNIT:
        raise SchemaError(path, [f"metadata kind {kind!r} must be frequency or duration"])
    if meta.get("abscissa_unit") != _ABSCISSA_UNIT[kind]:
        raise SchemaError(
            path,
            [f"abscissa_unit {meta.get('abscissa_unit')!r} does not match kind {kind!r}"],
        )
    pulse_time = None
    if kind == "frequency":
        if "pulse_time_us" not in meta:
            raise SchemaError(path, ["frequency scans need a pulse_time_us metadata line"])
        pulse_time = float(meta["pulse_time_us"]) * US
        if not pulse_time > 0:
            raise SchemaError(path, ["pulse_time_us must be positive"])
    scale = MHZ if kind == "frequency" else US
    groups: dict[int, dict] = {}
    for row in rows:
        scan_id = row.int("scan_id", lo=0)
        pos = [row.float(c) for c in ("x_um", "y_um", "z_um")]
        a = row.float("abscissa")
        pu = row.float("p_up", lo=0.0, hi=1.0)
        n = row.int("shots", positive=True)
        if not row.ok:
            continue
        g = groups.setdefault(scan_id, {"position": tuple(p * UM for p in pos),
                                        "abscissa": [], "p_up": [], "shots": []})
        if not np.allclose([p * UM for p in pos], g["position"], rtol=0, atol=1e-12):
            row._fail(f"position differs from earlier rows of scan {scan_id}")
            continue
        g["abscissa"].append(a * scale)
        g["p_up"].append(pu)
        g["shots"].append(n)
    _finish(path, diag)
    out = []
    for scan_id in sorted(groups):
        g = groups[scan_id]
        out.append(
            (
                scan_id,
                g["position"],
                sensing.RabiScan(
                    kind=kind,
                    abscissa=np.array(g["abscissa"]),
                    p_up=np.array(g["p_up"]),
                    shots=np.array(g["shots"]),
                    pulse_time=pulse_time,
                ),
            )
        )
    return out


# --- dipole-density grids ---------------------------------------------------------

DIPOLE_TABLE = "dipole-grid"
DIPOLE_COLUMNS = ("ix", "iz", "x_um", "z_um", "density_eA_per_um2")


def write_dipole_grid(path, grid: surfacecharge.DipoleGrid) -> None:
    centers = grid.patch_centers()
    rows = []
    for k in range(grid.nx * grid.nz):
        i, j = divmod(k, grid.nz)
        rows.append(
            (
                i, j,
                centers[k, 0] / UM, centers[k, 1] / UM,
                surfacecharge.density_to_ea_um2(grid.densities[i, j]),
            )
        )
    meta = {
        "x1_um": grid.region[0] / UM,
        "x2_um": grid.region[1] / UM,
        "z1_um": grid.region[2] / UM,
        "z2_um": grid.region[3] / UM,
        "nx": grid.nx,
        "nz": grid.nz,
        "background_eA_per_um2": surfacecharge.density_to_ea_um2(grid.background),
    }
    write_table(path, DIPOLE_TABLE, DIPOLE_COLUMNS, rows, meta=meta)


def read_dipole_grid(path) -> surfacecharge.DipoleGrid:
    meta, rows, diag = _typed_rows(path, DIPOLE_TABLE, DIPOLE_COLUMNS)
    try:
        region = tuple(float(meta[k]) * UM for k in ("x1_um", "x2_um", "z1_um", "z2_um"))
        nx, nz = int(meta["nx"]), int(meta["nz"])
        background = surfacecharge.density_from_ea_um2(float(meta["background_eA_per_um2"]))
    except (KeyError, ValueError) as exc:
        raise SchemaError(path, [f"bad grid metadata: {exc}"]) from exc
    densities = np.full((nx, nz), np.nan)
    for row in rows:
        i = row.int("ix", lo=0)
        j = row.int("iz", lo=0)
        d = row.float("density_eA_per_um2")
        row.float("x_um")
        row.float("z_um")
        if not row.ok:
            continue
        if i >= nx or j >= nz:
            row._fail(f"patch index ({i}, {j}) outside {nx} x {nz} grid")
            continue
        if not np.isnan(densities[i, j]):
            row._fail(f"duplicate patch ({i}, {j})")
            continue
        densities[i, j] = surfacecharge.density_from_ea_um2(d)
    if not diag and np.isnan(densities).any():
        missing = int(np.isnan(densities).sum())
        diag.append(f"{missing} of {nx * nz} patches missing")
    _finish(path, diag)
    return surfacecharge.DipoleGrid(
        region=region, nx=nx, nz=nz, densities=densities, background=background
    )


# --- transport waveforms -----------------------------------------------------------

WAVEFORM_TABLE = "transport-waveform"


def write_waveform(path, waveform) -> None:
    columns = ("t_ms", "x_um", "y_um", "z_um") + tuple(
        f"V_{eid}" for eid in waveform.electrode_ids
    )
    V = waveform.voltage_matrix()
    rows = [
        (t / 1e-3, p[0] / UM, p[1] / UM, p[2] / UM, *V[k])
        for k, (t, p) in enumerate(zip(waveform.times, waveform.positions))
    ]
    write_table(
        path, WAVEFORM_TABLE, columns, rows, meta={"duration_ms": waveform.duration / 1e-3}
    )


# --- JSON reports --------------------------------------------------------------------


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_report(path, payload: dict) -> None:
    doc = {"schema": SCHEMA_LINE, **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != SCHEMA_LINE:
        raise SchemaError(path, [f"schema {doc.get('schema')!r} is not {SCHEMA_LINE!r}"])
    return doc


# --- scenario files -------------------------------------------------------------------


def _line_to_doc(line) -> dict:
    value, gradient = line
    return {
        "f_MHz": value / MHZ,
        "gradient_MHz_per_um": [g / MHZ * UM for g in gradient],
    }


def _line_from_doc(doc) -> tuple:
    return (
        float(doc["f_MHz"]) * MHZ,
        tuple(float(g) * MHZ / UM for g in doc["gradient_MHz_per_um"]),
    )


def save_scenario(path, scenario: synth.ScenarioSpec) -> None:
    """Write the ground-truth scenario as a self-contained JSON file."""
    cam = scenario.camera
    grid = scenario.dipole_grid
    doc = {
        "kind": "scenario",
        "seed": scenario.seed,
        "f_ref_MHz": scenario.omega_ref / MHZ,
        "center_um": [c / UM for c in scenario.center],
        "region_um": [c / UM for c in scenario.region],
        "stray_field_V_per_m": list(scenario.stray_field),
        "camera": {
            "pixel_size_um": cam.pixel_size / UM,
            "magnification": cam.magnification,
            "w0_px": cam.w0,
            "y_R_um": cam.y_R / UM,
            "focus_height_um": cam.focus_height / UM,
        },
        "trap": electrodes.layout_doc(scenario.trap),
        "dipole_grid": None if grid is None else {
            "region_um": [c / UM for c in grid.region],
            "nx": grid.nx,
            "nz": grid.nz,
            "background_eA_per_um2": surfacecharge.density_to_ea_um2(grid.background),
            "densities_eA_per_um2": surfacecharge.density_to_ea_um2(grid.densities).tolist(),
        },
        "noise_params": {
            mode: {
                "C_q_per_s": p.C,
                "beta": p.beta,
                "S_V_corr_V2_per_Hz": p.S_V_corr,
                "n_EMI_q_per_s": p.n_EMI,
                "pivot_um": p.pivot / UM,
            }
            for mode, p in scenario.noise_params.items()
        },
        "omega0_line": _line_to_doc(scenario.omega0_line),
        "rabi_line": _line_to_doc(scenario.rabi_line),
    }
    write_report(path, doc)


def load_scenario(path) -> synth.ScenarioSpec:
    doc = read_report(path)
    if doc.get("kind") != "scenario":
        raise SchemaError(path, [f"kind {doc.get('kind')!r} is not 'scenario'"])
    try:
        trap = electrodes.trap_from_doc(doc["trap"])
        cam = doc["camera"]
        camera = sensing.CameraGeometry(
            pixel_size=float(cam["pixel_size_um"]) * UM,
            magnification=float(cam["magnification"]),
            w0=float(cam["w0_px"]),
            y_R=float(cam["y_R_um"]) * UM,
            focus_height=float(cam["focus_height_um"]) * UM,
        )
        g = doc["dipole_grid"]
        grid = None
        if g is not None:
            grid = surfacecharge.DipoleGrid(
                region=tuple(float(v) * UM for v in g["region_um"]),
                nx=int(g["nx"]),
                nz=int(g["nz"]),
                densities=surfacecharge.density_from_ea_um2(
                    np.asarray(g["densities_eA_per_um2"], dtype=float)
                ),
                background=surfacecharge.density_from_ea_um2(float(g["background_eA_per_um2"])),
            )
        noise_params = {
            mode: NoiseModelParams(
                C=float(p["C_q_per_s"]),
                beta=float(p["beta"]),
                S_V_corr=float(p["S_V_corr_V2_per_Hz"]),
                n_EMI=float(p["n_EMI_q_per_s"]),
                pivot=float(p["pivot_um"]) * UM,
            )
            for mode, p in doc["noise_params"].items()
        }
        return synth.ScenarioSpec(
            trap=trap,
            omega_ref=float(doc["f_ref_MHz"]) * MHZ,
            center=tuple(float(c) * UM for c in doc["center_um"]),
            stray_field=tuple(float(c) for c in doc["stray_field_V_per_m"]),
            dipole_grid=grid,
            noise_params=noise_params,
            camera=camera,
            region=tuple(float(c) * UM for c in doc["region_um"]),
            omega0_line=_line_from_doc(doc["omega0_line"]),
            rabi_line=_line_from_doc(doc["rabi_line"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(path, [f"bad scenario document: {exc!r}"]) from exc
