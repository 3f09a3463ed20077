"""Electrostatics of a planar multi-electrode trap and its RC filters.

Electrodes are rectangles in the y = 0 grounded plane, modeled gapless:
the potential of one electrode held at 1 V is its solid angle over 2 pi
(exact for the Dirichlet half-space problem).  Co-wired electrodes share
a filter group; groups are statistically independent for Johnson noise
but fully coherent for technical noise arriving through the filters.

Axes: x in-plane transverse, y surface normal, z along B.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from penningprobe import geometry
from penningprobe.constants import BOLTZMANN
from penningprobe.core import IonSpecies, beryllium_9

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

LAYOUT_SCHEMA = "penning-probe-layout v1"


@dataclass(frozen=True)
class RectElectrode:
    """One rectangle (x1, x2) x (z1, z2) in the trap plane, meters."""

    id: str
    extent: tuple  # (x1, x2, z1, z2)
    group: str

    def __post_init__(self):
        ext = tuple(float(v) for v in self.extent)
        if len(ext) != 4:
            raise ValueError("extent must be (x1, x2, z1, z2)")
        if not (ext[0] < ext[1] and ext[2] < ext[3]):
            raise ValueError(f"electrode {self.id!r}: need x1 < x2 and z1 < z2")
        object.__setattr__(self, "extent", ext)


@dataclass(frozen=True)
class FilterStage:
    """Single-pole RC low-pass feeding an electrode group."""

    R: float
    C: float
    R_series: float = 0.0
    T: float = 4.2

    def __post_init__(self):
        if not (self.R > 0 and self.C > 0):
            raise ValueError("R and C must be positive")
        if self.R_series < 0:
            raise ValueError("R_series must be nonnegative")
        if not self.T > 0:
            raise ValueError("temperature must be positive")


def filter_impedance(stage: FilterStage, omega: float) -> complex:
    """Impedance seen from the electrode: R parallel to C, plus wiring."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return stage.R / (1.0 + 1j * omega * stage.R * stage.C) + stage.R_series


def transfer(stage: FilterStage, omega: float) -> complex:
    """Voltage gain of the low-pass from the supply to the electrode."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return 1.0 / (1.0 + 1j * omega * stage.R * stage.C)


@dataclass(frozen=True, eq=False)
class TrapModel:
    """Immutable trap description: geometry, wiring groups, field, ion."""

    electrodes: tuple
    filters: dict  # group -> FilterStage
    B: float
    species: IonSpecies

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise ValueError("electrode ids must be unique")
        missing = {e.group for e in self.electrodes} - set(self.filters)
        if missing:
            raise ValueError(f"groups without a filter stage: {sorted(missing)}")
        exts = np.array([e.extent for e in self.electrodes], dtype=float)
        for i in range(len(exts)):
            for j in range(i + 1, len(exts)):
                a, b = exts[i], exts[j]
                if (
                    a[0] < b[1] and b[0] < a[1]  # x intervals overlap
                    and a[2] < b[3] and b[2] < a[3]  # z intervals overlap
                ):
                    raise ValueError(
                        f"electrodes {ids[i]!r} and {ids[j]!r} overlap"
                    )
        groups = {}
        for k, e in enumerate(self.electrodes):
            groups.setdefault(e.group, []).append(k)
        object.__setattr__(self, "_extents", exts)
        object.__setattr__(self, "_index", {eid: k for k, eid in enumerate(ids)})
        object.__setattr__(self, "_groups", {g: tuple(v) for g, v in groups.items()})

    @property
    def electrode_ids(self) -> tuple:
        return tuple(e.id for e in self.electrodes)

    @property
    def groups(self) -> tuple:
        return tuple(self._groups)

    def electrode(self, electrode_id: str) -> RectElectrode:
        return self.electrodes[self._index[electrode_id]]

    def members(self, name: str) -> tuple:
        """Electrode indices of a group name or a single electrode id."""
        if name in self._groups:
            return self._groups[name]
        if name in self._index:
            return (self._index[name],)
        raise KeyError(f"unknown electrode or group {name!r}")


def _check_above_plane(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts[:, 1] <= 0):
        raise ValueError("points must lie strictly above the trap plane (y > 0)")
    return pts


def evaluate_basis(trap: TrapModel, points):
    """Unit-voltage potentials, gradients and Hessians of all electrodes.

    Returns (values (n, k), gradients (n, k, 3), hessians (n, k, 3, 3))
    with k the electrode count, in trap.electrodes order.
    """
    pts = _check_above_plane(points)
    vals = geometry.solid_angles(trap._extents, pts) / (2.0 * np.pi)
    grads = geometry.solid_angle_gradients(trap._extents, pts) / (2.0 * np.pi)
    hesss = geometry.solid_angle_hessians(trap._extents, pts) / (2.0 * np.pi)
    return vals, grads, hesss


def basis_potential(trap: TrapModel, electrode_id: str, r):
    """Potential per applied volt on one electrode, with derivatives.

    Returns (value, gradient (3,), hessian (3, 3)).
    """
    k = trap._index[electrode_id]
    pts = _check_above_plane(r)
    ext = trap._extents[k : k + 1]
    value = float(geometry.solid_angles(ext, pts)[0, 0]) / (2.0 * np.pi)
    grad = geometry.solid_angle_gradients(ext, pts)[0, 0] / (2.0 * np.pi)
    hess = geometry.solid_angle_hessians(ext, pts)[0, 0] / (2.0 * np.pi)
    return value, grad, hess


def field_per_volt(trap: TrapModel, name: str, r0) -> np.ndarray:
    """Electric field (V/m per volt) of an electrode or co-wired group."""
    idx = list(trap.members(name))
    pts = _check_above_plane(r0)
    grads = geometry.solid_angle_gradients(trap._extents[idx], pts) / (2.0 * np.pi)
    return -grads[0].sum(axis=0)


class CharacteristicDistance(NamedTuple):
    distance: float  # meters; inf means no coupling along this axis
    sign: float  # sign of the field per positive applied volt


def characteristic_distance(
    trap: TrapModel, name: str, r0, axis: str
) -> CharacteristicDistance:
    """Voltage-to-field conversion distance d with E = V/d along an axis."""
    e = field_per_volt(trap, name, r0)[AXIS_INDEX[axis]]
    if e == 0.0:
        return CharacteristicDistance(np.inf, 0.0)
    return CharacteristicDistance(1.0 / abs(e), float(np.sign(e)))


def _detached_indices(trap: TrapModel, detached) -> frozenset:
    unknown = [eid for eid in detached if eid not in trap._index]
    if unknown:
        raise KeyError(f"unknown detached electrodes: {unknown}")
    return frozenset(trap._index[eid] for eid in detached)


def johnson_field_psd(
    trap: TrapModel, r0, omega: float, axis: str, detached=()
) -> float:
    """Thermal field PSD (V^2 m^-2 Hz^-1): independent sum over groups.

    Each group contributes 4 k_B T Re(Z(omega)) / d^2 with d the group's
    characteristic distance; co-wired electrodes add coherently inside
    the group.  Electrodes listed in `detached` float free of their
    wiring and contribute nothing.
    """
    nu = AXIS_INDEX[axis]
    pts = _check_above_plane(r0)
    dead = _detached_indices(trap, detached)
    grads = geometry.solid_angle_gradients(trap._extents, pts)[0] / (2.0 * np.pi)
    total = 0.0
    for group, idx in trap._groups.items():
        live = [i for i in idx if i not in dead]
        if not live:
            continue
        stage = trap.filters[group]
        e_per_volt = -grads[live, nu].sum()
        total += (
            4.0 * BOLTZMANN * stage.T * filter_impedance(stage, omega).real
            * e_per_volt**2
        )
    return total


def correlated_field(
    trap: TrapModel, r0, omega: float, axis: str, detached=()
) -> float:
    """Signed inverse distance (1/m) for noise coherent across all wires.

    A common voltage V applied in phase behind every filter appears on
    electrode group g as V |T_g(omega)|; the resulting field component is
    V times the returned value.  Cancellation between groups can null it
    at particular positions.  Detached electrodes do not carry the
    voltage and are skipped.
    """
    nu = AXIS_INDEX[axis]
    pts = _check_above_plane(r0)
    dead = _detached_indices(trap, detached)
    grads = geometry.solid_angle_gradients(trap._extents, pts)[0] / (2.0 * np.pi)
    inv_d = 0.0
    for group, idx in trap._groups.items():
        live = [i for i in idx if i not in dead]
        if not live:
            continue
        gain = abs(transfer(trap.filters[group], omega))
        inv_d += gain * (-grads[live, nu].sum())
    return inv_d


def correlated_field_psd(
    trap: TrapModel, r0, omega: float, axis: str, S_V_corr: float, detached=()
) -> float:
    """Field PSD from a coherent voltage noise PSD S_V_corr (V^2/Hz)."""
    if S_V_corr < 0:
        raise ValueError("S_V_corr must be nonnegative")
    return S_V_corr * correlated_field(trap, r0, omega, axis, detached) ** 2


# --- bundled layout ---------------------------------------------------------
#
# Representative geometry: the trap plane carries five 50 um wide strips
# under the ion, a co-wired pair of side strips, and two columns of nine
# axially segmented control electrodes.  The outer edge of the side pair
# (187.04267 um) is calibrated so the pair's field null on the axis sits
# at 152 um height.

_STRIP_HALF_LENGTH = 2000e-6
_STRIP_EDGES_UM = (-125.0, -75.0, -25.0, 25.0, 75.0, 125.0)
_AX_INNER = 125e-6
_AX_OUTER = 187.04267e-6
_CONTROL_X = (190e-6, 440e-6)
_CONTROL_Z_EDGES = np.linspace(-450e-6, 450e-6, 10)

_STRIP_FILTER = dict(R=1e3, C=22e-9)
_AX_FILTER = dict(R=1e3, C=560e-12)
_CONTROL_FILTER = dict(R=10e3, C=560e-12)


def default_trap_model(
    species: IonSpecies | None = None,
    B: float = 3.0,
    T: float = 6.5,
    R_series: float = 0.25,
) -> TrapModel:
    """The bundled 25-electrode layout (see module docstring)."""
    species = species or beryllium_9()
    electrodes = []
    filters = {}
    zl = _STRIP_HALF_LENGTH
    for i in range(5):
        eid = f"s{i - 2:+d}"
        x1, x2 = (_STRIP_EDGES_UM[i] * 1e-6, _STRIP_EDGES_UM[i + 1] * 1e-6)
        electrodes.append(RectElectrode(eid, (x1, x2, -zl, zl), eid))
        filters[eid] = FilterStage(**_STRIP_FILTER, R_series=R_series, T=T)
    electrodes.append(RectElectrode("axp", (_AX_INNER, _AX_OUTER, -zl, zl), "ax"))
    electrodes.append(RectElectrode("axn", (-_AX_OUTER, -_AX_INNER, -zl, zl), "ax"))
    filters["ax"] = FilterStage(**_AX_FILTER, R_series=R_series, T=T)
    for j in range(9):
        z1, z2 = _CONTROL_Z_EDGES[j], _CONTROL_Z_EDGES[j + 1]
        for eid, (x1, x2) in (
            (f"e{j + 1}", _CONTROL_X),
            (f"w{j + 1}", (-_CONTROL_X[1], -_CONTROL_X[0])),
        ):
            electrodes.append(RectElectrode(eid, (x1, x2, z1, z2), eid))
            filters[eid] = FilterStage(**_CONTROL_FILTER, R_series=R_series, T=T)
    return TrapModel(electrodes=tuple(electrodes), filters=filters, B=B, species=species)


# --- layout file I/O --------------------------------------------------------

_KNOWN_SPECIES = {"9Be+": beryllium_9}


def layout_doc(trap: TrapModel) -> dict:
    """Layout as a JSON-ready dict (rectangle corners in micrometers)."""
    return {
        "schema": LAYOUT_SCHEMA,
        "B_tesla": trap.B,
        "species": {
            "name": trap.species.name,
            "charge": trap.species.charge,
            "mass_kg": trap.species.mass,
        },
        "electrodes": [
            {
                "id": e.id,
                "x_um": [e.extent[0] * 1e6, e.extent[1] * 1e6],
                "z_um": [e.extent[2] * 1e6, e.extent[3] * 1e6],
                "group": e.group,
            }
            for e in trap.electrodes
        ],
        "filters": {
            g: {
                "R_ohm": s.R,
                "C_farad": s.C,
                "R_series_ohm": s.R_series,
                "T_kelvin": s.T,
            }
            for g, s in trap.filters.items()
        },
    }


def save_layout(trap: TrapModel, path) -> None:
    """Write the layout as JSON (rectangle corners in micrometers)."""
    with open(path, "w") as fh:
        json.dump(layout_doc(trap), fh, indent=2, sort_keys=True)
        fh.write("\n")


def trap_from_doc(doc: dict) -> TrapModel:
    """Rebuild a TrapModel from a layout_doc dict (schema-checked)."""
    if doc.get("schema") != LAYOUT_SCHEMA:
        raise ValueError(
            f"unsupported layout schema {doc.get('schema')!r}; expected {LAYOUT_SCHEMA!r}"
        )
    sp = doc["species"]
    if "mass_kg" in sp:
        species = IonSpecies(
            charge=int(sp["charge"]), mass=float(sp["mass_kg"]), name=sp.get("name", "")
        )
    elif sp.get("name") in _KNOWN_SPECIES:
        species = _KNOWN_SPECIES[sp["name"]]()
    else:
        raise ValueError("species needs mass_kg/charge or a known name")
    electrodes = tuple(
        RectElectrode(
            e["id"],
            (
                e["x_um"][0] * 1e-6,
                e["x_um"][1] * 1e-6,
                e["z_um"][0] * 1e-6,
                e["z_um"][1] * 1e-6,
            ),
            e["group"],
        )
        for e in doc["electrodes"]
    )
    filters = {
        g: FilterStage(
            R=f["R_ohm"], C=f["C_farad"],
            R_series=f.get("R_series_ohm", 0.0), T=f["T_kelvin"],
        )
        for g, f in doc["filters"].items()
    }
    return TrapModel(
        electrodes=electrodes, filters=filters, B=float(doc["B_tesla"]), species=species
    )


def load_layout(path) -> TrapModel:
    """Read a layout JSON written by save_layout (schema-checked)."""
    with open(path) as fh:
        doc = json.load(fh)
    return trap_from_doc(doc)
