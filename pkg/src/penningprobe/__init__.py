"""Forward models and inverse analysis for a 3-d scanning Penning-trap ion probe."""

from penningprobe.core import (
    AXIAL,
    CYCLOTRON,
    MAGNETRON,
    IonSpecies,
    ModeSpectrum,
    TrapSettings,
    UnstableTrapError,
    beryllium_9,
    mode_frequencies,
)

__all__ = [
    "AXIAL",
    "CYCLOTRON",
    "MAGNETRON",
    "IonSpecies",
    "ModeSpectrum",
    "TrapSettings",
    "UnstableTrapError",
    "beryllium_9",
    "mode_frequencies",
]

__version__ = "0.1.0"
