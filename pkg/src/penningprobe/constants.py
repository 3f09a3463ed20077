"""Physical constants, pinned to CODATA 2018 values.

Pinned literals (rather than scipy.constants lookups) keep every derived
number in the package and its test suite bit-reproducible across scipy
releases.  All values are SI.
"""

ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
HBAR = 1.054571817e-34  # J s
BOLTZMANN = 1.380649e-23  # J/K (exact)
EPSILON_0 = 8.8541878128e-12  # F/m
ATOMIC_MASS = 1.66053906660e-27  # kg
ELECTRON_MASS = 9.1093837015e-31  # kg
BOHR_MAGNETON = 9.2740100783e-24  # J/T

# Electron g-factor magnitude; default sensitivity of the spin-flip
# transition frequency to magnetic field is G_E * BOHR_MAGNETON / HBAR.
G_ELECTRON = 2.0023

# Dipole-moment surface density unit conversion: one elementary charge
# times one angstrom per square micrometre, expressed in C/m.
# 1 e*A = 1.602176634e-19 C * 1e-10 m; 1/um^2 = 1e12 / m^2.
EA_PER_UM2_TO_C_PER_M = ELEMENTARY_CHARGE * 1e-10 * 1e12

# Neutral-atom masses in atomic mass units (AME2020).
BERYLLIUM_9_ATOMIC_MASS_U = 9.0121831
