"""Physical constants and default simulation parameters (SI units).

Frequencies are stored in Hz here; the simulation core works in rad/s and
converts at the boundary with ``TWO_PI``.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

HBAR = 1.05457182e-34  # J s
MU_0 = 12.56637e-7  # kg m / (s^2 A^2)
GAMMA_E_HZ = 28.024e9  # electron gyromagnetic ratio |gamma_e|/(2 pi), Hz/T
GAMMA_E = TWO_PI * GAMMA_E_HZ  # rad/s/T

LATTICE_CONSTANT = 3.57e-10  # diamond, m
ATOMS_PER_CELL = 8
ACTIVE_VOLUME = 3.14e-15  # m^3

THETA_MAGIC = float(np.arccos(1.0 / np.sqrt(3.0)))

# Protocol defaults
RABI_HZ = 20e6
DISORDER_STD_HZ = 4e6
RABI_ERROR = 0.01
SIGNAL_AMPLITUDE = 1e-9  # T
BLOCKS_PER_HALF_PERIOD = 32  # m
SEQUENCE_REPEATS = 2  # M

# AERIS defaults
CHEMICAL_SHIFT_HZ = 200.0
MEASUREMENT_INTERVAL = 1e-4  # s
N_MEASUREMENTS = 100

CONCENTRATION_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0)
