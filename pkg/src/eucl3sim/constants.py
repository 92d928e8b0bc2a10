"""Physical constants shared across the library.

Frequencies are MHz, distances Angstrom, cross sections cm^2 unless a name
says otherwise.
"""

import numpy as np
from scipy.constants import N_A, c, epsilon_0, h, physical_constants

AVOGADRO = N_A
PLANCK_H = h
FOUR_PI_EPS0 = 4.0 * np.pi * epsilon_0

ANGSTROM_M = 1e-10
MHZ_HZ = 1e6

# Integrated absorption cross section per unit oscillator strength,
# pi * r_e * c = 2.654e-2 cm^2 Hz (classical electron radius r_e).
_R_E = physical_constants["classical electron radius"][0]
INTEGRATED_CROSS_SECTION_CM2_HZ = np.pi * _R_E * c * 1e4
