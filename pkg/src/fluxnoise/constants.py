"""Physical constants (CODATA 2018) used at the SI boundary.

The core modules work in a dimensionless unit system (energies in k_B*T,
rates and angular frequencies in k_B*T/hbar); these constants are only
needed when converting to and from SI quantities.
"""

MU_B = 9.2740100657e-24  # Bohr magneton, J/T
K_B = 1.380649e-23       # Boltzmann constant, J/K
HBAR = 1.054571817e-34   # reduced Planck constant, J*s
PHI_0 = 2.067833848e-15  # magnetic flux quantum, Wb

GAUSS_PER_TESLA = 1e4
TESLA_PER_GAUSS = 1e-4
