"""Unit constants. Internal quantities are Hartree atomic units (hbar = m_e = 1)."""

HARTREE_EV = 27.211386245988
EV = 1.0 / HARTREE_EV  # hartree per eV
ANGSTROM = 1.8897259886  # bohr per angstrom
AMU = 1822.888486209  # electron masses per dalton
FEMTOSECOND = 41.341373335  # atomic time units per fs

H_MASS_AMU = 1.00782503223
LI7_MASS_AMU = 7.0160034366

LENGTH_UNITS = {"au": 1.0, "bohr": 1.0, "a0": 1.0, "angstrom": ANGSTROM, "Å": ANGSTROM, "A": ANGSTROM}
ENERGY_UNITS = {"au": 1.0, "hartree": 1.0, "Ha": 1.0, "Eh": 1.0, "eV": EV, "meV": 1e-3 * EV}
MASS_UNITS = {"au": 1.0, "me": 1.0, "amu": AMU, "u": AMU, "Da": AMU}
INVERSE_LENGTH_UNITS = {"au": 1.0, "1/bohr": 1.0, "1/a0": 1.0, "1/angstrom": 1.0 / ANGSTROM, "1/Å": 1.0 / ANGSTROM}
MOMENTUM_UNITS = {"au": 1.0}
TIME_UNITS = {"au": 1.0, "fs": FEMTOSECOND}
