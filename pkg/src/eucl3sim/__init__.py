"""Quantitative models of isotopically purified stoichiometric EuCl3.6H2O:
isotope-disorder inhomogeneous broadening, hyperfine excitation spectra,
rate-equation hole burning with optical-depth prediction, and lattice
Monte Carlo of excitation-induced frequency shifts (blockade physics)."""

from . import (
    broadening,
    composition,
    holeburn,
    interactions,
    levels,
    memory,
    scenario,
    spectrum,
)
from .errors import (
    DegenerateStationaryError,
    FitConvergenceError,
    GridCoverageError,
    SimulationError,
)

__version__ = "0.1.0"

__all__ = [
    "broadening",
    "composition",
    "holeburn",
    "interactions",
    "levels",
    "memory",
    "scenario",
    "spectrum",
    "SimulationError",
    "GridCoverageError",
    "DegenerateStationaryError",
    "FitConvergenceError",
    "__version__",
]
