"""Crystal stoichiometry, isotope abundances and Eu-site lattice geometry.

This is the input layer for everything else: broadening needs the isotope
inventory per formula unit of EuCl3.6H2O, spectrum synthesis needs ligand
substitution probabilities, and the blockade Monte Carlo needs the Eu
sublattice.  All types are immutable; operations return new values.
"""

from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DISTANCE_TOL_ANGSTROM = 1e-3
_ABUNDANCE_TOL = 1e-9


@dataclass(frozen=True)
class Isotope:
    """A single isotope of an element.

    Abundance is a fraction in [0, 1]; mass_amu must sit within 0.5 amu of
    the mass number (guard against swapped fields in config files).
    """

    element: str
    mass_number: int
    mass_amu: float
    abundance: float

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError(
                f"abundance of {self.element}-{self.mass_number} must be in "
                f"[0, 1], got {self.abundance}"
            )
        if abs(self.mass_amu - self.mass_number) > 0.5:
            raise ValueError(
                f"mass {self.mass_amu} amu is more than 0.5 amu away from "
                f"mass number {self.mass_number}"
            )


@dataclass(frozen=True)
class CrystalComposition:
    """Isotope inventory and per-formula-unit site counts of a crystal.

    ``isotopes`` maps an element symbol to its isotope list; abundances of
    each element sum to 1.  ``site_counts`` holds the number of lattice
    sites per formula unit (EuCl3.6H2O: H 12, O 6, Cl 3, Eu 1).  Exactly
    one dominant (most abundant) isotope per element is required; a tie
    leaves the disorder model without a reference isotope and is rejected.
    """

    isotopes: dict[str, tuple[Isotope, ...]]
    site_counts: dict[str, int]

    def __post_init__(self):
        if set(self.isotopes) != set(self.site_counts):
            raise ValueError("isotope map and site counts name different elements")
        for element, isos in self.isotopes.items():
            count = self.site_counts[element]
            if not (isinstance(count, int) and count > 0):
                raise ValueError(f"site count for {element} must be a positive integer")
            if not isos:
                raise ValueError(f"element {element} has no isotopes")
            total = math.fsum(i.abundance for i in isos)
            if abs(total - 1.0) > _ABUNDANCE_TOL:
                raise ValueError(
                    f"abundances of {element} sum to {total!r}, expected 1"
                )
            ranked = sorted(isos, key=lambda i: i.abundance, reverse=True)
            if len(ranked) > 1 and ranked[0].abundance == ranked[1].abundance:
                raise ValueError(
                    f"element {element} has tied dominant isotopes "
                    f"({ranked[0].mass_number} and {ranked[1].mass_number})"
                )

    def elements(self) -> tuple[str, ...]:
        return tuple(self.isotopes)

    def isotope(self, element: str, mass_number: int) -> Isotope:
        for iso in self._element(element):
            if iso.mass_number == mass_number:
                return iso
        raise KeyError(f"unknown isotope {element}-{mass_number}")

    def dominant(self, element: str) -> Isotope:
        """The most abundant isotope of ``element`` (unique by invariant)."""
        return max(self._element(element), key=lambda i: i.abundance)

    def abundance(self, element: str, mass_number: int) -> float:
        return self.isotope(element, mass_number).abundance

    def _element(self, element: str) -> tuple[Isotope, ...]:
        try:
            return self.isotopes[element]
        except KeyError:
            raise KeyError(f"unknown element {element!r}") from None


# Natural terrestrial abundances.  The deuterium value 0.0156% is the
# ocean-water D/H ratio, which is the default the broadening calibration
# is consistent with.
_NATURAL = {
    "H": (
        Isotope("H", 1, 1.007825, 0.999844),
        Isotope("H", 2, 2.014102, 0.000156),
    ),
    "O": (
        Isotope("O", 16, 15.994915, 0.99757),
        Isotope("O", 17, 16.999132, 0.00038),
        Isotope("O", 18, 17.999160, 0.00205),
    ),
    "Cl": (
        Isotope("Cl", 35, 34.968853, 0.7576),
        Isotope("Cl", 37, 36.965903, 0.2424),
    ),
    "Eu": (
        Isotope("Eu", 151, 150.919857, 0.478),
        Isotope("Eu", 153, 152.921237, 0.522),
    ),
}

# Sites per formula unit of EuCl3.6H2O.
FORMULA_SITE_COUNTS = {"H": 12, "O": 6, "Cl": 3, "Eu": 1}

# Direct ligand positions of one Eu ion: six water molecules and two Cl.
# The third Cl of the formula unit is a non-ligand lattice ion, so the
# satellite (nearest-neighbor substitution) model uses these counts while
# the broadening model uses the formula-unit counts above.
LIGAND_SITE_COUNTS = {"H": 12, "O": 6, "Cl": 2}


def natural_composition() -> CrystalComposition:
    """EuCl3.6H2O with natural terrestrial isotope abundances."""
    return CrystalComposition(isotopes=dict(_NATURAL), site_counts=dict(FORMULA_SITE_COUNTS))


def purify(
    c: CrystalComposition, element: str, mass_number: int, purity: float
) -> CrystalComposition:
    """Enrich one isotope of ``element`` to the given purity.

    The target isotope abundance becomes ``purity``; the remainder is
    shared among the other isotopes in proportion to their previous
    abundances.  Repeating the same call is a fixed point.
    """
    if not 0.0 < purity <= 1.0:
        raise ValueError(f"purity must be in (0, 1], got {purity}")
    isos = c.isotopes.get(element)
    if isos is None:
        raise KeyError(f"unknown element {element!r}")
    target = next((i for i in isos if i.mass_number == mass_number), None)
    if target is None:
        raise KeyError(f"unknown isotope {element}-{mass_number}")

    rest = 1.0 - target.abundance
    if rest == 0.0:
        scale = 0.0
        if purity < 1.0:
            raise ValueError(
                f"{element} is already monoisotopic in {mass_number}; cannot "
                f"distribute residual abundance {1.0 - purity}"
            )
    else:
        scale = (1.0 - purity) / rest

    updated = tuple(
        replace(i, abundance=purity)
        if i.mass_number == mass_number
        else replace(i, abundance=i.abundance * scale)
        for i in isos
    )
    isotopes = dict(c.isotopes)
    isotopes[element] = updated
    return CrystalComposition(isotopes=isotopes, site_counts=dict(c.site_counts))


@dataclass(frozen=True)
class LatticeGeometry:
    """Unit cell of the Eu sublattice.

    basis: three lattice vectors as rows, Angstrom.
    eu_sites: fractional coordinates of the Eu ions in the cell, in [0,1).
    c2_axis: unit vector of the crystal's C2 symmetry axis.
    """

    basis: np.ndarray
    eu_sites: np.ndarray
    c2_axis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float).reshape(3, 3)
        sites = np.atleast_2d(np.asarray(self.eu_sites, dtype=float))
        axis = np.asarray(self.c2_axis, dtype=float).reshape(3)
        if abs(np.linalg.det(basis)) < 1e-9:
            raise ValueError("basis vectors are linearly dependent (zero cell volume)")
        if sites.shape[1] != 3 or sites.shape[0] < 1:
            raise ValueError("eu_sites must be an (n, 3) array of fractional triples")
        if np.any(sites < 0.0) or np.any(sites >= 1.0):
            raise ValueError("fractional coordinates must lie in [0, 1)")
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ValueError("c2_axis must be a nonzero vector")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eu_sites", sites)
        object.__setattr__(self, "c2_axis", axis / norm)

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def perpendicular_heights(self) -> np.ndarray:
        """Distance between opposite cell faces along each lattice vector."""
        heights = np.empty(3)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            face = np.linalg.norm(np.cross(self.basis[j], self.basis[k]))
            heights[i] = self.cell_volume / face
        return heights


def load_geometry(path) -> LatticeGeometry:
    """Read a LatticeGeometry from a TOML file with a [cell] table."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        cell = doc["cell"]
        return LatticeGeometry(
            basis=np.array(cell["basis"], dtype=float),
            eu_sites=np.array(cell["eu_sites"], dtype=float),
            c2_axis=np.array(cell["c2_axis"], dtype=float),
        )
    except KeyError as exc:
        raise ValueError(f"geometry file {path} is missing key {exc}") from None


@dataclass(frozen=True)
class Shell:
    """One coordination shell: distance, unit directions, multiplicity."""

    distance_angstrom: float
    directions: np.ndarray = field(repr=False)

    @property
    def multiplicity(self) -> int:
        return self.directions.shape[0]

    @property
    def direction(self) -> np.ndarray:
        """A representative unit direction (first member of the shell)."""
        return self.directions[0]


def neighbor_shells(
    g: LatticeGeometry, cutoff: float, center_site: int = 0
) -> list[Shell]:
    """Coordination shells of one Eu site out to ``cutoff`` Angstrom.

    Shells are sorted by distance; neighbors whose distances agree within
    1e-3 Angstrom belong to one shell.  Multiplicity is the number of
    symmetry-equivalent neighbors at that distance (around the chosen
    basis site; the shipped EuCl3.6H2O geometry gives the same shells for
    every site).
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if not 0 <= center_site < g.eu_sites.shape[0]:
        raise IndexError(f"center_site {center_site} out of range")

    reach = np.ceil(cutoff / g.perpendicular_heights()).astype(int) + 1
    center = g.eu_sites[center_site]
    vectors = []
    ranges = [range(-int(n), int(n) + 1) for n in reach]
    for image in itertools.product(*ranges):
        for s, site in enumerate(g.eu_sites):
            if s == center_site and image == (0, 0, 0):
                continue
            delta = (site + np.asarray(image, dtype=float) - center) @ g.basis
            d = float(np.linalg.norm(delta))
            if 0.0 < d <= cutoff + 1e-9:
                vectors.append((d, delta / d))
    vectors.sort(key=lambda item: item[0])

    shells: list[Shell] = []
    group: list[tuple[float, np.ndarray]] = []
    for item in vectors:
        if group and item[0] - group[-1][0] > DISTANCE_TOL_ANGSTROM:
            shells.append(_make_shell(group))
            group = []
        group.append(item)
    if group:
        shells.append(_make_shell(group))
    return shells


def _make_shell(group) -> Shell:
    distance = math.fsum(d for d, _ in group) / len(group)
    directions = np.array([u for _, u in group])
    return Shell(distance_angstrom=distance, directions=directions)
