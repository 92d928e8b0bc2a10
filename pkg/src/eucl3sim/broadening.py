"""Additive isotope-disorder model of the inhomogeneous linewidth.

A substituting isotope broadens the optical line in proportion to its
abundance, its site concentration and the relative mass perturbation it
causes.  The single calibration input is the measured deuterium rate,
91 MHz per percent D concentration; everything else follows from

    contribution = K * (dm / m_sub) * (n_element / n_H) * abundance_percent

with K = 91 / 0.5 = 182 MHz/% (0.5 being the D->H mass factor).  Mass
ratios use integer mass numbers so that evaluating the model back on
deuterium returns the calibration rate exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .composition import CrystalComposition, purify

COMBINATION_RULES = ("linear", "quadrature")


@dataclass(frozen=True)
class BroadeningModel:
    """Calibrated broadening rate plus the rule for combining terms."""

    rate_d_mhz_per_percent: float = 91.0
    calibration_mass_factor: float = 0.5
    rule: str = "linear"
    calibration_element: str = "H"

    def __post_init__(self):
        if self.rate_d_mhz_per_percent <= 0:
            raise ValueError("calibration rate must be positive")
        if not 0 < self.calibration_mass_factor <= 1:
            raise ValueError("calibration mass factor must be in (0, 1]")
        if self.rule not in COMBINATION_RULES:
            raise ValueError(f"rule must be one of {COMBINATION_RULES}")

    @property
    def master_coefficient(self) -> float:
        """MHz/% per unit mass factor per unit site ratio (182 by default)."""
        return self.rate_d_mhz_per_percent / self.calibration_mass_factor


def isotope_contribution(
    m: BroadeningModel, c: CrystalComposition, element: str, mass_number: int
) -> float:
    """Linewidth contribution (MHz) of one non-dominant isotope.

    Raises ValueError for the dominant isotope itself: its "contribution"
    is undefined (there is no substitution), and report-level code treats
    it as zero.
    """
    iso = c.isotope(element, mass_number)
    dom = c.dominant(element)
    if iso.mass_number == dom.mass_number:
        raise ValueError(
            f"{element}-{mass_number} is the dominant isotope; no disorder term"
        )
    dm = abs(iso.mass_number - dom.mass_number)
    mass_factor = dm / iso.mass_number
    site_factor = c.site_counts[element] / c.site_counts[m.calibration_element]
    return m.master_coefficient * mass_factor * site_factor * (iso.abundance * 100.0)


@dataclass(frozen=True)
class BroadeningReport:
    """Per-isotope contributions (MHz) plus base width and combined total."""

    contributions: dict[tuple[str, int], float]
    base_mhz: float
    rule: str
    total_mhz: float = field(init=False)

    def __post_init__(self):
        if any(v < 0 for v in self.contributions.values()):
            raise ValueError("contributions must be non-negative")
        if self.base_mhz < 0:
            raise ValueError("base width must be non-negative")
        object.__setattr__(self, "total_mhz", self._combine())

    def _combine(self) -> float:
        parts = list(self.contributions.values())
        if self.rule == "linear":
            return self.base_mhz + math.fsum(parts)
        return math.sqrt(self.base_mhz**2 + math.fsum(p * p for p in parts))

    def element_totals(self) -> dict[str, float]:
        """Summed contribution per element (same combination rule)."""
        out: dict[str, float] = {}
        for (element, _), value in self.contributions.items():
            if self.rule == "linear":
                out[element] = out.get(element, 0.0) + value
            else:
                out[element] = math.hypot(out.get(element, 0.0), value)
        return out

    def to_json_dict(self) -> dict:
        per_isotope = {
            f"{element.lower()}{mass}": value
            for (element, mass), value in sorted(self.contributions.items())
        }
        return {
            "per_isotope_mhz": per_isotope,
            "element_totals_mhz": {
                k.lower(): v for k, v in sorted(self.element_totals().items())
            },
            "base_mhz": self.base_mhz,
            "rule": self.rule,
            "total_mhz": self.total_mhz,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["element", "isotope", "contribution_mhz"])
        for (element, mass), value in sorted(self.contributions.items()):
            writer.writerow([element, mass, repr(value)])
        writer.writerow(["base", "", repr(self.base_mhz)])
        writer.writerow(["total", "", repr(self.total_mhz)])
        return buf.getvalue()


def total_linewidth(
    m: BroadeningModel, c: CrystalComposition, base: float = 0.0
) -> BroadeningReport:
    """Combine every non-dominant isotope's contribution with a base width."""
    if base < 0:
        raise ValueError("base width must be non-negative")
    contributions = {}
    for element in c.elements():
        dom = c.dominant(element)
        for iso in c.isotopes[element]:
            if iso.mass_number == dom.mass_number:
                continue
            contributions[(element, iso.mass_number)] = isotope_contribution(
                m, c, element, iso.mass_number
            )
    return BroadeningReport(contributions=contributions, base_mhz=base, rule=m.rule)


def broadening_vs_purity(
    m: BroadeningModel,
    c: CrystalComposition,
    element: str,
    mass_number: int,
    purity_grid,
) -> np.ndarray:
    """Residual contribution of the *other* isotopes of ``element`` after
    enriching ``mass_number`` to each purity in the grid.

    Returns an array aligned with the grid; monotone non-increasing as
    purity approaches 1.
    """
    grid = np.asarray(purity_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("purity grid is empty")
    if np.any((grid <= 0) | (grid > 1)):
        raise ValueError("purity values must lie in (0, 1]")
    out = np.empty(grid.shape)
    for i, purity in enumerate(grid.ravel()):
        pure = purify(c, element, mass_number, float(purity))
        dom = pure.dominant(element)
        total = 0.0
        for iso in pure.isotopes[element]:
            if iso.mass_number != dom.mass_number:
                total += isotope_contribution(m, pure, element, iso.mass_number)
        out.ravel()[i] = total
    return out
