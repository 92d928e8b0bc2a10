"""Hyperfine level schemes of the two Eu isotopes and their transition table.

Each of the ground (7F0) and excited (5D0) manifolds splits into three
doubly degenerate hyperfine levels (I = 5/2 electric quadrupole structure).
Level energies are configuration data in MHz, lowest level at zero; the
9-entry transition table drives spectrum synthesis and optical pumping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GROUND = "ground"
EXCITED = "excited"

DEFAULT_ISOTOPE_SHIFT_MHZ = 200.0


@dataclass(frozen=True)
class LevelScheme:
    """Three hyperfine energies (MHz) of one manifold, ascending, first 0."""

    manifold: str
    energies: tuple[float, float, float]

    def __post_init__(self):
        if self.manifold not in (GROUND, EXCITED):
            raise ValueError(f"manifold must be '{GROUND}' or '{EXCITED}'")
        e = tuple(float(x) for x in self.energies)
        if len(e) != 3:
            raise ValueError("a manifold has exactly three hyperfine levels")
        if e[0] != 0.0:
            raise ValueError("lowest level must sit at 0 MHz")
        if not (e[0] <= e[1] <= e[2]):
            raise ValueError("energies must be sorted ascending")
        object.__setattr__(self, "energies", e)

    @property
    def splittings(self) -> tuple[float, float]:
        """Adjacent-level splittings (E2-E1, E3-E2)."""
        e = self.energies
        return (e[1] - e[0], e[2] - e[1])


@dataclass(frozen=True)
class IsotopeLevelSet:
    """Ground and excited schemes of one Eu isotope plus its optical offset.

    The offset is the isotope shift of the optical transition relative to
    the reference isotope (151 at 0 by convention, 153 at +200 MHz).
    """

    isotope: int
    ground: LevelScheme
    excited: LevelScheme
    offset_mhz: float = 0.0

    def __post_init__(self):
        if self.isotope not in (151, 153):
            raise ValueError("isotope must be 151 or 153")
        if self.ground.manifold != GROUND or self.excited.manifold != EXCITED:
            raise ValueError("level sets need one ground and one excited scheme")

    def transition_frequency(self, ground_index: int, excited_index: int) -> float:
        """Frequency (MHz) of g_i -> e_j, indices 1..3."""
        return (
            self.offset_mhz
            + self.excited.energies[excited_index - 1]
            - self.ground.energies[ground_index - 1]
        )


@dataclass(frozen=True)
class TransitionTable:
    """The 9 optical transitions of one isotope.

    ``ground_index``/``excited_index`` are 1-based level labels; strengths
    are normalized so the largest entry is 1.
    """

    ground_index: np.ndarray
    excited_index: np.ndarray
    frequency_mhz: np.ndarray
    strength: np.ndarray

    def __post_init__(self):
        for name in ("ground_index", "excited_index", "frequency_mhz", "strength"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if not (
            len(self.ground_index)
            == len(self.excited_index)
            == len(self.frequency_mhz)
            == len(self.strength)
            == 9
        ):
            raise ValueError("a transition table has exactly 9 entries")

    def frequency(self, ground_index: int, excited_index: int) -> float:
        mask = (self.ground_index == ground_index) & (
            self.excited_index == excited_index
        )
        (idx,) = np.nonzero(mask)
        return float(self.frequency_mhz[idx[0]])

    def strength_of(self, ground_index: int, excited_index: int) -> float:
        mask = (self.ground_index == ground_index) & (
            self.excited_index == excited_index
        )
        (idx,) = np.nonzero(mask)
        return float(self.strength[idx[0]])


def build_transitions(s: IsotopeLevelSet, strengths=None) -> TransitionTable:
    """Assemble the 9-line table for one isotope.

    ``strengths`` is a 3x3 matrix indexed [ground, excited]; all-equal by
    default.  Values are copied and max-normalized.
    """
    if strengths is None:
        strengths = np.ones((3, 3))
    strengths = np.asarray(strengths, dtype=float)
    if strengths.shape != (3, 3):
        raise ValueError("strengths must be a 3x3 matrix")
    if np.any(strengths < 0):
        raise ValueError("strengths must be non-negative")
    peak = strengths.max()
    if peak == 0:
        raise ValueError("strength matrix is all zero")

    gi, ej, freqs, amps = [], [], [], []
    for i in range(1, 4):
        for j in range(1, 4):
            gi.append(i)
            ej.append(j)
            freqs.append(s.transition_frequency(i, j))
            amps.append(strengths[i - 1, j - 1] / peak)
    return TransitionTable(
        ground_index=np.array(gi),
        excited_index=np.array(ej),
        frequency_mhz=np.array(freqs),
        strength=np.array(amps),
    )


@dataclass(frozen=True)
class SplittingRatioReport:
    """153/151 ratio of each hyperfine splitting and a pass flag."""

    ratios: tuple[float, float, float, float]
    target: float
    tolerance: float

    @property
    def passed(self) -> bool:
        lo, hi = self.target - self.tolerance, self.target + self.tolerance
        return all(lo <= r <= hi for r in self.ratios)


def check_isotope_ratio(
    s151: IsotopeLevelSet,
    s153: IsotopeLevelSet,
    target: float = 2.0,
    tolerance: float = 0.6,
) -> SplittingRatioReport:
    """Compare the four hyperfine splittings of 153 against 2x those of 151.

    The wide default tolerance reflects that the factor two is approximate.
    Raises on a zero 151 splitting (ratio undefined).
    """
    pairs = list(zip(s153.ground.splittings, s151.ground.splittings)) + list(
        zip(s153.excited.splittings, s151.excited.splittings)
    )
    ratios = []
    for big, small in pairs:
        if small == 0.0:
            raise ValueError("ratio undefined: 151 splitting is zero")
        ratios.append(big / small)
    return SplittingRatioReport(
        ratios=tuple(ratios), target=target, tolerance=tolerance
    )
