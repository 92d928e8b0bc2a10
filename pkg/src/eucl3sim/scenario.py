"""Scenario files: TOML schema, validation and typed sections.

A scenario collects everything a run needs: composition overrides, level
schemes, lineshape, pump and blockade settings, memory inputs and the
global seed.  The whole file is validated before any computation starts;
errors name the offending section and key (e.g. ``pump.beta``).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .composition import (
    CrystalComposition,
    LatticeGeometry,
    load_geometry,
    natural_composition,
    purify,
)
from .holeburn import PumpScenario
from .interactions import Drive, InteractionModel
from .levels import (
    DEFAULT_ISOTOPE_SHIFT_MHZ,
    EXCITED,
    GROUND,
    IsotopeLevelSet,
    LevelScheme,
    TransitionTable,
    build_transitions,
)
from .spectrum import LINESHAPE_KINDS, FrequencyGrid, LineShape

from . import data as _data


class ScenarioError(ValueError):
    """Scenario file failed validation; message names section and key."""


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _table(doc, key, path=""):
    value = doc.get(key)
    full = f"{path}.{key}" if path else key
    if value is None:
        return None
    if not isinstance(value, dict):
        raise ScenarioError(f"{full}: expected a table")
    return value


def _check_keys(table, allowed, path):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ScenarioError(f"{path}: unknown key(s) {sorted(unknown)}")


def _num(table, key, path, default=None, required=False, lo=None, hi=None):
    if key not in table:
        if required:
            raise ScenarioError(f"{path}.{key}: missing required value")
        return default
    value = table[key]
    if not _is_number(value):
        raise ScenarioError(f"{path}.{key}: expected a number, got {value!r}")
    value = float(value)
    if lo is not None and value < lo:
        raise ScenarioError(f"{path}.{key}: must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ScenarioError(f"{path}.{key}: must be <= {hi}, got {value}")
    return value


def _int(table, key, path, default=None, required=False, lo=None):
    if key not in table:
        if required:
            raise ScenarioError(f"{path}.{key}: missing required value")
        return default
    value = table[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise ScenarioError(f"{path}.{key}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(f"{path}.{key}: must be >= {lo}, got {value}")
    return value


def _str(table, key, path, default=None, required=False, choices=None):
    if key not in table:
        if required:
            raise ScenarioError(f"{path}.{key}: missing required value")
        return default
    value = table[key]
    if not isinstance(value, str):
        raise ScenarioError(f"{path}.{key}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ScenarioError(f"{path}.{key}: must be one of {sorted(choices)}")
    return value


def _numlist(table, key, path, length=None, required=False, default=None):
    if key not in table:
        if required:
            raise ScenarioError(f"{path}.{key}: missing required value")
        return default
    value = table[key]
    if not isinstance(value, list) or not all(_is_number(v) for v in value):
        raise ScenarioError(f"{path}.{key}: expected a list of numbers")
    if length is not None and len(value) != length:
        raise ScenarioError(f"{path}.{key}: expected {length} entries, got {len(value)}")
    return [float(v) for v in value]


def _lineshape(table, path, default_kind="lorentzian", default_fwhm=25.0) -> LineShape:
    _check_keys(table, {"kind", "fwhm_mhz", "eta"}, path)
    kind = _str(table, "kind", path, default=default_kind, choices=LINESHAPE_KINDS)
    fwhm = _num(table, "fwhm_mhz", path, default=default_fwhm)
    eta = _num(table, "eta", path, default=0.5, lo=0.0, hi=1.0)
    try:
        return LineShape(kind=kind, fwhm_mhz=fwhm, eta=eta)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class BroadenSection:
    base_mhz: float = 0.0
    rule: str = "linear"


@dataclass(frozen=True)
class SatelliteSpec:
    """Satellite class: substituting isotope on n ligand positions; the
    abundance comes from the (possibly purified) composition at run time."""

    element: str
    isotope: int
    positions: int
    shift_mhz: float


@dataclass(frozen=True)
class SpectrumSection:
    grid: FrequencyGrid
    satellites: tuple[SatelliteSpec, ...]
    fit_seeded_from_lines: bool
    fit_max_peaks: int
    resolved_threshold: float


@dataclass(frozen=True)
class PumpSection:
    isotope: int
    pump: PumpScenario
    profile: LineShape
    n_classes: int
    span_fwhms: float
    oscillator_strength: float
    density_g_cm3: float
    molar_mass_g_mol: float
    feature_kind: str


@dataclass(frozen=True)
class BlockadeSection:
    supercell: tuple[int, int, int]
    cutoff_angstrom: float
    inhom: LineShape
    model: InteractionModel
    t1_s: float
    drive: Drive
    trajectories: int
    pump_probe: Drive
    probe_fwhm_mhz: float
    density_supercell: tuple[int, int, int]
    density_inhom_fwhm_mhz: float
    density_grid: tuple[float, ...]
    density_draws: int
    blockade_threshold_mhz: float


@dataclass(frozen=True)
class MemorySection:
    alpha_cm1: float
    length_cm: float
    target_efficiency: float


@dataclass(frozen=True)
class Scenario:
    path: Path
    seed: int
    composition: CrystalComposition
    geometry: LatticeGeometry
    level_sets: dict[int, IsotopeLevelSet]
    strengths: dict[int, np.ndarray]
    lineshape: LineShape | None
    broaden: BroadenSection
    spectrum: SpectrumSection | None
    pump: PumpSection | None
    blockade: BlockadeSection | None
    memory: MemorySection | None

    def table(self, isotope: int) -> TransitionTable:
        if isotope not in self.level_sets:
            raise ScenarioError(f"levels.eu{isotope}: section required but missing")
        return build_transitions(self.level_sets[isotope], self.strengths.get(isotope))

    def isotope_weights(self) -> dict[int, float]:
        return {
            iso.mass_number: iso.abundance for iso in self.composition.isotopes["Eu"]
        }


def resolve_scenario_path(name_or_path) -> Path:
    """An existing file wins; otherwise shipped scenario names resolve."""
    p = Path(name_or_path)
    if p.exists():
        return p
    try:
        return _data.scenario_path(str(name_or_path))
    except KeyError:
        raise ScenarioError(
            f"scenario {name_or_path!r} is neither a file nor a shipped "
            f"scenario {list(_data.scenario_names())}"
        ) from None


_TOP_KEYS = {
    "seed",
    "composition",
    "broaden",
    "geometry",
    "levels",
    "lineshape",
    "spectrum",
    "pump",
    "blockade",
    "memory",
}


def load_scenario(name_or_path) -> Scenario:
    path = resolve_scenario_path(name_or_path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: invalid TOML: {exc}") from None
    _check_keys(doc, _TOP_KEYS, str(path.name))

    seed = _int(doc, "seed", "scenario", default=0, lo=0)
    composition = _parse_composition(_table(doc, "composition"))
    geometry = _parse_geometry(_table(doc, "geometry"), path)
    level_sets, strengths = _parse_levels(_table(doc, "levels"))
    broaden = _parse_broaden(_table(doc, "broaden"))

    lineshape = None
    if "lineshape" in doc:
        lineshape = _lineshape(_table(doc, "lineshape"), "lineshape")

    spectrum = _parse_spectrum(_table(doc, "spectrum"), composition)
    pump = _parse_pump(_table(doc, "pump"), level_sets)
    blockade = _parse_blockade(_table(doc, "blockade"))
    memory = _parse_memory(_table(doc, "memory"))

    if spectrum is not None and lineshape is None:
        raise ScenarioError("lineshape: section required when [spectrum] is present")

    return Scenario(
        path=path,
        seed=seed,
        composition=composition,
        geometry=geometry,
        level_sets=level_sets,
        strengths=strengths,
        lineshape=lineshape,
        broaden=broaden,
        spectrum=spectrum,
        pump=pump,
        blockade=blockade,
        memory=memory,
    )


def _parse_composition(table) -> CrystalComposition:
    comp = natural_composition()
    if table is None:
        return comp
    _check_keys(table, {"purify"}, "composition")
    directives = table.get("purify", [])
    if not isinstance(directives, list):
        raise ScenarioError("composition.purify: expected a list of tables")
    for i, entry in enumerate(directives):
        path = f"composition.purify[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{path}: expected a table")
        _check_keys(entry, {"element", "isotope", "purity"}, path)
        element = _str(entry, "element", path, required=True)
        isotope = _int(entry, "isotope", path, required=True, lo=1)
        purity = _num(entry, "purity", path, required=True)
        if not 0.0 < purity <= 1.0:
            raise ScenarioError(f"{path}.purity: must lie in (0, 1], got {purity}")
        try:
            comp = purify(comp, element, isotope, purity)
        except KeyError as exc:
            raise ScenarioError(f"{path}: {exc.args[0]}") from None
    return comp


def _parse_geometry(table, scenario_path: Path) -> LatticeGeometry:
    if table is None:
        return load_geometry(_data.geometry_path())
    _check_keys(table, {"file"}, "geometry")
    name = _str(table, "file", "geometry", required=True)
    candidate = Path(name)
    if not candidate.is_absolute():
        candidate = scenario_path.parent / candidate
    if not candidate.exists():
        raise ScenarioError(f"geometry.file: {candidate} does not exist")
    try:
        return load_geometry(candidate)
    except ValueError as exc:
        raise ScenarioError(f"geometry.file: {exc}") from None


def _parse_levels(table):
    level_sets: dict[int, IsotopeLevelSet] = {}
    strengths: dict[int, np.ndarray] = {}
    if table is None:
        return level_sets, strengths
    _check_keys(table, {"isotope_shift_mhz", "eu151", "eu153"}, "levels")
    shift = _num(table, "isotope_shift_mhz", "levels", default=DEFAULT_ISOTOPE_SHIFT_MHZ)
    offsets = {151: 0.0, 153: shift}
    for isotope in (151, 153):
        sub = _table(table, f"eu{isotope}", "levels")
        if sub is None:
            continue
        path = f"levels.eu{isotope}"
        _check_keys(sub, {"ground", "excited", "strengths"}, path)
        ground = _numlist(sub, "ground", path, length=3, required=True)
        excited = _numlist(sub, "excited", path, length=3, required=True)
        try:
            level_sets[isotope] = IsotopeLevelSet(
                isotope=isotope,
                ground=LevelScheme(GROUND, tuple(ground)),
                excited=LevelScheme(EXCITED, tuple(excited)),
                offset_mhz=offsets[isotope],
            )
        except ValueError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
        if "strengths" in sub:
            matrix = sub["strengths"]
            ok = (
                isinstance(matrix, list)
                and len(matrix) == 3
                and all(
                    isinstance(row, list)
                    and len(row) == 3
                    and all(_is_number(v) for v in row)
                    for row in matrix
                )
            )
            if not ok:
                raise ScenarioError(f"{path}.strengths: expected a 3x3 number matrix")
            strengths[isotope] = np.array(matrix, dtype=float)
    if len(level_sets) == 2:
        got = level_sets[153].offset_mhz - level_sets[151].offset_mhz
        if abs(got - shift) > 1e-9:
            raise ScenarioError("levels.isotope_shift_mhz: offsets inconsistent")
    return level_sets, strengths


def _parse_broaden(table) -> BroadenSection:
    if table is None:
        return BroadenSection()
    _check_keys(table, {"base_mhz", "rule"}, "broaden")
    return BroadenSection(
        base_mhz=_num(table, "base_mhz", "broaden", default=0.0, lo=0.0),
        rule=_str(table, "rule", "broaden", default="linear", choices=("linear", "quadrature")),
    )


def _parse_spectrum(table, composition: CrystalComposition):
    if table is None:
        return None
    path = "spectrum"
    _check_keys(
        table,
        {
            "grid_start_mhz",
            "grid_step_mhz",
            "grid_count",
            "satellites",
            "fit_seeded_from_lines",
            "fit_max_peaks",
            "resolved_threshold",
        },
        path,
    )
    grid = FrequencyGrid(
        start_mhz=_num(table, "grid_start_mhz", path, required=True),
        step_mhz=_num(table, "grid_step_mhz", path, required=True, lo=1e-9),
        count=_int(table, "grid_count", path, required=True, lo=2),
    )
    satellites = []
    raw = table.get("satellites", [])
    if not isinstance(raw, list):
        raise ScenarioError(f"{path}.satellites: expected a list of tables")
    for i, entry in enumerate(raw):
        spath = f"{path}.satellites[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{spath}: expected a table")
        _check_keys(entry, {"element", "isotope", "positions", "shift_mhz"}, spath)
        element = _str(entry, "element", spath, required=True)
        isotope = _int(entry, "isotope", spath, required=True, lo=1)
        try:
            composition.isotope(element, isotope)
        except KeyError as exc:
            raise ScenarioError(f"{spath}: {exc.args[0]}") from None
        satellites.append(
            SatelliteSpec(
                element=element,
                isotope=isotope,
                positions=_int(entry, "positions", spath, required=True, lo=1),
                shift_mhz=_num(entry, "shift_mhz", spath, required=True),
            )
        )
    flag = table.get("fit_seeded_from_lines", False)
    if not isinstance(flag, bool):
        raise ScenarioError(f"{path}.fit_seeded_from_lines: expected a boolean")
    return SpectrumSection(
        grid=grid,
        satellites=tuple(satellites),
        fit_seeded_from_lines=flag,
        fit_max_peaks=_int(table, "fit_max_peaks", path, default=10, lo=1),
        resolved_threshold=_num(table, "resolved_threshold", path, default=0.2, lo=1e-6, hi=0.999999),
    )


def _parse_pump(table, level_sets):
    if table is None:
        return None
    path = "pump"
    _check_keys(
        table,
        {
            "isotope",
            "bands_mhz",
            "pump_rate_per_s",
            "rf_rate_per_s",
            "t1_s",
            "beta",
            "ground_relaxation_per_s",
            "soft_edge_mhz",
            "profile_kind",
            "profile_fwhm_mhz",
            "n_classes",
            "span_fwhms",
            "oscillator_strength",
            "density_g_cm3",
            "molar_mass_g_mol",
            "feature_kind",
        },
        path,
    )
    isotope = _int(table, "isotope", path, default=153)
    if isotope not in (151, 153):
        raise ScenarioError(f"{path}.isotope: must be 151 or 153")
    if isotope not in level_sets:
        raise ScenarioError(f"levels.eu{isotope}: required by [pump] but missing")
    raw_bands = table.get("bands_mhz")
    if (
        not isinstance(raw_bands, list)
        or not raw_bands
        or not all(
            isinstance(b, list) and len(b) == 2 and all(_is_number(v) for v in b)
            for b in raw_bands
        )
    ):
        raise ScenarioError(f"{path}.bands_mhz: expected a list of [lo, hi] pairs")
    beta = _numlist(table, "beta", path, length=3, default=[1 / 3, 1 / 3, 1 / 3])
    if abs(sum(beta) - 1.0) > 1e-12 or any(b < 0 for b in beta):
        raise ScenarioError(
            f"{path}.beta: branching ratios must be non-negative and sum to 1, got {beta}"
        )
    try:
        pump = PumpScenario(
            bands_mhz=tuple((b[0], b[1]) for b in raw_bands),
            pump_rate=_num(table, "pump_rate_per_s", path, required=True, lo=0.0),
            rf_rate=_num(table, "rf_rate_per_s", path, default=0.0, lo=0.0),
            t1_s=_num(table, "t1_s", path, default=2e-3, lo=1e-12),
            branching=tuple(beta),
            ground_relaxation=_num(table, "ground_relaxation_per_s", path, default=0.0, lo=0.0),
            soft_edge_mhz=_num(table, "soft_edge_mhz", path, default=None),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    profile = LineShape(
        kind=_str(table, "profile_kind", path, default="gaussian", choices=LINESHAPE_KINDS),
        fwhm_mhz=_num(table, "profile_fwhm_mhz", path, default=25.0, lo=1e-9),
    )
    return PumpSection(
        isotope=isotope,
        pump=pump,
        profile=profile,
        n_classes=_int(table, "n_classes", path, default=1001, lo=1),
        span_fwhms=_num(table, "span_fwhms", path, default=4.0, lo=0.1),
        oscillator_strength=_num(table, "oscillator_strength", path, default=3e-9, lo=0.0),
        density_g_cm3=_num(table, "density_g_cm3", path, default=2.42, lo=0.0),
        molar_mass_g_mol=_num(table, "molar_mass_g_mol", path, default=366.4, lo=1e-9),
        feature_kind=_str(table, "feature_kind", path, default="lorentzian", choices=LINESHAPE_KINDS),
    )


def _drive(table, path) -> Drive:
    if not isinstance(table, dict):
        raise ScenarioError(f"{path}: expected a table")
    _check_keys(table, {"frequency_mhz", "rate_per_s", "duration_s", "linewidth_mhz"}, path)
    try:
        return Drive(
            frequency_mhz=_num(table, "frequency_mhz", path, default=0.0),
            rate_per_s=_num(table, "rate_per_s", path, required=True, lo=0.0),
            duration_s=_num(table, "duration_s", path, required=True, lo=0.0),
            linewidth_mhz=_num(table, "linewidth_mhz", path, default=1.0, lo=1e-9),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def _parse_blockade(table):
    if table is None:
        return None
    path = "blockade"
    _check_keys(
        table,
        {
            "supercell",
            "cutoff_angstrom",
            "inhom_kind",
            "inhom_fwhm_mhz",
            "d_static",
            "d_trans",
            "t_max_mhz",
            "overrides",
            "t1_s",
            "drive",
            "trajectories",
            "pump_probe",
            "probe_fwhm_mhz",
            "density_supercell",
            "density_inhom_fwhm_mhz",
            "density_grid",
            "density_draws",
            "blockade_threshold_mhz",
        },
        path,
    )
    supercell = _numlist(table, "supercell", path, length=3, required=True)
    density_supercell = _numlist(
        table, "density_supercell", path, length=3, default=supercell
    )
    for name, cell in (("supercell", supercell), ("density_supercell", density_supercell)):
        if any(v != int(v) or v < 1 for v in cell):
            raise ScenarioError(f"{path}.{name}: expected positive integers")
    overrides = []
    raw = table.get("overrides", [])
    if not isinstance(raw, list):
        raise ScenarioError(f"{path}.overrides: expected a list of tables")
    for i, entry in enumerate(raw):
        opath = f"{path}.overrides[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{opath}: expected a table")
        _check_keys(entry, {"distance_angstrom", "v_mhz"}, opath)
        overrides.append(
            (
                _num(entry, "distance_angstrom", opath, required=True, lo=1e-9),
                _num(entry, "v_mhz", opath, required=True),
            )
        )
    try:
        model = InteractionModel(
            d_static=_num(table, "d_static", path, default=1.0e-32, lo=0.0),
            d_trans=_num(table, "d_trans", path, default=1.6e-33, lo=0.0),
            shell_overrides=tuple(overrides),
            t_max_mhz=_num(table, "t_max_mhz", path, default=5.0, lo=0.0),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    inhom = LineShape(
        kind=_str(table, "inhom_kind", path, default="gaussian", choices=LINESHAPE_KINDS),
        fwhm_mhz=_num(table, "inhom_fwhm_mhz", path, default=25.0, lo=1e-9),
    )
    density_grid = _numlist(table, "density_grid", path, default=[0.0, 0.25, 0.5])
    if any(not 0.0 <= v <= 1.0 for v in density_grid):
        raise ScenarioError(f"{path}.density_grid: densities must lie in [0, 1]")
    return BlockadeSection(
        supercell=tuple(int(v) for v in supercell),
        cutoff_angstrom=_num(table, "cutoff_angstrom", path, required=True, lo=1e-9),
        inhom=inhom,
        model=model,
        t1_s=_num(table, "t1_s", path, default=2e-3, lo=1e-12),
        drive=_drive(table.get("drive"), f"{path}.drive"),
        trajectories=_int(table, "trajectories", path, default=12, lo=1),
        pump_probe=_drive(table.get("pump_probe", table.get("drive")), f"{path}.pump_probe"),
        probe_fwhm_mhz=_num(table, "probe_fwhm_mhz", path, default=2.0, lo=1e-9),
        density_supercell=tuple(int(v) for v in density_supercell),
        density_inhom_fwhm_mhz=_num(table, "density_inhom_fwhm_mhz", path, default=25.0, lo=1e-9),
        density_grid=tuple(density_grid),
        density_draws=_int(table, "density_draws", path, default=4, lo=1),
        blockade_threshold_mhz=_num(table, "blockade_threshold_mhz", path, default=25.0, lo=1e-9),
    )


def _parse_memory(table):
    if table is None:
        return None
    path = "memory"
    _check_keys(table, {"alpha_cm1", "length_cm", "target_efficiency"}, path)
    return MemorySection(
        alpha_cm1=_num(table, "alpha_cm1", path, required=True, lo=0.0),
        length_cm=_num(table, "length_cm", path, required=True, lo=1e-12),
        target_efficiency=_num(table, "target_efficiency", path, default=0.9, lo=0.0, hi=0.999999999),
    )
