"""Scenario-driven command line: parse, validate, dispatch, write artifacts.

Artifacts are deterministic (identical scenario + seed gives identical
bytes) and written atomically via a temp file and rename.  Exit codes:
0 success, 1 validation error, 2 runtime/convergence error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import click
import numpy as np

from .broadening import BroadeningModel, total_linewidth
from .composition import neighbor_shells
from .constants import AVOGADRO
from .errors import SimulationError
from .holeburn import ClassEnsemble, optical_depth, prepare_population
from .interactions import (
    Lattice,
    blockade_radius,
    diagonal_shift,
    dipole_ratio,
    far_field_shift,
    independent_excited_fraction,
    linewidth_vs_excited_density,
    pair_shift_matrix,
    simulate_excitation,
    unpumped_spectrum,
)
from .memory import DepthBudget, absorption_over_length, gem_efficiency, required_depth
from .scenario import Scenario, ScenarioError, load_scenario
from .spectrum import (
    LineSet,
    LineShape,
    FrequencyGrid,
    PositionClass,
    SatelliteModel,
    Spectrum,
    apply_satellites,
    envelope_width,
    fit_peaks,
    resolved_count,
    synthesize_lines,
)

SUBCOMMANDS = ("broaden", "spectrum", "pump", "blockade", "memory", "all")

# Stable per-module stream ids for seed splitting: the global seed plus one
# of these ids feeds a SeedSequence, so adding a module later cannot perturb
# existing streams.
MODULE_STREAM_IDS = {"spectrum": 2, "pump": 3, "blockade": 4, "memory": 5}


def subseed(seed: int, *key: int) -> int:
    """Derive a child seed from the global seed and an integer key path."""
    state = np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1, np.uint64)
    return int(state[0])


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) else v for v in row])
    return buf.getvalue()


def _require(scn: Scenario, section: str):
    value = getattr(scn, section)
    if value is None:
        raise ScenarioError(f"{section}: section required by this subcommand but missing")
    return value


def broaden_artifacts(scn: Scenario) -> dict[str, str]:
    model = BroadeningModel(rule=scn.broaden.rule)
    report = total_linewidth(model, scn.composition, base=scn.broaden.base_mhz)
    return {
        "broadening.json": _json_text(report.to_json_dict()),
        "broadening.csv": report.to_csv(),
    }


def _scenario_lines(scn: Scenario) -> tuple[LineSet, list[tuple[float, float, float]]]:
    """Weighted line set of both isotopes plus (center, fwhm, height) seeds."""
    weights = scn.isotope_weights()
    shape = scn.lineshape
    tables = [(iso, scn.table(iso)) for iso in sorted(scn.level_sets)]
    if not tables:
        raise ScenarioError("levels: at least one isotope section is required")
    freqs, amps, seeds = [], [], []
    for iso, table in tables:
        w = weights.get(iso, 0.0)
        freqs.append(table.frequency_mhz)
        amps.append(w * table.strength)
        for f, s in zip(table.frequency_mhz, table.strength):
            seeds.append((float(f), shape.fwhm_mhz, float(w * s * shape.peak_height)))
    return LineSet(np.concatenate(freqs), np.concatenate(amps)), seeds


def spectrum_artifacts(scn: Scenario) -> dict[str, str]:
    section = _require(scn, "spectrum")
    lines, seeds = _scenario_lines(scn)
    if section.satellites:
        classes = tuple(
            PositionClass(
                label=f"{spec.element.lower()}{spec.isotope}",
                positions=spec.positions,
                abundance=scn.composition.abundance(spec.element, spec.isotope),
                shift_mhz=spec.shift_mhz,
            )
            for spec in section.satellites
        )
        lines = apply_satellites(lines, SatelliteModel(classes=classes))
    spec = synthesize_lines(lines, scn.lineshape, section.grid)
    fit = fit_peaks(
        spec,
        kind=scn.lineshape.kind,
        max_peaks=section.fit_max_peaks,
        eta=scn.lineshape.eta,
        seeds=seeds if section.fit_seeded_from_lines else None,
    )
    report = fit.to_json_dict()
    report["resolved_count"] = resolved_count(spec, section.resolved_threshold)
    report["resolved_threshold"] = section.resolved_threshold
    report["envelope_width_mhz_at_10pct"] = envelope_width(spec, 0.1)
    return {"spectrum.csv": spec.to_csv(), "spectrum_fit.json": _json_text(report)}


def pump_artifacts(scn: Scenario) -> dict[str, str]:
    section = _require(scn, "pump")
    table = scn.table(section.isotope)
    ensemble = ClassEnsemble.build(
        table,
        profile=section.profile,
        n_classes=section.n_classes,
        span_fwhms=section.span_fwhms,
    )
    prep = prepare_population(ensemble, section.pump)
    n_formula = section.density_g_cm3 / section.molar_mass_g_mol * AVOGADRO
    isotope_fraction = scn.composition.abundance("Eu", section.isotope)
    alpha = optical_depth(
        prep.global_fraction,
        section.oscillator_strength,
        n_formula * isotope_fraction,
        section.profile.fwhm_mhz,
        kind=section.feature_kind,
    )
    summary = {
        "global_fraction": prep.global_fraction,
        "center_fraction": prep.center_fraction,
        "alpha_cm1": alpha,
        "inputs": {
            "isotope": section.isotope,
            "oscillator_strength": section.oscillator_strength,
            "density_g_cm3": section.density_g_cm3,
            "molar_mass_g_mol": section.molar_mass_g_mol,
            "eu_density_cm3": n_formula,
            "isotope_fraction": isotope_fraction,
            "feature_fwhm_mhz": section.profile.fwhm_mhz,
            "feature_kind": section.feature_kind,
            "n_classes": ensemble.detunings_mhz.size,
            "bands_mhz": [list(b) for b in section.pump.bands_mhz],
            "pump_rate_per_s": section.pump.pump_rate,
            "rf_rate_per_s": section.pump.rf_rate,
            "t1_s": section.pump.t1_s,
        },
    }
    curve = _csv_text(
        ["delta_mhz", "n_g3"], zip(prep.detunings_mhz, prep.g3_curve)
    )
    return {"pump.json": _json_text(summary), "pump_curve.csv": curve}


def blockade_artifacts(scn: Scenario, seed: int) -> dict[str, str]:
    b = _require(scn, "blockade")
    stream = MODULE_STREAM_IDS["blockade"]
    lattice = Lattice.from_geometry(
        scn.geometry,
        b.supercell,
        cutoff_angstrom=b.cutoff_angstrom,
        seed=subseed(seed, stream, 0),
        detuning_shape=b.inhom,
    )
    baseline = independent_excited_fraction(lattice, b.drive, t1_s=b.t1_s)
    trajectories = [
        simulate_excitation(lattice, b.model, b.drive, seed=subseed(seed, stream, 1, k), t1_s=b.t1_s)
        for k in range(b.trajectories)
    ]
    fractions = np.array([t.excited_fraction for t in trajectories])
    events = _csv_text(
        ["t_s", "site", "event"],
        ((e.time_s, e.site, e.kind) for e in trajectories[0].events),
    )

    v = pair_shift_matrix(lattice, b.model)
    shift_bound = float(np.abs(v).sum(axis=1).max(initial=0.0))
    probe = LineShape(kind="lorentzian", fwhm_mhz=b.probe_fwhm_mhz)
    margin = shift_bound + 3.0 * probe.fwhm_mhz + 1.0
    lo = float(lattice.detunings_mhz.min()) - margin
    hi = float(lattice.detunings_mhz.max()) + margin
    step = max(b.probe_fwhm_mhz / 4.0, 0.05)
    grid = FrequencyGrid(start_mhz=lo, step_mhz=step, count=int(np.ceil((hi - lo) / step)) + 1)
    pump_traj = simulate_excitation(
        lattice, b.model, b.pump_probe, seed=subseed(seed, stream, 2), t1_s=b.t1_s
    )
    ground = ~pump_traj.final_excited
    shifted = lattice.detunings_mhz[ground] + (v @ pump_traj.final_excited.astype(float))[ground]
    pumped = synthesize_lines(LineSet(shifted, np.ones(shifted.size)), probe, grid)
    unpumped = unpumped_spectrum(lattice, grid, probe)
    difference = pumped.intensity - unpumped.intensity

    density_lattice = Lattice.from_geometry(
        scn.geometry,
        b.density_supercell,
        cutoff_angstrom=b.cutoff_angstrom,
        seed=subseed(seed, stream, 3),
        detuning_shape=LineShape(kind="gaussian", fwhm_mhz=b.density_inhom_fwhm_mhz),
    )
    widths = linewidth_vs_excited_density(
        density_lattice,
        b.model,
        b.density_grid,
        seed=subseed(seed, stream, 4),
        bare_shape=LineShape(kind="gaussian", fwhm_mhz=b.density_inhom_fwhm_mhz),
        n_draws=b.density_draws,
    )

    shells = neighbor_shells(scn.geometry, cutoff=b.cutoff_angstrom)
    first = shells[0] if shells else None
    first_info = None
    if first is not None:
        cos_theta = float(np.clip(first.direction @ scn.geometry.c2_axis, -1.0, 1.0))
        theta = math.acos(abs(cos_theta))
        first_info = {
            "distance_angstrom": first.distance_angstrom,
            "multiplicity": first.multiplicity,
            "far_field_mhz": far_field_shift(b.model, first.distance_angstrom, theta),
            "effective_mhz": diagonal_shift(b.model, first.distance_angstrom, theta),
        }
    ratio = dipole_ratio(b.model)
    summary = {
        "excited_fraction_mean": float(fractions.mean()),
        "excited_fraction_std": float(fractions.std(ddof=1)) if fractions.size > 1 else 0.0,
        "trajectories": int(fractions.size),
        "baseline_noninteracting": baseline,
        "suppression": baseline - float(fractions.mean()),
        "dipole_ratio": ratio,
        "quoted_ratio": 42.0,
        "ratio_note": (
            "computed d_static^2/d_trans^2 = "
            f"{ratio:.4f}; the commonly quoted estimate rounds to 42"
        ),
        "off_diagonal_bound_mhz": b.model.t_max_mhz,
        "blockade_threshold_mhz": b.blockade_threshold_mhz,
        "blockade_radius_angstrom": blockade_radius(b.model, b.blockade_threshold_mhz, 0.0),
        "first_shell": first_info,
        "n_sites": lattice.n_sites,
        "lattice_seed": lattice.seed,
    }
    return {
        "blockade.json": _json_text(summary),
        "blockade_events.csv": events,
        "pump_probe.csv": pumped.to_csv(),
        "pump_probe_unpumped.csv": unpumped.to_csv(),
        "pump_probe_difference.csv": _csv_text(
            ["freq_mhz", "delta_intensity"], zip(grid.freqs, difference)
        ),
        "linewidth_vs_density.csv": _csv_text(
            ["density", "fwhm_mhz"], zip(b.density_grid, widths)
        ),
    }


def memory_artifacts(scn: Scenario) -> dict[str, str]:
    section = _require(scn, "memory")
    budget = DepthBudget(alpha_cm1=section.alpha_cm1, length_cm=section.length_cm)
    summary = {
        "alpha_cm1": section.alpha_cm1,
        "length_cm": section.length_cm,
        "d": budget.depth,
        "eta": gem_efficiency(budget.depth),
        "absorbed": absorption_over_length(section.alpha_cm1, section.length_cm),
        "target_efficiency": section.target_efficiency,
        "required_depth_for_target": required_depth(section.target_efficiency),
    }
    return {"memory.json": _json_text(summary)}


def build_artifacts(subcommand: str, scn: Scenario, seed: int) -> dict[str, str]:
    if subcommand == "broaden":
        return broaden_artifacts(scn)
    if subcommand == "spectrum":
        return spectrum_artifacts(scn)
    if subcommand == "pump":
        return pump_artifacts(scn)
    if subcommand == "blockade":
        return blockade_artifacts(scn, seed)
    if subcommand == "memory":
        return memory_artifacts(scn)
    if subcommand == "all":
        out: dict[str, str] = {}
        for sub in ("broaden", "spectrum", "pump", "blockade", "memory"):
            out.update(build_artifacts(sub, scn, seed))
        return out
    raise ScenarioError(f"unknown subcommand {subcommand!r}; have {SUBCOMMANDS}")


def run(
    subcommand: str,
    scenario_path,
    out_dir,
    seed: int | None = None,
    fmt: str = "both",
    plots: bool = False,
) -> list[Path]:
    """Validate the scenario, compute one subcommand's artifacts, write them.

    All artifacts are computed before anything is written; writes are
    atomic.  ``seed`` overrides the scenario's global seed.
    """
    scn = load_scenario(scenario_path)
    effective_seed = scn.seed if seed is None else int(seed)
    artifacts = build_artifacts(subcommand, scn, effective_seed)
    out = Path(out_dir)
    written = []
    for name in sorted(artifacts):
        if fmt == "csv" and not name.endswith(".csv"):
            continue
        if fmt == "json" and not name.endswith(".json"):
            continue
        target = out / name
        write_atomic(target, artifacts[name])
        written.append(target)
        if plots and name.endswith(".csv"):
            try:
                written.append(emit_plots(target))
            except ValueError:
                pass  # tables without a curve interpretation
    return written


_PLOT_STYLES = {
    ("freq_mhz", "intensity"): ("frequency offset (MHz)", "intensity (arb.)", "lines"),
    ("freq_mhz", "delta_intensity"): ("frequency offset (MHz)", "pumped - unpumped (arb.)", "lines"),
    ("delta_mhz", "n_g3"): ("class detuning (MHz)", "g3 population", "lines"),
    ("density", "fwhm_mhz"): ("excited fraction", "fitted width (MHz)", "linespoints"),
    ("purity", "contribution_mhz"): ("isotopic purity", "residual broadening (MHz)", "linespoints"),
}


def emit_plots(csv_path) -> Path:
    """Write a gnuplot script next to a recognized curve CSV."""
    path = Path(csv_path)
    if not path.exists():
        raise ValueError(f"{path} does not exist")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise ValueError(f"{path}: empty CSV")
    key = tuple(header[:2])
    if len(header) != 2 or key not in _PLOT_STYLES:
        raise ValueError(f"{path}: unrecognized header {header!r}")
    xlabel, ylabel, style = _PLOT_STYLES[key]
    script = "\n".join(
        [
            "set datafile separator ','",
            f"set xlabel '{xlabel}'",
            f"set ylabel '{ylabel}'",
            "set grid",
            f"plot '{path.name}' skip 1 using 1:2 with {style} title '{path.stem}'",
            "pause -1",
            "",
        ]
    )
    target = path.with_suffix(".gp")
    write_atomic(target, script)
    return target


def _common(f):
    for option in reversed(
        [
            click.option("--scenario", "scenario_path", required=True,
                         help="Scenario TOML path or shipped name (natural, purified)."),
            click.option("--out", "out_dir", default="out", show_default=True,
                         help="Output directory for artifacts."),
            click.option("--seed", type=click.IntRange(min=0), default=None,
                         help="Override the scenario's global seed."),
            click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]),
                         default="both", show_default=True,
                         help="Restrict which artifact kinds are written."),
            click.option("--plots", is_flag=True,
                         help="Emit a gnuplot script next to each curve CSV."),
        ]
    ):
        f = option(f)
    return f


@click.group()
def cli():
    """Simulations of isotopically purified EuCl3.6H2O: isotope-disorder
    broadening, hyperfine spectra, hole-burning preparation, excitation
    blockade and memory figures."""


def _register(name):
    @cli.command(name=name, help=f"Run the {name} stage of a scenario.")
    @_common
    def _cmd(scenario_path, out_dir, seed, fmt, plots):
        for path in run(name, scenario_path, out_dir, seed=seed, fmt=fmt, plots=plots):
            click.echo(str(path))

    return _cmd


for _name in SUBCOMMANDS:
    _register(_name)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except (ScenarioError, ValueError, KeyError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 1
    except SimulationError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0
