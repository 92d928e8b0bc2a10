"""Excitation-spectrum synthesis, ligand-isotope satellites and peak fitting.

A spectrum is intensity on a uniform MHz grid.  Synthesis places every
transition of every isotope (optionally split into binomially weighted
ligand-substitution satellites) on the grid, convolved with a unit-area
inhomogeneous lineshape.  Fitting goes the other way: multi-start local
least squares recovers peak centers, widths and amplitudes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from .errors import FitConvergenceError, GridCoverageError
from .levels import TransitionTable

LINESHAPE_KINDS = ("gaussian", "lorentzian", "pseudo_voigt")

_GAUSS_SIGMA_PER_FWHM = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

# Lines lighter than this fraction of the total weight are dropped before
# synthesis; keeps far, vanishing satellite terms from dictating the grid.
NEGLIGIBLE_WEIGHT = 1e-9


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency grid: start + step * [0..count)."""

    start_mhz: float
    step_mhz: float
    count: int

    def __post_init__(self):
        if self.step_mhz <= 0:
            raise ValueError("grid step must be positive")
        if self.count < 2:
            raise ValueError("grid needs at least two points")

    @property
    def stop_mhz(self) -> float:
        return self.start_mhz + self.step_mhz * (self.count - 1)

    @property
    def freqs(self) -> np.ndarray:
        return self.start_mhz + self.step_mhz * np.arange(self.count)


@dataclass(frozen=True)
class LineShape:
    """Unit-area line profile: gaussian, lorentzian or a pseudo-Voigt mix.

    ``eta`` is the Lorentzian fraction of the pseudo-Voigt (ignored for the
    pure shapes).  All widths are FWHM in MHz.
    """

    kind: str = "lorentzian"
    fwhm_mhz: float = 25.0
    eta: float = 0.5

    def __post_init__(self):
        if self.kind not in LINESHAPE_KINDS:
            raise ValueError(f"kind must be one of {LINESHAPE_KINDS}")
        if self.fwhm_mhz <= 0:
            raise ValueError("FWHM must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    def profile(self, x) -> np.ndarray:
        """Unit-area profile evaluated at detuning x (MHz)."""
        return _profile(self.kind, np.asarray(x, dtype=float), self.fwhm_mhz, self.eta)

    @property
    def peak_height(self) -> float:
        """Profile value at zero detuning (1/MHz)."""
        return float(_profile(self.kind, np.zeros(()), self.fwhm_mhz, self.eta))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw detunings distributed like the profile."""
        if self.kind == "gaussian":
            return rng.normal(0.0, self.fwhm_mhz * _GAUSS_SIGMA_PER_FWHM, size)
        if self.kind == "lorentzian":
            return rng.standard_cauchy(size) * (self.fwhm_mhz / 2.0)
        lorentz = rng.random(size) < self.eta
        out = rng.normal(0.0, self.fwhm_mhz * _GAUSS_SIGMA_PER_FWHM, size)
        out[lorentz] = rng.standard_cauchy(int(lorentz.sum())) * (self.fwhm_mhz / 2.0)
        return out


def _profile(kind: str, x: np.ndarray, fwhm: float, eta: float) -> np.ndarray:
    if kind == "gaussian":
        sigma = fwhm * _GAUSS_SIGMA_PER_FWHM
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    if kind == "lorentzian":
        half = fwhm / 2.0
        return (half / math.pi) / (x * x + half * half)
    return eta * _profile("lorentzian", x, fwhm, 0.0) + (1.0 - eta) * _profile(
        "gaussian", x, fwhm, 0.0
    )


@dataclass(frozen=True)
class Spectrum:
    """Intensity (arbitrary units, >= 0) over a uniform frequency grid."""

    grid: FrequencyGrid
    intensity: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.intensity, dtype=float)
        if values.shape != (self.grid.count,):
            raise ValueError("intensity length must match the grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("intensity must be finite")
        if np.any(values < 0):
            raise ValueError("intensity must be non-negative")
        object.__setattr__(self, "intensity", values)

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.freqs

    def integrated_area(self) -> float:
        return float(np.trapezoid(self.intensity, dx=self.grid.step_mhz))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq_mhz", "intensity"])
        for f, y in zip(self.freqs, self.intensity):
            writer.writerow([repr(float(f)), repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Spectrum":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["freq_mhz", "intensity"]:
            raise ValueError("expected header 'freq_mhz,intensity'")
        rows = [(float(a), float(b)) for a, b in reader]
        if len(rows) < 2:
            raise ValueError("need at least two samples")
        freqs = np.array([r[0] for r in rows])
        steps = np.diff(freqs)
        step = steps[0]
        if step <= 0 or np.any(np.abs(steps - step) > 1e-9 * max(1.0, abs(step))):
            raise ValueError("frequency column is not a uniform ascending grid")
        grid = FrequencyGrid(start_mhz=freqs[0], step_mhz=float(step), count=len(rows))
        return cls(grid=grid, intensity=np.array([r[1] for r in rows]))


@dataclass(frozen=True)
class LineSet:
    """Weighted delta lines: positions (MHz) and non-negative weights."""

    freqs_mhz: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.freqs_mhz, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if f.shape != w.shape:
            raise ValueError("freqs and weights must have the same length")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "freqs_mhz", f)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_table(cls, table: TransitionTable, weight: float = 1.0) -> "LineSet":
        return cls(freqs_mhz=table.frequency_mhz.copy(), weights=weight * table.strength)

    @classmethod
    def from_tables(cls, tables) -> "LineSet":
        parts = [cls.from_table(t, w) for t, w in tables]
        return cls(
            freqs_mhz=np.concatenate([p.freqs_mhz for p in parts]),
            weights=np.concatenate([p.weights for p in parts]),
        )

    def total_weight(self) -> float:
        return float(math.fsum(self.weights))


@dataclass(frozen=True)
class PositionClass:
    """One class of equivalent ligand positions that a substituting isotope
    can occupy: how many positions, with what abundance, shifting the line
    by how much per substitution."""

    label: str
    positions: int
    abundance: float
    shift_mhz: float

    def __post_init__(self):
        if not (isinstance(self.positions, int) and self.positions > 0):
            raise ValueError("positions must be a positive integer")
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")


@dataclass(frozen=True)
class SatelliteModel:
    classes: tuple[PositionClass, ...]


def apply_satellites(base, m: SatelliteModel) -> LineSet:
    """Split each line into binomially weighted substitution satellites.

    For a class with n positions and abundance a, the k-substitution
    satellite carries weight C(n,k) a^k (1-a)^(n-k) and shifts by k times
    the class shift.  Classes combine independently; total weight is
    preserved (the binomial sums to one).
    """
    lines = LineSet.from_table(base) if isinstance(base, TransitionTable) else base
    freqs, weights = lines.freqs_mhz, lines.weights
    for cls in m.classes:
        if cls.abundance == 0.0:
            continue
        ks = np.arange(cls.positions + 1)
        pmf = np.array(
            [
                math.comb(cls.positions, int(k))
                * cls.abundance**int(k)
                * (1.0 - cls.abundance) ** int(cls.positions - k)
                for k in ks
            ]
        )
        freqs = (freqs[:, None] + ks[None, :] * cls.shift_mhz).ravel()
        weights = (weights[:, None] * pmf[None, :]).ravel()
    return LineSet(freqs_mhz=freqs, weights=weights)


def synthesize_lines(lines: LineSet, shape: LineShape, grid: FrequencyGrid) -> Spectrum:
    """Sum of unit-area profiles, one per line, scaled by the line weights.

    Lines below a 1e-9 relative weight are dropped first; the remaining
    lines must fit on the grid with a 3 FWHM margin, otherwise a
    GridCoverageError is raised rather than silently truncating.
    """
    total = lines.total_weight()
    keep = lines.weights > NEGLIGIBLE_WEIGHT * total
    freqs, weights = lines.freqs_mhz[keep], lines.weights[keep]
    if freqs.size == 0:
        return Spectrum(grid=grid, intensity=np.zeros(grid.count))

    margin = 3.0 * shape.fwhm_mhz
    lo, hi = freqs.min() - margin, freqs.max() + margin
    if lo < grid.start_mhz - 1e-9 or hi > grid.stop_mhz + 1e-9:
        raise GridCoverageError(
            f"grid [{grid.start_mhz}, {grid.stop_mhz}] MHz clips lines; need "
            f"[{lo}, {hi}] (line span plus 3 FWHM)"
        )
    x = grid.freqs
    intensity = np.zeros(grid.count)
    block = 256
    for i in range(0, freqs.size, block):
        chunk_f = freqs[i : i + block]
        chunk_w = weights[i : i + block]
        intensity += chunk_w @ shape.profile(x[None, :] - chunk_f[:, None])
    return Spectrum(grid=grid, intensity=np.maximum(intensity, 0.0))


def synthesize(tables, shape: LineShape, grid: FrequencyGrid) -> Spectrum:
    """Synthesize from (TransitionTable, population weight) pairs."""
    pairs = list(tables)
    if any(w < 0 for _, w in pairs):
        raise ValueError("population weights must be non-negative")
    return synthesize_lines(LineSet.from_tables(pairs), shape, grid)


@dataclass(frozen=True)
class PeakFit:
    center_mhz: float
    fwhm_mhz: float
    amplitude: float
    center_err: float
    fwhm_err: float
    amplitude_err: float


@dataclass(frozen=True)
class FitResult:
    peaks: tuple[PeakFit, ...]
    residual_rms: float
    kind: str

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "residual_rms": self.residual_rms,
            "peaks": [
                {
                    "center_mhz": p.center_mhz,
                    "fwhm_mhz": p.fwhm_mhz,
                    "amplitude": p.amplitude,
                    "center_err_mhz": p.center_err,
                    "fwhm_err_mhz": p.fwhm_err,
                    "amplitude_err": p.amplitude_err,
                }
                for p in self.peaks
            ],
        }


def _peak_model(kind: str, eta: float, x: np.ndarray, params: np.ndarray) -> np.ndarray:
    p = params.reshape(-1, 3)
    centers, widths, heights = p[:, 0], p[:, 1], p[:, 2]
    prof = _profile(kind, x[None, :] - centers[:, None], widths[:, None], eta)
    peak = _profile(kind, np.zeros((p.shape[0], 1)), widths[:, None], eta)
    return (heights[:, None] / peak * prof).sum(axis=0)


def _detect_seeds(s: Spectrum, prominence_frac: float) -> list[tuple[float, float, float]]:
    y = s.intensity
    gmax = y.max()
    span = s.grid.stop_mhz - s.grid.start_mhz
    idx, props = find_peaks(y, prominence=prominence_frac * gmax)
    if idx.size == 0:
        center = float(s.freqs[int(np.argmax(y))])
        return [(center, span / 10.0, float(gmax))]
    widths_samples = peak_widths(y, idx, rel_height=0.5)[0]
    order = np.argsort(props["prominences"])[::-1]
    seeds = []
    for k in order:
        center = float(s.freqs[idx[k]])
        fwhm = max(float(widths_samples[k]) * s.grid.step_mhz, s.grid.step_mhz)
        seeds.append((center, fwhm, float(y[idx[k]])))
    return seeds


def fit_peaks(
    s: Spectrum,
    kind: str = "lorentzian",
    max_peaks: int = 5,
    eta: float = 0.5,
    seeds=None,
    prominence: float = 0.05,
    max_nfev: int = 4000,
) -> FitResult:
    """Nonlinear least-squares multi-peak fit.

    Starting points come from prominence-ranked local maxima (or from
    explicit ``seeds``: (center, fwhm, amplitude) triples, e.g. a known
    line table); each start is retried with halved and doubled widths and
    the lowest-cost solution wins.  Raises FitConvergenceError (carrying
    the best parameters so far) when no start converges.
    """
    if kind not in LINESHAPE_KINDS:
        raise ValueError(f"kind must be one of {LINESHAPE_KINDS}")
    if max_peaks < 1:
        raise ValueError("max_peaks must be at least 1")
    y = s.intensity
    if s.grid.count < 4 or y.max() <= 0:
        raise ValueError("spectrum is degenerate (flat or too short)")

    if seeds is None:
        candidates = _detect_seeds(s, prominence)[:max_peaks]
    else:
        candidates = [tuple(map(float, triple)) for triple in seeds][:max_peaks]

    x = s.freqs
    span = s.grid.stop_mhz - s.grid.start_mhz
    gmax = float(y.max())

    def pack(triples, width_scale):
        params = []
        for c, w, h in triples:
            params.extend([c, min(max(w * width_scale, s.grid.step_mhz), 2 * span), h])
        return np.array(params)

    lower, upper = [], []
    for _ in candidates:
        lower.extend([s.grid.start_mhz, s.grid.step_mhz * 0.25, 0.0])
        upper.extend([s.grid.stop_mhz, 2.0 * span, 3.0 * gmax])
    bounds = (np.array(lower), np.array(upper))

    def residual(params):
        return _peak_model(kind, eta, x, params) - y

    best = None
    best_converged = None
    for width_scale in (1.0, 0.5, 2.0):
        p0 = np.clip(pack(candidates, width_scale), bounds[0], bounds[1])
        res = least_squares(residual, p0, bounds=bounds, method="trf", max_nfev=max_nfev)
        if best is None or res.cost < best.cost:
            best = res
        if res.status > 0 and (best_converged is None or res.cost < best_converged.cost):
            best_converged = res

    if best_converged is None:
        raise FitConvergenceError(
            f"peak fit did not converge within {max_nfev} evaluations",
            best_result=_fit_result_from(best, kind, len(y)),
        )
    return _fit_result_from(best_converged, kind, len(y))


def _fit_result_from(res, kind: str, n_samples: int) -> FitResult:
    params = res.x.reshape(-1, 3)
    dof = max(1, n_samples - res.x.size)
    variance = 2.0 * res.cost / dof
    jtj = res.jac.T @ res.jac
    cov = np.linalg.pinv(jtj) * variance
    errs = np.sqrt(np.maximum(np.diag(cov), 0.0)).reshape(-1, 3)
    peaks = [
        PeakFit(
            center_mhz=float(c),
            fwhm_mhz=float(w),
            amplitude=float(h),
            center_err=float(ec),
            fwhm_err=float(ew),
            amplitude_err=float(eh),
        )
        for (c, w, h), (ec, ew, eh) in zip(params, errs)
    ]
    peaks.sort(key=lambda p: p.center_mhz)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return FitResult(peaks=tuple(peaks), residual_rms=rms, kind=kind)


def resolved_count(s: Spectrum, threshold: float) -> int:
    """Number of resolved maxima: local maxima above threshold * max, where
    adjacent counted maxima are separated by a dip of at least threshold *
    max below the lower of the two."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    y = s.intensity
    gmax = y.max()
    if gmax <= 0:
        return 0
    idx, _ = find_peaks(y, height=threshold * gmax)
    kept = list(idx)
    dip = threshold * gmax
    changed = True
    while changed and len(kept) > 1:
        changed = False
        for a, b in zip(kept, kept[1:]):
            valley = y[a : b + 1].min()
            if valley > min(y[a], y[b]) - dip:
                kept.remove(a if y[a] <= y[b] else b)
                changed = True
                break
    return len(kept)


def envelope_width(s: Spectrum, fraction: float = 0.1) -> float:
    """Full width (MHz) of the region where intensity >= fraction * max."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    y = s.intensity
    above = np.nonzero(y >= fraction * y.max())[0]
    if above.size == 0:
        return 0.0
    return float((above[-1] - above[0]) * s.grid.step_mhz)
