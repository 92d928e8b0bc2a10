"""Rate-equation optical pumping over the inhomogeneous line.

The crystal is modeled as independent frequency classes.  Each class is a
four-level system (three hyperfine ground states g1..g3 and one pumped
excited state) driven by an optical field swept over the g1->e3 and
g2->e3 transitions plus an rf field mixing g1 and g2.  A swept optical
field is equivalent, at rate-equation level, to a top-hat pump band: a
class is pumped on gi->e3 at the full rate whenever that transition lies
inside a band.  With g3 never addressed it is an absorbing state and the
whole class accumulates there.

Stationary states come from an exact null-space solve of the linear rate
matrix; time evolution uses the matrix exponential, which doubles as an
independent cross-check of the stationary solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, null_space

from .constants import INTEGRATED_CROSS_SECTION_CM2_HZ, MHZ_HZ
from .errors import DegenerateStationaryError, SimulationError
from .levels import TransitionTable
from .spectrum import LineShape

_SUM_TOL = 1e-9
_NEG_TOL = 1e-12


@dataclass(frozen=True)
class PumpScenario:
    """Pump fields and relaxation parameters.

    bands_mhz: closed intervals swept by the optical field.
    pump_rate: optical pump rate inside a band (1/s).
    rf_rate: g1<->g2 coupling rate (1/s).
    t1_s: excited-state lifetime.
    branching: decay branching ratios into g1..g3, summing to 1.
    ground_relaxation: pairwise hyperfine relaxation rate (1/s); 0 by
        default, reflecting hyperfine lifetimes of hours.
    soft_edge_mhz: optional Lorentzian FWHM softening the band edges
        (None keeps the top-hat model).
    """

    bands_mhz: tuple[tuple[float, float], ...]
    pump_rate: float
    rf_rate: float = 0.0
    t1_s: float = 2e-3
    branching: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    ground_relaxation: float = 0.0
    soft_edge_mhz: float | None = None

    def __post_init__(self):
        bands = tuple((float(lo), float(hi)) for lo, hi in self.bands_mhz)
        if not bands:
            raise ValueError("at least one sweep band is required")
        for lo, hi in bands:
            if not lo < hi:
                raise ValueError(f"band [{lo}, {hi}] is degenerate")
        object.__setattr__(self, "bands_mhz", bands)
        beta = tuple(float(b) for b in self.branching)
        if len(beta) != 3 or any(b < 0 for b in beta):
            raise ValueError("branching needs three non-negative entries")
        if abs(math.fsum(beta) - 1.0) > 1e-12:
            raise ValueError(f"branching ratios sum to {math.fsum(beta)!r}, expected 1")
        object.__setattr__(self, "branching", beta)
        if self.pump_rate < 0 or self.rf_rate < 0 or self.ground_relaxation < 0:
            raise ValueError("rates must be non-negative")
        if self.t1_s <= 0:
            raise ValueError("excited-state lifetime must be positive")
        if self.soft_edge_mhz is not None and self.soft_edge_mhz <= 0:
            raise ValueError("soft edge width must be positive")

    @property
    def decay_rate(self) -> float:
        return 1.0 / self.t1_s


@dataclass(frozen=True)
class ClassState:
    """Populations of one frequency class (closed system, sum 1)."""

    g1: float
    g2: float
    g3: float
    e: float = 0.0

    def __post_init__(self):
        values = (self.g1, self.g2, self.g3, self.e)
        if min(values) < -_NEG_TOL:
            raise ValueError(f"negative population beyond tolerance: {values}")
        if abs(math.fsum(values) - 1.0) > _SUM_TOL:
            raise ValueError(f"populations sum to {math.fsum(values)!r}, expected 1")
        for name, v in zip(("g1", "g2", "g3", "e"), values):
            object.__setattr__(self, name, max(float(v), 0.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3, self.e])

    @classmethod
    def from_array(cls, n) -> "ClassState":
        return cls(g1=n[0], g2=n[1], g3=n[2], e=n[3])

    @classmethod
    def thermal(cls) -> "ClassState":
        """Equal ground populations (hyperfine splittings << kT)."""
        return cls(g1=1 / 3, g2=1 / 3, g3=1 / 3, e=0.0)


@dataclass(frozen=True)
class ClassEnsemble:
    """Discretized inhomogeneous profile plus the pumped isotope's table.

    Detunings form a symmetric grid about zero; weights are the profile
    evaluated on the grid, normalized to sum 1.
    """

    profile: LineShape
    detunings_mhz: np.ndarray
    weights: np.ndarray
    table: TransitionTable

    def __post_init__(self):
        d = np.asarray(self.detunings_mhz, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if d.shape != w.shape or d.ndim != 1 or d.size < 1:
            raise ValueError("detunings and weights must be equal-length vectors")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(w) - 1.0) > _SUM_TOL:
            raise ValueError("weights must sum to 1")
        if np.max(np.abs(np.sort(d) + np.sort(d)[::-1])) > 1e-9:
            raise ValueError("detuning grid must be symmetric about zero")
        object.__setattr__(self, "detunings_mhz", d)
        object.__setattr__(self, "weights", w)

    @classmethod
    def build(
        cls,
        table: TransitionTable,
        profile: LineShape | None = None,
        n_classes: int = 1001,
        span_fwhms: float = 4.0,
    ) -> "ClassEnsemble":
        """Uniform symmetric detuning grid over +-span_fwhms line widths."""
        if profile is None:
            profile = LineShape(kind="gaussian", fwhm_mhz=25.0)
        if n_classes < 1:
            raise ValueError("need at least one class")
        if n_classes % 2 == 0:
            n_classes += 1  # keep a class exactly at line center
        half = n_classes // 2
        span = span_fwhms * profile.fwhm_mhz
        positive = span * np.arange(1, half + 1) / half if half else np.array([])
        detunings = np.concatenate([-positive[::-1], [0.0], positive])
        weights = profile.profile(detunings)
        weights = weights / math.fsum(weights)
        return cls(profile=profile, detunings_mhz=detunings, weights=weights, table=table)


def _band_factor(freq: float, s: PumpScenario) -> float:
    best = 0.0
    for lo, hi in s.bands_mhz:
        if lo <= freq <= hi:
            return 1.0
        if s.soft_edge_mhz is not None:
            edge = lo if freq < lo else hi
            half = s.soft_edge_mhz / 2.0
            best = max(best, half * half / ((freq - edge) ** 2 + half * half))
    return best


def class_rates(e: ClassEnsemble, s: PumpScenario, delta_mhz: float):
    """Pump rates (R1, R2, R3) seen by the class detuned by delta.

    Ri is the full pump rate when the class's gi->e3 transition falls in a
    sweep band (top-hat model), otherwise zero; with soft edges enabled the
    rate rolls off as a Lorentzian of the configured width.
    """
    rates = []
    for i in (1, 2, 3):
        freq = e.table.frequency(i, 3) + delta_mhz
        rates.append(s.pump_rate * _band_factor(freq, s))
    return tuple(rates)


def rate_matrix(rates, s: PumpScenario) -> np.ndarray:
    """Generator of the linear system d n/dt = A n, columns summing to 0.

    State order (g1, g2, g3, e).
    """
    r1, r2, r3 = rates
    if min(r1, r2, r3) < 0:
        raise ValueError("pump rates must be non-negative")
    gamma = s.decay_rate
    a = np.zeros((4, 4))
    for i, r in enumerate((r1, r2, r3)):
        a[3, i] += r
    for i, b in enumerate(s.branching):
        a[i, 3] += b * gamma
    a[0, 1] += s.rf_rate
    a[1, 0] += s.rf_rate
    if s.ground_relaxation > 0:
        for i in range(3):
            for j in range(3):
                if i != j:
                    a[i, j] += s.ground_relaxation
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, -a.sum(axis=0))
    return a


def evolve(state: ClassState, rates, s: PumpScenario, t: float) -> ClassState:
    """Propagate the class for time t via the exact matrix exponential.

    The propagator expm(A t) is exact for this linear system, so there is
    no step-size control to fail; population conservation holds to machine
    precision and is re-checked here.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    a = rate_matrix(rates, s)
    propagator = expm(a * t)
    # Each propagator column is a probability vector; scaling-and-squaring
    # roundoff breaks that at extreme horizons (rate * t ~ 1e10), so restore
    # the exact invariant before applying it.
    if propagator.min() < -1e-9:
        raise SimulationError(
            f"propagator produced negative weight {propagator.min()}"
        )
    propagator = np.maximum(propagator, 0.0)
    sums = propagator.sum(axis=0)
    if np.any(sums < 0.5):
        raise SimulationError("propagator lost probability mass; matrix exponential failed")
    n = (propagator / sums) @ state.as_array()
    if n.min() < -_NEG_TOL:
        raise SimulationError(f"propagator produced negative population {n.min()}")
    if abs(n.sum() - 1.0) > _SUM_TOL:
        raise SimulationError(f"population sum drifted to {n.sum()!r}")
    return ClassState.from_array(np.maximum(n, 0.0))


def steady_state(
    rates, s: PumpScenario, initial: ClassState | None = None
) -> ClassState:
    """Exact stationary distribution of the class's rate matrix.

    A unique stationary state (1-dimensional null space) needs no initial
    state.  When the stationary state is not unique -- e.g. all rates zero,
    or g3 fully decoupled -- the infinite-time limit depends on where the
    system started; supplying ``initial`` resolves it by projecting that
    state onto the stationary subspace (the exact t -> infinity limit of
    the propagator).  Without ``initial`` such cases raise
    DegenerateStationaryError.
    """
    a = rate_matrix(rates, s)
    kernel = null_space(a)
    dim = kernel.shape[1]
    if dim == 0:
        raise DegenerateStationaryError("rate matrix has empty null space")
    if dim == 1:
        v = kernel[:, 0]
        total = v.sum()
        if abs(total) < 1e-12:
            raise DegenerateStationaryError("stationary direction has zero total population")
        v = v / total
    else:
        if initial is None:
            raise DegenerateStationaryError(
                f"stationary state is not unique (null space dimension {dim}); "
                "supply an initial state to resolve it"
            )
        left = null_space(a.T)
        if left.shape[1] != dim:
            raise DegenerateStationaryError("defective zero eigenvalue")
        try:
            coeffs = np.linalg.solve(left.T @ kernel, left.T @ initial.as_array())
        except np.linalg.LinAlgError:
            raise DegenerateStationaryError("stationary projection is singular") from None
        v = kernel @ coeffs
    if v.min() < -1e-9:
        raise DegenerateStationaryError(f"stationary vector has negative entries: {v}")
    v = np.maximum(v, 0.0)
    return ClassState.from_array(v / v.sum())


@dataclass(frozen=True)
class PreparedPopulation:
    """Outcome of pumping the whole ensemble."""

    global_fraction: float
    center_fraction: float
    detunings_mhz: np.ndarray = field(repr=False)
    g3_curve: np.ndarray = field(repr=False)


def prepare_population(
    e: ClassEnsemble, s: PumpScenario, initial: ClassState | None = None
) -> PreparedPopulation:
    """Steady-state g3 population per class and its ensemble average.

    Classes that no band addresses keep their initial populations (thermal
    1/3 per ground state by default); that is the exact long-time limit,
    obtained here via the degenerate-case projection of steady_state.
    """
    if initial is None:
        initial = ClassState.thermal()
    curve = np.empty(e.detunings_mhz.size)
    for k, delta in enumerate(e.detunings_mhz):
        rates = class_rates(e, s, float(delta))
        curve[k] = steady_state(rates, s, initial=initial).g3
    global_fraction = float(e.weights @ curve)
    center = int(np.argmin(np.abs(e.detunings_mhz)))
    return PreparedPopulation(
        global_fraction=global_fraction,
        center_fraction=float(curve[center]),
        detunings_mhz=e.detunings_mhz.copy(),
        g3_curve=curve,
    )


def optical_depth(
    prepared_fraction: float,
    oscillator_strength: float,
    density_cm3: float,
    fwhm_mhz: float,
    kind: str = "lorentzian",
    eta: float = 0.5,
) -> float:
    """Peak absorption coefficient (1/cm) of the prepared feature.

    The integrated cross section is 2.654e-2 cm^2 Hz times the oscillator
    strength; the peak cross section follows from the lineshape (for a
    Lorentzian, 2/(pi FWHM) of the integral).  alpha is the peak cross
    section times ion density times the prepared fraction.
    """
    if min(prepared_fraction, oscillator_strength, density_cm3, fwhm_mhz) <= 0:
        raise ValueError("all optical-depth inputs must be positive")
    integrated = INTEGRATED_CROSS_SECTION_CM2_HZ * oscillator_strength
    shape = LineShape(kind=kind, fwhm_mhz=fwhm_mhz, eta=eta)
    sigma_peak = integrated * shape.peak_height / MHZ_HZ
    return sigma_peak * density_cm3 * prepared_fraction
