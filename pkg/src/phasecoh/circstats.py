"""Measurement-side statistics: windowed integration, phases and circular moments.

Phases live on (0, 2pi]. Both the exact zero of the complex plane and a
phase ensemble below the noise floor are treated as "no phase" rather than
being assigned an arbitrary value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnresolvedPhaseError
from .simulate import Trace, TraceSet

TWO_PI = 2.0 * math.pi
DEFAULT_BIN_WIDTH = 0.01 * math.pi


@dataclass(frozen=True)
class WindowSpec:
    """Integration window ``[t_start, t_start + T)`` in ns."""

    t_start: float
    T: float


@dataclass(frozen=True, eq=False)
class PhaseEnsemble:
    phases: np.ndarray
    window: WindowSpec | None = None
    batch_size: int = 1

    def __len__(self):
        return len(self.phases)


@dataclass(frozen=True, eq=False)
class PhasePdf:
    bin_edges: np.ndarray
    bin_masses: np.ndarray

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def density(self):
        """Masses divided by bin width, integrating to one over (0, 2pi]."""
        return self.bin_masses / self.bin_width

    def argmax_phase(self):
        return float(self.centers[np.argmax(self.bin_masses)])


def _window_slice(window: WindowSpec, start_time, dt, length):
    if not window.T >= dt * (1 - 1e-9):
        raise DomainError(f"window length {window.T} shorter than one sample ({dt})")
    rel0 = (window.t_start - start_time) / dt
    rel1 = (window.t_start + window.T - start_time) / dt
    if rel0 < -1e-9 or rel1 > length + 1e-9:
        raise DomainError(
            f"window [{window.t_start}, {window.t_start + window.T}) outside record "
            f"[{start_time}, {start_time + length * dt})")
    k0 = max(int(math.ceil(rel0 - 1e-9)), 0)
    k1 = min(int(math.ceil(rel1 - 1e-9)), length)
    return slice(k0, k1)


def integrate_window(data: Trace | TraceSet, window: WindowSpec):
    """Left-Riemann sum of the samples with t_start <= t_k < t_start + T, times dt.

    Returns a complex scalar for a :class:`Trace` and one value per shot for
    a :class:`TraceSet`.
    """
    if isinstance(data, Trace):
        sl = _window_slice(window, data.start_time, data.dt, len(data.samples))
        return complex(np.sum(data.samples[sl], dtype=np.complex128) * data.dt)
    sl = _window_slice(window, data.start_time, data.dt, data.record_length)
    return np.sum(data.traces[:, sl], axis=1, dtype=np.complex128) * data.dt


def batch_average(values, M: int) -> np.ndarray:
    """Means of consecutive non-overlapping groups of ``M`` values.

    The ``N mod M`` trailing values are dropped.
    """
    values = np.asarray(values)
    if int(M) != M or M < 1:
        raise DomainError(f"batch size must be a positive integer, got {M}")
    groups = len(values) // M
    if groups == 0:
        raise DomainError(f"batch size {M} exceeds ensemble size {len(values)}")
    return values[: groups * M].reshape(groups, M).mean(axis=1)


def wrap_phase(phi):
    """Map angles onto (0, 2pi]."""
    out = np.mod(phi, TWO_PI)
    return np.where(out <= 0.0, out + TWO_PI, out)


def phase_of(values, window: WindowSpec | None = None, batch_size: int = 1) -> PhaseEnsemble:
    values = np.asarray(values)
    if np.any(values == 0):
        raise DomainError("phase of an exactly zero complex value is undefined")
    return PhaseEnsemble(wrap_phase(np.angle(values)), window, batch_size)


def _phases(ensemble):
    return ensemble.phases if isinstance(ensemble, PhaseEnsemble) else np.asarray(ensemble, float)


def mean_resultant_length(ensemble) -> float:
    phases = _phases(ensemble)
    if phases.size == 0:
        raise DomainError("mean resultant length of an empty ensemble")
    return float(np.abs(np.mean(np.exp(1j * phases))))


def circular_mean(ensemble) -> float:
    phases = _phases(ensemble)
    if phases.size == 0:
        raise DomainError("circular mean of an empty ensemble")
    m = np.mean(np.exp(1j * phases))
    if m == 0:
        raise UnresolvedPhaseError(0.0)
    return float(wrap_phase(np.angle(m)))


def resolution_floor(n: int) -> float:
    """R below which a size-``n`` ensemble is indistinguishable from uniform.

    Uniform phases give R close to sqrt(pi / 4n); three over sqrt(n) sits
    several standard deviations above that.
    """
    return 3.0 / math.sqrt(n)


def holevo_variance(ensemble) -> float:
    """Holevo phase variance ``R**-2 - 1``.

    Accepts a mean resultant length directly, or a phase ensemble. For an
    ensemble, R below :func:`resolution_floor` raises
    :class:`UnresolvedPhaseError`, as does R <= 1e-15 in either case.
    """
    if isinstance(ensemble, (float, int, np.floating)):
        R = float(ensemble)
        floor = 0.0
    else:
        phases = _phases(ensemble)
        R = mean_resultant_length(phases)
        floor = resolution_floor(phases.size)
    if not 0.0 <= R <= 1.0 + 1e-12:
        raise DomainError(f"mean resultant length {R} outside [0, 1]")
    if R <= 1e-15 or R < floor:
        raise UnresolvedPhaseError(R, floor)
    return max(R ** -2 - 1.0, 0.0)


def phase_pdf(ensemble, bin_width: float = DEFAULT_BIN_WIDTH) -> PhasePdf:
    """Normalised histogram over (0, 2pi] with right-closed bins.

    A bin width that does not divide 2pi to within 1e-9 is replaced by the
    nearest exact divisor.
    """
    if not bin_width > 0:
        raise DomainError("bin width must be positive")
    phases = _phases(ensemble)
    if phases.size == 0:
        raise DomainError("histogram of an empty ensemble")
    nbins = max(int(round(TWO_PI / bin_width)), 1)
    width = TWO_PI / nbins
    edges = np.linspace(0.0, TWO_PI, nbins + 1)
    idx = np.clip(np.ceil(phases / width).astype(np.int64) - 1, 0, nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    return PhasePdf(edges, counts / phases.size)


def r_of_values(values, M: int = 1) -> float:
    """Mean resultant length of the M-batched complex values."""
    return mean_resultant_length(phase_of(batch_average(values, M)))


def r_surface(traceset: TraceSet, t_starts, windows, M: int = 1) -> np.ndarray:
    """R for every (t_start, T) pair; rows follow ``t_starts``, columns ``windows``."""
    t_starts = np.asarray(t_starts, float)
    windows = np.asarray(windows, float)
    out = np.empty((len(t_starts), len(windows)))
    for i, ts in enumerate(t_starts):
        for j, T in enumerate(windows):
            vals = integrate_window(traceset, WindowSpec(ts, T))
            out[i, j] = r_of_values(vals, M)
    return out


def time_domain_summary(traceset: TraceSet) -> dict:
    """Per-sample shot statistics of the raw records.

    Returns the mean magnitude, the magnitude and phase of the mean, and
    the per-sample mean phase under both the circular and the arithmetic
    convention (the latter averages angles on (0, 2pi] directly). Samples
    that are exactly zero are skipped in the phase averages.
    """
    tr = traceset.traces.astype(np.complex128)
    mean = tr.mean(axis=0)
    nz = tr != 0
    phases = wrap_phase(np.angle(tr))
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(nz, tr / np.where(nz, np.abs(tr), 1.0), 0)
        circ = np.angle(unit.sum(axis=0))
        arith = np.where(nz, phases, 0).sum(axis=0) / nz.sum(axis=0)
    return {
        "time": traceset.times,
        "mean_magnitude": np.abs(tr).mean(axis=0),
        "magnitude_of_mean": np.abs(mean),
        "phase_of_mean": wrap_phase(np.angle(mean)),
        "mean_phase_circular": wrap_phase(circ),
        "mean_phase_arithmetic": arith,
    }
