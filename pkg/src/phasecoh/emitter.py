"""Closed-form physics of a driven two-level emitter.

Everything here is a pure function of its arguments. The emitter is
treated in the rotating frame, so the carrier frequency carried on
:class:`DrivePulse` is metadata only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, PrecisionError


@dataclass(frozen=True)
class DrivePulse:
    """Super-Gaussian drive pulse.

    Parameters
    ----------
    amplitude : float
        Peak drive amplitude D (rad/ns, so that the envelope integral is a
        rotation angle).
    duration : float
        Pulse length tau in ns.
    order : int
        Super-Gaussian order n.
    edge_fraction : float
        Envelope value at the pulse edges relative to the peak, 0 < alpha < 1.
    phase : float
        Drive phase in radians.
    carrier_frequency : float
        Qubit transition frequency in GHz. Not used in any computation.
    """

    amplitude: float = 1.0
    duration: float = 16.0
    order: int = 5
    edge_fraction: float = 0.01
    phase: float = 0.0
    carrier_frequency: float = 6.2503

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"pulse duration must be positive, got {self.duration}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"super-Gaussian order must be a positive integer, got {self.order}")
        if not 0.0 < self.edge_fraction < 1.0:
            raise ConfigError(f"edge fraction must lie in (0, 1), got {self.edge_fraction}")
        if not self.amplitude >= 0:
            raise ConfigError(f"drive amplitude must be non-negative, got {self.amplitude}")

    def with_area(self, theta: float, quadrature_step: float | None = None) -> "DrivePulse":
        """Copy of this pulse with the amplitude rescaled to rotate by ``theta``."""
        if theta < 0:
            raise ConfigError("rotation angle must be non-negative")
        unit = DrivePulse(1.0, self.duration, self.order, self.edge_fraction)
        area = effective_pulse_area(unit, quadrature_step)
        return DrivePulse(theta / area, self.duration, self.order, self.edge_fraction,
                          self.phase, self.carrier_frequency)


@dataclass(frozen=True)
class PreparationState:
    """Bloch angles of the emitter right after the drive pulse.

    ``theta`` is kept unwrapped so multi-rotation drives stay distinguishable;
    ``phi`` is folded into (-pi, pi].
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @classmethod
    def from_pulse(cls, pulse: DrivePulse, quadrature_step: float | None = None):
        # the drive imprints exp(-i*phase) on the excited-state amplitude
        return cls(effective_pulse_area(pulse, quadrature_step), -pulse.phase)


@dataclass(frozen=True)
class DecoherenceParams:
    """Relaxation time T1, pure dephasing time Tphi (both ns) and coupling (rad/ns).

    ``Tphi`` may be ``math.inf`` to switch pure dephasing off.
    """

    T1: float = 20.5
    Tphi: float = 100.0
    coupling: float = 0.0

    def __post_init__(self):
        if not self.T1 > 0:
            raise ConfigError(f"T1 must be positive, got {self.T1}")
        if not self.Tphi > 0:
            raise ConfigError(f"Tphi must be positive, got {self.Tphi}")
        if not self.coupling >= 0:
            raise ConfigError(f"coupling must be non-negative, got {self.coupling}")


def wrap_angle(phi: float) -> float:
    """Fold an angle into (-pi, pi]."""
    out = math.remainder(phi, 2 * math.pi)
    if out <= -math.pi:
        out += 2 * math.pi
    return out


def super_gaussian_envelope(t, pulse: DrivePulse):
    """Drive envelope ``D * exp(((2t - tau)/tau)^(2n) * ln(alpha))`` for 0 <= t <= tau."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > pulse.duration) or np.any(np.isnan(t_arr)):
        raise DomainError(f"envelope evaluated outside [0, {pulse.duration}]")
    x = (2.0 * t_arr - pulse.duration) / pulse.duration
    out = pulse.amplitude * np.exp(x ** (2 * int(pulse.order)) * math.log(pulse.edge_fraction))
    return float(out) if out.ndim == 0 else out


def _trapezoid_area(pulse: DrivePulse, intervals: int) -> float:
    t = np.linspace(0.0, pulse.duration, intervals + 1)
    return float(np.trapezoid(super_gaussian_envelope(t, pulse), t))


def effective_pulse_area(pulse: DrivePulse, quadrature_step: float | None = None) -> float:
    """Rotation angle delivered by the pulse, by composite trapezoid.

    The step must split the pulse into at least 16 equal intervals. The
    result is compared against the same rule at half the step and a
    :class:`PrecisionError` is raised if they disagree by more than 1e-6
    relative.
    """
    if quadrature_step is None:
        quadrature_step = pulse.duration / 2048
    if not quadrature_step > 0:
        raise DomainError("quadrature step must be positive")
    ratio = pulse.duration / quadrature_step
    intervals = int(round(ratio))
    if abs(ratio - intervals) > 1e-9 * ratio:
        raise DomainError(f"step {quadrature_step} does not divide the pulse duration")
    if intervals < 16:
        raise PrecisionError(f"step {quadrature_step} gives {intervals} < 16 intervals")
    if pulse.amplitude == 0:
        return 0.0
    coarse = _trapezoid_area(pulse, intervals)
    fine = _trapezoid_area(pulse, 2 * intervals)
    if abs(coarse - fine) > 1e-6 * abs(fine):
        raise PrecisionError(
            f"trapezoid not converged at step {quadrature_step}: "
            f"{coarse!r} vs {fine!r} at half step")
    return coarse


def cumulative_pulse_area(t, pulse: DrivePulse, intervals: int = 4096):
    """Rotation angle accumulated from pulse start up to time ``t`` (clipped to the pulse)."""
    grid = np.linspace(0.0, pulse.duration, intervals + 1)
    env = super_gaussian_envelope(grid, pulse)
    steps = 0.5 * (env[1:] + env[:-1]) * np.diff(grid)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    return np.interp(np.clip(t, 0.0, pulse.duration), grid, cum)


def emission_expectation(state: PreparationState, coupling: float, t):
    """Mean emitted field ``-(i/2) sin(theta) sin(coupling*t) exp(i*phi)``.

    Real and imaginary parts are the I and Q quadratures.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("emission time must be non-negative")
    out = -0.5j * math.sin(state.theta) * np.sin(coupling * t_arr) * np.exp(1j * state.phi)
    return complex(out) if out.ndim == 0 else out


def emission_phase(state: PreparationState) -> float:
    """Phase of the coherent emission in [0, 2pi), or NaN when sin(theta) vanishes.

    Positive sin(theta) gives ``phi - pi/2``; negative sin(theta) flips it by pi.
    """
    s = math.sin(state.theta)
    if s == 0.0:
        return math.nan
    phase = state.phi - math.pi / 2 + (math.pi if s < 0 else 0.0)
    return phase % (2 * math.pi)


def wavepacket_envelope(t_since_pulse_end, T1: float):
    """Field amplitude decay ``exp(-t / (2 T1))`` of the emitted wavepacket."""
    if not T1 > 0:
        raise DomainError("T1 must be positive")
    t_arr = np.asarray(t_since_pulse_end, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time since pulse end must be non-negative")
    out = np.exp(-t_arr / (2.0 * T1))
    return float(out) if out.ndim == 0 else out
