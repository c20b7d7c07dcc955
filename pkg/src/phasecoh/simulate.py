"""Monte-Carlo generator of single-shot heterodyne emission records.

Each shot is

    s(t) = X * c(t) * exp(i * dphi(t)) + drive leakage + n(t)

with X ~ Bernoulli(p), c(t) the deterministic coherent emission profile
(rotating during the pulse, decaying as exp(-t/2T1) afterwards), dphi(t)
the per-shot phase noise and n(t) white complex Gaussian noise.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import rng as _rng
from .emitter import (
    DecoherenceParams,
    DrivePulse,
    PreparationState,
    cumulative_pulse_area,
    super_gaussian_envelope,
    wavepacket_envelope,
)
from .errors import ConfigError, ResourceError

BLOCK_SIZE = 4096
MAX_TRACE_BYTES = 4 << 30


class PhaseNoiseModel(str, enum.Enum):
    NONE = "none"
    WHITE = "white"
    ORNSTEIN_UHLENBECK = "ornstein_uhlenbeck"


@dataclass(frozen=True)
class PhaseNoiseConfig:
    """Extra phase noise on the emitted field, on top of pure dephasing.

    ``white`` draws an independent N(0, rms^2) phase per sample;
    ``ornstein_uhlenbeck`` is a stationary process with autocovariance
    rms^2 * exp(-|dt| / correlation_time).
    """

    model: PhaseNoiseModel = PhaseNoiseModel.NONE
    rms_amplitude: float = 0.0
    correlation_time: float = 200.0

    def __post_init__(self):
        object.__setattr__(self, "model", PhaseNoiseModel(self.model))
        if not self.rms_amplitude >= 0:
            raise ConfigError("phase noise rms must be non-negative")
        if self.model is PhaseNoiseModel.ORNSTEIN_UHLENBECK and not self.correlation_time > 0:
            raise ConfigError("OU correlation time must be positive")


def _default_pulse():
    return DrivePulse().with_area(math.pi / 2)


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce a simulated ensemble.

    Times are in ns. ``noise_sigma`` is the total complex noise variance per
    sample (half of it per quadrature). ``signal_amplitude`` is the peak
    coherent field at the start of the wavepacket for sin(theta) = 1.
    """

    pulse: DrivePulse = field(default_factory=_default_pulse)
    decoherence: DecoherenceParams = field(default_factory=DecoherenceParams)
    emission_probability: float = 0.5
    signal_amplitude: float = 1.0
    noise_sigma: float = 100.0
    phase_noise: PhaseNoiseConfig = field(default_factory=PhaseNoiseConfig)
    shots: int = 50_000
    seed: int = 0
    dt: float = 1.0
    record_length: int = 180
    pre_drive_time: float = 20.0
    shot_spacing: float = 4000.0
    crosstalk: float = 0.0
    phase_drift_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.emission_probability <= 1.0:
            raise ConfigError("emission probability must lie in [0, 1]")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not self.signal_amplitude >= 0:
            raise ConfigError("signal_amplitude must be non-negative")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if int(self.shots) != self.shots or self.shots < 1:
            raise ConfigError("shots must be a positive integer")
        if int(self.record_length) != self.record_length or self.record_length < 1:
            raise ConfigError("record_length must be a positive integer")
        if not self.pre_drive_time >= 0:
            raise ConfigError("pre_drive_time must be non-negative")
        if self.record_length * self.dt <= self.pulse_end:
            raise ConfigError("record must extend past the end of the drive pulse")
        if not (0 <= int(self.seed) < 1 << 64):
            raise ConfigError("seed must fit in 64 bits")

    @property
    def pulse_start(self):
        return self.pre_drive_time

    @property
    def pulse_end(self):
        return self.pre_drive_time + self.pulse.duration

    @property
    def times(self):
        return np.arange(self.record_length) * self.dt

    def preparation(self):
        return PreparationState.from_pulse(self.pulse)

    def to_dict(self):
        d = asdict(self)
        d["phase_noise"]["model"] = self.phase_noise.model.value
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"theta"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        theta = d.pop("theta", None)
        try:
            if "pulse" in d:
                d["pulse"] = DrivePulse(**d["pulse"])
            if "decoherence" in d:
                d["decoherence"] = DecoherenceParams(**d["decoherence"])
            if "phase_noise" in d:
                d["phase_noise"] = PhaseNoiseConfig(**d["phase_noise"])
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if theta is not None:
            cfg = cfg.with_theta(theta)
        return cfg

    def with_theta(self, theta):
        """Copy with the drive amplitude set to produce rotation ``theta``."""
        return replace(self, pulse=self.pulse.with_area(theta))


@dataclass(frozen=True)
class Trace:
    samples: np.ndarray
    start_time: float = 0.0
    dt: float = 1.0

    @property
    def times(self):
        return self.start_time + np.arange(len(self.samples)) * self.dt


@dataclass(frozen=True, eq=False)
class TraceSet:
    """N shots sharing one time axis.

    ``emission_flags`` is present for simulated data and ``None`` for
    ingested records; ``config`` likewise.
    """

    traces: np.ndarray
    dt: float = 1.0
    start_time: float = 0.0
    emission_flags: np.ndarray | None = None
    config: SimConfig | None = None

    def __post_init__(self):
        tr = np.asarray(self.traces)
        if tr.ndim != 2:
            raise ValueError("traces must be a 2-D (shots x samples) array")
        if not np.all(np.isfinite(tr)):
            raise ValueError("traces contain non-finite samples")
        tr.flags.writeable = False
        object.__setattr__(self, "traces", tr)
        if self.emission_flags is not None:
            fl = np.asarray(self.emission_flags, dtype=bool)
            if fl.shape != (tr.shape[0],):
                raise ValueError("one emission flag per shot required")
            fl.flags.writeable = False
            object.__setattr__(self, "emission_flags", fl)

    @property
    def n_shots(self):
        return self.traces.shape[0]

    @property
    def record_length(self):
        return self.traces.shape[1]

    @property
    def times(self):
        return self.start_time + np.arange(self.record_length) * self.dt

    def trace(self, i):
        return Trace(self.traces[i], self.start_time, self.dt)


def coherent_profile(config: SimConfig) -> np.ndarray:
    """Noise-free emitted field of an emitting shot, on the record time grid.

    During the pulse the amplitude follows sin of the partial rotation
    angle; after it, sin(theta) times the exp(-t/2T1) wavepacket envelope.
    The sign of sin(theta) carries the pi phase flip.
    """
    t = config.times
    prep = config.preparation()
    amp = np.zeros_like(t)
    during = (t >= config.pulse_start) & (t < config.pulse_end)
    amp[during] = np.sin(cumulative_pulse_area(t[during] - config.pulse_start, config.pulse))
    after = t >= config.pulse_end
    amp[after] = math.sin(prep.theta) * wavepacket_envelope(
        t[after] - config.pulse_end, config.decoherence.T1)
    return config.signal_amplitude * amp * np.exp(1j * (prep.phi - math.pi / 2))


def drive_leakage(config: SimConfig) -> np.ndarray:
    t = config.times
    out = np.zeros(len(t), dtype=complex)
    if config.crosstalk == 0:
        return out
    during = (t >= config.pulse_start) & (t <= config.pulse_end)
    env = super_gaussian_envelope(t[during] - config.pulse_start, config.pulse)
    out[during] = config.crosstalk * env * np.exp(1j * config.pulse.phase)
    return out


def _path_from_normals(cfg: PhaseNoiseConfig, dt, z):
    """Phase-noise paths from standard normals ``z`` of shape (shots, length)."""
    if cfg.model is PhaseNoiseModel.NONE or cfg.rms_amplitude == 0:
        return np.zeros_like(z)
    if cfg.model is PhaseNoiseModel.WHITE:
        return cfg.rms_amplitude * z
    # exact AR(1) discretisation, started from the stationary law
    a = math.exp(-dt / cfg.correlation_time)
    b = cfg.rms_amplitude * math.sqrt(-math.expm1(-2.0 * dt / cfg.correlation_time))
    out = np.empty_like(z)
    out[:, 0] = cfg.rms_amplitude * z[:, 0]
    for k in range(1, z.shape[1]):
        out[:, k] = a * out[:, k - 1] + b * z[:, k]
    return out


def correlated_phase_path(cfg: PhaseNoiseConfig, dt, length, generator) -> np.ndarray:
    """One phase-noise path of ``length`` samples drawn from ``generator``."""
    if cfg.model is PhaseNoiseModel.NONE:
        return np.zeros(length)
    z = generator.standard_normal(length)
    return _path_from_normals(cfg, dt, z[None, :])[0]


def _simulate_block(config: SimConfig, start: int, stop: int):
    n = stop - start
    L = config.record_length
    t = config.times
    streams = _rng.ShotStreams(config.seed)

    tail = t > config.pulse_end
    n_tail = int(tail.sum())
    walk_on = math.isfinite(config.decoherence.Tphi) and n_tail > 0
    pn_on = config.phase_noise.model is not PhaseNoiseModel.NONE

    flags = np.empty(n, dtype=bool)
    noise = np.empty((n, 2, L))
    walk_z = np.empty((n, n_tail)) if walk_on else None
    pn_z = np.empty((n, L)) if pn_on else None
    p = config.emission_probability
    for j, shot in enumerate(range(start, stop)):
        flags[j] = streams.at(_rng.BERNOULLI, shot).random() < p
        noise[j] = streams.at(_rng.NOISE, shot).standard_normal((2, L))
        if walk_on:
            walk_z[j] = streams.at(_rng.DEPHASING, shot).standard_normal(n_tail)
        if pn_on:
            pn_z[j] = streams.at(_rng.PHASE_NOISE, shot).standard_normal(L)

    phase = np.zeros((n, L))
    if walk_on:
        gaps = np.diff(np.concatenate([[config.pulse_end], t[tail]]))
        steps = walk_z * np.sqrt(2.0 * gaps / config.decoherence.Tphi)
        phase[:, tail] = np.cumsum(steps, axis=1)
    if pn_on:
        phase += _path_from_normals(config.phase_noise, config.dt, pn_z)
    if config.phase_drift_rate:
        phase += config.phase_drift_rate * t

    signal = flags[:, None] * coherent_profile(config)[None, :] * np.exp(1j * phase)
    scale = math.sqrt(config.noise_sigma / 2.0)
    out = signal + drive_leakage(config)[None, :] + scale * (noise[:, 0] + 1j * noise[:, 1])
    return out.astype(np.complex64), flags


def simulate_shot(config: SimConfig, shot_index: int):
    """Simulate one shot; returns ``(Trace, emission_flag)``.

    The result depends only on ``(config, shot_index)``.
    """
    if not 0 <= shot_index < 1 << 64:
        raise ConfigError("shot index out of range")
    samples, flags = _simulate_block(config, shot_index, shot_index + 1)
    return Trace(samples[0], 0.0, config.dt), bool(flags[0])


def _block_task(args):
    return _simulate_block(*args)


def simulate_ensemble(config: SimConfig, workers: int = 1) -> TraceSet:
    """Simulate ``config.shots`` independent shots.

    Output is bit-identical for any ``workers`` count: shots are cut into
    fixed blocks and every shot draws from its own substream.
    """
    nbytes = config.shots * config.record_length * 8
    if nbytes > MAX_TRACE_BYTES:
        raise ResourceError(f"ensemble needs {nbytes} bytes (limit {MAX_TRACE_BYTES})")
    bounds = [(config, s, min(s + BLOCK_SIZE, config.shots))
              for s in range(0, config.shots, BLOCK_SIZE)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_block_task(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_task, bounds))
    traces = np.concatenate([p[0] for p in parts])
    flags = np.concatenate([p[1] for p in parts])
    return TraceSet(traces, config.dt, 0.0, flags, config)
