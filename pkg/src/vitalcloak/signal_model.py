"""Chest-motion waveforms: true heartbeat, decoy pulse trains and their composite.

All displacements are in millimetres. Randomness always comes from an
explicitly passed ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LABELS = ("true", "decoy", "composite")

# Gaussian FWHM -> standard deviation
_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


class SignalError(ValueError):
    """Invalid waveform parameters."""


@dataclass(frozen=True)
class VitalSignSource:
    """Generative parameters for one person's chest motion.

    ``pulse_shape_width`` is the full width at half maximum of each Gaussian
    beat. ``jitter_std`` is the fractional std of each RR interval.
    """

    heart_rate: float = 66.0
    heartbeat_amplitude: float = 0.5
    pulse_shape_width: float = 0.08
    breathing_enabled: bool = False
    breathing_rate: float = 15.0
    breathing_amplitude: float = 4.0
    jitter_std: float = 0.02
    hr_range: tuple[float, float] = (30.0, 240.0)

    def __post_init__(self) -> None:
        lo, hi = self.hr_range
        if not lo <= self.heart_rate <= hi:
            raise SignalError(f"heart_rate {self.heart_rate} outside {self.hr_range}")
        if self.heartbeat_amplitude <= 0:
            raise SignalError("heartbeat_amplitude must be > 0")
        if not 0 < self.pulse_shape_width < 60.0 / self.heart_rate:
            raise SignalError("pulse_shape_width must be positive and shorter than one beat")
        if not 0.0 <= self.jitter_std <= 0.1:
            raise SignalError("jitter_std must lie in [0, 0.1]")
        if self.breathing_enabled and (self.breathing_rate <= 0 or self.breathing_amplitude < 0):
            raise SignalError("breathing_rate must be > 0 and breathing_amplitude >= 0")


@dataclass(frozen=True, eq=False)
class DisplacementSignal:
    """Uniformly sampled radial displacement in mm."""

    samples: np.ndarray
    sample_rate: float
    label: str = "true"

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise SignalError("samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise SignalError("sample_rate must be positive")
        if self.label not in LABELS:
            raise SignalError(f"label must be one of {LABELS}")
        if not np.all(np.isfinite(samples)):
            raise SignalError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def scaled(self, gain: float) -> "DisplacementSignal":
        return DisplacementSignal(self.samples * gain, self.sample_rate, self.label)


@dataclass(frozen=True)
class PulseTrainSpec:
    """Binary valve-drive pulse train built from a sum of sinusoids."""

    decoy_frequencies: tuple[float, ...]
    base_duration: float = 10.0
    base_sample_rate: float = 2000.0
    pulse_width: float = 0.025
    repetitions: int = 3

    def __post_init__(self) -> None:
        freqs = tuple(float(f) for f in self.decoy_frequencies)
        object.__setattr__(self, "decoy_frequencies", freqs)
        if not freqs:
            raise SignalError("at least one decoy frequency is required")
        if any(f <= 0 for f in freqs):
            raise SignalError("decoy frequencies must be positive")
        if self.base_duration <= 0 or self.base_sample_rate <= 0 or self.repetitions < 1:
            raise SignalError("base_duration, base_sample_rate and repetitions must be positive")
        if self.pulse_width <= 0 or self.pulse_width * max(freqs) / 60.0 >= 1.0:
            raise SignalError("pulse_width must be positive and shorter than the fastest decoy period")

    @property
    def duration(self) -> float:
        return self.base_duration * self.repetitions


@dataclass(frozen=True, eq=False)
class PulseTrain:
    samples: np.ndarray
    sample_rate: float

    @property
    def onsets(self) -> np.ndarray:
        """Sample indices where the train switches from 0 to 1."""
        s = np.asarray(self.samples, dtype=np.int8)
        prev = np.concatenate(([0], s[:-1]))
        return np.flatnonzero((s == 1) & (prev == 0))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ActuatorKernel:
    """Displacement response of one inflate/deflate cycle.

    Linear rise over ``rise_time``, then exponential decay with time constant
    ``fall_time / 3`` truncated at ``fall_time``. Overlapping responses add and
    are clipped at ``saturation * peak_displacement``.
    """

    rise_time: float = 0.025
    fall_time: float = 0.050
    peak_displacement: float = 0.5
    saturation: float = 1.5

    def __post_init__(self) -> None:
        if self.rise_time <= 0 or self.fall_time <= 0 or self.peak_displacement <= 0:
            raise SignalError("kernel durations and peak must be positive")
        if self.saturation < 1.0:
            raise SignalError("saturation must be >= 1")

    def samples(self, rate: float) -> np.ndarray:
        n_rise = max(int(round(self.rise_time * rate)), 1)
        n_fall = max(int(round(self.fall_time * rate)), 1)
        rise = np.arange(1, n_rise + 1) / n_rise
        tau = self.fall_time / 3.0
        fall = np.exp(-np.arange(1, n_fall + 1) / (tau * rate))
        return self.peak_displacement * np.concatenate((rise, fall))


def _check_rate_duration(duration: float, rate: float) -> int:
    if duration <= 0 or rate <= 0:
        raise SignalError("duration and rate must be positive")
    return int(round(duration * rate))


def beat_times(rate_bpm: float, duration: float, jitter_std: float,
               rng: np.random.Generator | None, offset: float | None = None) -> np.ndarray:
    """Beat instants with multiplicative Gaussian jitter on each RR interval.

    With ``offset=None`` the first beat is placed uniformly within the first
    period (drawn from ``rng``); without an rng it sits at 0.
    """
    rr = 60.0 / rate_bpm
    if offset is None:
        offset = rng.uniform(0.0, rr) if rng is not None else 0.0
    n_max = int(np.ceil(duration / rr)) + 3
    if jitter_std > 0:
        if rng is None:
            raise SignalError("jitter requires an rng")
        intervals = rr * (1.0 + jitter_std * rng.standard_normal(n_max))
        intervals = np.clip(intervals, 0.2 * rr, None)
    else:
        intervals = np.full(n_max, rr)
    times = offset + np.concatenate(([0.0], np.cumsum(intervals[:-1])))
    # keep beats whose pulse may still reach into the window
    return times[times < duration + rr]


def synthesize_heartbeat(src: VitalSignSource, duration: float, rate: float,
                         rng: np.random.Generator | None = None,
                         offset: float | None = None,
                         label: str = "true") -> DisplacementSignal:
    """Gaussian pulse per beat at ``src.heart_rate``, plus optional breathing."""
    n = _check_rate_duration(duration, rate)
    if rate < 4.0 * src.heart_rate / 60.0 * 10.0:
        raise SignalError(f"rate {rate} Hz too low to resolve the pulse shape")
    t = np.arange(n) / rate
    sigma = src.pulse_shape_width * _FWHM_TO_SIGMA
    x = np.zeros(n)
    half = int(np.ceil(5 * sigma * rate))
    for b in beat_times(src.heart_rate, duration, src.jitter_std, rng, offset):
        c = int(round(b * rate))
        lo, hi = max(c - half, 0), min(c + half + 1, n)
        if lo >= hi:
            continue
        seg = t[lo:hi] - b
        x[lo:hi] += src.heartbeat_amplitude * np.exp(-0.5 * (seg / sigma) ** 2)
    if src.breathing_enabled:
        phase = rng.uniform(0, 2 * np.pi) if rng is not None else 0.0
        x += src.breathing_amplitude * np.sin(2 * np.pi * src.breathing_rate / 60.0 * t + phase)
    return DisplacementSignal(x, rate, label)


def positive_zero_crossings(s: np.ndarray, cyclic: bool = True) -> np.ndarray:
    """Indices n with s[n-1] < 0 <= s[n].

    With ``cyclic`` the sample before index 0 is the last sample, which is the
    right reading for a signal that is tiled end to end.
    """
    prev = np.roll(s, 1) if cyclic else np.concatenate(([0.0], s[:-1]))
    hits = (prev < 0) & (s >= 0)
    if not cyclic:
        hits[0] = False
    return np.flatnonzero(hits)


def decoy_base_signal(spec: PulseTrainSpec) -> np.ndarray:
    n = int(round(spec.base_duration * spec.base_sample_rate))
    t = np.arange(n) / spec.base_sample_rate
    base = np.zeros(n)
    for f in spec.decoy_frequencies:
        base += np.sin(2 * np.pi * f / 60.0 * t)
    return base


def generate_pulse_train(spec: PulseTrainSpec) -> PulseTrain:
    """Tile the sum-of-sinusoids base and emit a fixed-width pulse at every
    positive-going zero crossing."""
    s = np.tile(decoy_base_signal(spec), spec.repetitions)
    width = max(int(round(spec.pulse_width * spec.base_sample_rate)), 1)
    out = np.zeros(len(s), dtype=np.uint8)
    for z in positive_zero_crossings(s, cyclic=True):
        out[z:z + width] = 1
    return PulseTrain(out, spec.base_sample_rate)


def actuate(pulses: PulseTrain, kernel: ActuatorKernel) -> DisplacementSignal:
    """Drive the pneumatic kernel with each pulse onset; overlaps saturate."""
    k = kernel.samples(pulses.sample_rate)
    n = len(pulses.samples)
    x = np.zeros(n + len(k))
    for onset in pulses.onsets:
        x[onset:onset + len(k)] += k
    x = np.minimum(x[:n], kernel.saturation * kernel.peak_displacement)
    return DisplacementSignal(x, pulses.sample_rate, "decoy")


def superimpose(*signals: DisplacementSignal) -> DisplacementSignal:
    """Pointwise sum of equally sampled signals."""
    if not signals:
        raise SignalError("nothing to superimpose")
    rate = signals[0].sample_rate
    n = len(signals[0])
    for s in signals[1:]:
        if s.sample_rate != rate:
            raise SignalError("sample rates differ; resample first")
        if len(s) != n:
            raise SignalError("signal lengths differ; truncate first")
    total = np.sum([s.samples for s in signals], axis=0)
    return DisplacementSignal(total, rate, "composite")


@dataclass(frozen=True)
class DecoyConfig:
    """How the actuator renders a key's frequencies.

    ``model="pneumatic"`` follows the valve chain: zero-crossing pulse train
    driving the actuator kernel. ``model="mimic"`` renders every decoy as an
    independent heartbeat-shaped component with the same pulse shape and RR
    jitter as the true heart, i.e. an ideal heartbeat emulator.
    """

    model: str = "pneumatic"
    amplitude: float = 0.5
    kernel: ActuatorKernel = field(default_factory=ActuatorKernel)
    pulse_width: float = 0.025
    repetitions: int = 3

    def __post_init__(self) -> None:
        if self.model not in ("pneumatic", "mimic"):
            raise SignalError(f"unknown decoy model {self.model!r}")
        if self.amplitude <= 0:
            raise SignalError("decoy amplitude must be positive")


def synthesize_decoys(freqs: Sequence[float], duration: float, rate: float,
                      cfg: DecoyConfig, rng: np.random.Generator,
                      template: VitalSignSource | None = None) -> DisplacementSignal:
    """Render decoy displacement for ``freqs`` (BPM) at ``rate`` Hz."""
    n = _check_rate_duration(duration, rate)
    if len(freqs) == 0:
        return DisplacementSignal(np.zeros(n), rate, "decoy")
    if cfg.model == "mimic":
        template = template or VitalSignSource()
        parts = []
        for f in freqs:
            src = VitalSignSource(heart_rate=float(f), heartbeat_amplitude=cfg.amplitude,
                                  pulse_shape_width=template.pulse_shape_width,
                                  jitter_std=template.jitter_std)
            parts.append(synthesize_heartbeat(src, duration, rate, rng).samples)
        return DisplacementSignal(np.sum(parts, axis=0), rate, "decoy")
    spec = PulseTrainSpec(tuple(freqs), base_duration=duration / cfg.repetitions,
                          base_sample_rate=rate, pulse_width=cfg.pulse_width,
                          repetitions=cfg.repetitions)
    train = generate_pulse_train(spec)
    # the valve starts at an arbitrary instant relative to the heart
    train = PulseTrain(np.roll(train.samples, int(rng.integers(len(train.samples)))), rate)
    kernel = ActuatorKernel(cfg.kernel.rise_time, cfg.kernel.fall_time, cfg.amplitude,
                            cfg.kernel.saturation)
    x = actuate(train, kernel).samples
    if len(x) != n:
        x = np.resize(x, n)
    return DisplacementSignal(x, rate, "decoy")
