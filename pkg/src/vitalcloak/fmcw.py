"""Single-channel FMCW sensing of a displacement signal.

The dechirped IF row for a target at distance d is

    A * exp(j*2*pi*f_b*t + j*4*pi*f_c*d/c),   f_b = 2*slope*d/c,

with d held fixed within a chirp. The same model serves the 77 GHz radar and
the 18-22 kHz acoustic sonar; only the constants differ.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import windows

from .signal_model import DisplacementSignal

SPEED_OF_LIGHT = 299_792_458.0
SPEED_OF_SOUND = 343.0
# noise is drawn per block of this many frames from a seed derived from the
# block index, so results do not depend on how frames are chunked
FRAME_BLOCK = 1024
IF_MAGIC = b"FMCWIF01"


class FMCWError(ValueError):
    pass


@dataclass(frozen=True)
class SensorProfile:
    name: str
    start_frequency: float
    slope: float
    adc_rate: float
    adc_samples: int
    fft_size: int
    chirp_duration: float
    frame_period: float
    propagation_speed: float

    def __post_init__(self) -> None:
        if self.adc_samples > self.fft_size:
            raise FMCWError("adc_samples must not exceed fft_size")
        if min(self.start_frequency, self.slope, self.adc_rate, self.chirp_duration,
               self.frame_period, self.propagation_speed) <= 0:
            raise FMCWError("profile parameters must be positive")

    @property
    def bandwidth(self) -> float:
        """Swept bandwidth seen by the ADC window."""
        return self.slope * self.adc_samples / self.adc_rate

    @property
    def range_resolution(self) -> float:
        return self.propagation_speed / (2.0 * self.bandwidth)

    @property
    def wavelength(self) -> float:
        return self.propagation_speed / self.start_frequency

    @property
    def effective_wavelength(self) -> float:
        """Wavelength at the centre of the sampled sweep.

        The phase read at a range-FFT peak is referenced to the middle of the
        ADC window, so it scales with f_c + B/2 rather than f_c.
        """
        return self.propagation_speed / (self.start_frequency + 0.5 * self.bandwidth)

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.frame_period

    @property
    def max_range(self) -> float:
        # complex IF: beat frequencies up to adc_rate are unambiguous
        return self.adc_rate * self.propagation_speed / (2.0 * self.slope)

    def beat_frequency(self, distance):
        return 2.0 * self.slope * np.asarray(distance) / self.propagation_speed

    def range_bin(self, distance: float) -> int:
        return int(round(self.beat_frequency(distance) * self.fft_size / self.adc_rate))

    def bin_distance(self, index) -> np.ndarray:
        return np.asarray(index) * self.adc_rate / self.fft_size * self.propagation_speed / (2.0 * self.slope)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorProfile":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FMCWError(f"unknown profile fields: {sorted(unknown)}")
        return cls(**d)


MMWAVE = SensorProfile(
    name="mmwave",
    start_frequency=77e9,
    slope=60.012e12,
    adc_rate=5e6,
    adc_samples=256,
    fft_size=256,
    chirp_duration=98e-6,
    frame_period=0.5e-3,
    propagation_speed=SPEED_OF_LIGHT,
)

ACOUSTIC = SensorProfile(
    name="acoustic",
    start_frequency=18e3,
    slope=4e3 / (512 / 48e3),
    adc_rate=48e3,
    adc_samples=512,
    fft_size=512,
    chirp_duration=512 / 48e3,
    # back-to-back chirps: one phase sample per chirp
    frame_period=512 / 48e3,
    propagation_speed=SPEED_OF_SOUND,
)

PRESETS = {"mmwave": MMWAVE, "acoustic": ACOUSTIC}


def get_profile(name_or_profile) -> SensorProfile:
    if isinstance(name_or_profile, SensorProfile):
        return name_or_profile
    try:
        return PRESETS[str(name_or_profile).lower()]
    except KeyError:
        raise FMCWError(f"unknown sensor preset {name_or_profile!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class Reflector:
    """Additional echo, static unless it carries a displacement."""

    distance: float
    amplitude: float = 1.0
    displacement: DisplacementSignal | None = None


@dataclass(frozen=True)
class Scene:
    base_distance: float
    displacement: DisplacementSignal
    amplitude_scale: float = 1.0
    snr_db: float = 20.0
    clutter: tuple[Reflector, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.base_distance <= 0:
            raise FMCWError("base_distance must be positive")
        if self.amplitude_scale <= 0:
            raise FMCWError("amplitude_scale must be positive")

    def targets(self):
        yield self.base_distance, self.amplitude_scale, self.displacement
        for r in self.clutter:
            yield r.distance, r.amplitude, r.displacement


@dataclass(frozen=True, eq=False)
class PhaseSeries:
    phase: np.ndarray
    range_bin: int
    sample_rate: float
    unwrapped: bool = True


def _frame_distances(disp: DisplacementSignal | None, d0: float, times: np.ndarray) -> np.ndarray:
    if disp is None:
        return np.full(times.shape, d0)
    # mm -> m, sampled at the chirp instants
    return d0 + 1e-3 * np.interp(times, disp.times, disp.samples)


def frame_count(profile: SensorProfile, scene: Scene) -> int:
    return int(np.floor(scene.displacement.duration * profile.frame_rate + 1e-9))


def _validate(profile: SensorProfile, scene: Scene, n_frames: int) -> None:
    if n_frames < 1:
        raise FMCWError("displacement shorter than one frame")
    if n_frames > frame_count(profile, scene):
        raise FMCWError("displacement too short for the requested number of frames")
    for d0, _, disp in scene.targets():
        excursion = 0.0 if disp is None else 1e-3 * float(np.max(np.abs(disp.samples)))
        if d0 + excursion >= profile.max_range:
            raise FMCWError(f"target at {d0} m beyond unambiguous range {profile.max_range:.3f} m")


def _noise_std(profile: SensorProfile, scene: Scene) -> float:
    # per-sample SNR relative to the primary echo power
    return scene.amplitude_scale / np.sqrt(10.0 ** (scene.snr_db / 10.0))


def _simulate_block(profile: SensorProfile, scene: Scene, start: int, stop: int,
                    noise_seed: int | None) -> np.ndarray:
    times = np.arange(start, stop) * profile.frame_period
    fast = np.arange(profile.adc_samples) / profile.adc_rate
    k = 2.0 * np.pi / profile.propagation_speed
    rows = np.zeros((stop - start, profile.adc_samples), dtype=np.complex128)
    for d0, amp, disp in scene.targets():
        d = _frame_distances(disp, d0, times)
        fb = profile.beat_frequency(d)
        phase = 2.0 * k * profile.start_frequency * d
        rows += amp * np.exp(1j * (2.0 * np.pi * np.outer(fb, fast) + phase[:, None]))
    if noise_seed is not None:
        sigma = _noise_std(profile, scene) / np.sqrt(2.0)
        block, lo = divmod(start, FRAME_BLOCK)
        g = np.random.default_rng([noise_seed, block])
        # always draw the whole block so a truncated run sees the same noise
        w = g.standard_normal((FRAME_BLOCK, profile.adc_samples, 2))[lo:lo + stop - start]
        rows += sigma * (w[..., 0] + 1j * w[..., 1])
    return rows


def _blocks(n_frames: int):
    for start in range(0, n_frames, FRAME_BLOCK):
        yield start, min(start + FRAME_BLOCK, n_frames)


def _noise_seed(rng: np.random.Generator | None, scene: Scene) -> int | None:
    if rng is None or not np.isfinite(scene.snr_db):
        return None
    return int(rng.integers(2**63))


def simulate_frames(profile: SensorProfile, scene: Scene, rng: np.random.Generator | None = None,
                    n_frames: int | None = None) -> np.ndarray:
    """Complex IF matrix [frames x adc_samples]; noiseless when ``rng`` is None."""
    n = frame_count(profile, scene) if n_frames is None else n_frames
    _validate(profile, scene, n)
    seed = _noise_seed(rng, scene)
    return np.concatenate([_simulate_block(profile, scene, a, b, seed) for a, b in _blocks(n)])


def range_window(profile: SensorProfile) -> np.ndarray:
    return windows.hann(profile.adc_samples, sym=False)


def range_fft(frames: np.ndarray, profile: SensorProfile) -> np.ndarray:
    """Hann-windowed, zero-padded FFT of each chirp."""
    frames = np.atleast_2d(frames)
    if frames.shape[1] != profile.adc_samples:
        raise FMCWError("row length must equal adc_samples")
    return np.fft.fft(frames * range_window(profile), n=profile.fft_size, axis=1)


def observe(profile: SensorProfile, scene: Scene, rng: np.random.Generator | None = None,
            max_bin: int | None = None) -> np.ndarray:
    """Range profiles [frames x max_bin], computed block by block.

    Equivalent to ``range_fft(simulate_frames(...))[:, :max_bin]`` without
    holding the raw IF matrix in memory.
    """
    n = frame_count(profile, scene)
    _validate(profile, scene, n)
    max_bin = profile.fft_size // 2 if max_bin is None else max_bin
    seed = _noise_seed(rng, scene)
    out = np.empty((n, max_bin), dtype=np.complex128)
    for a, b in _blocks(n):
        out[a:b] = range_fft(_simulate_block(profile, scene, a, b, seed), profile)[:, :max_bin]
    return out


def select_bin(range_profiles: np.ndarray, static_ratio: float = 10.0) -> int:
    """Bin with the largest slow-time variance, ignoring DC.

    If no bin moves clearly above the typical bin (max variance below
    ``static_ratio`` x median), fall back to the strongest mean magnitude.
    """
    rp = np.atleast_2d(range_profiles)
    if rp.shape[0] < 1 or rp.shape[1] < 2:
        raise FMCWError("need at least one frame and two bins")
    var = np.var(rp[:, 1:], axis=0)
    power = np.mean(np.abs(rp[:, 1:]) ** 2, axis=0)
    # variance at round-off level is not motion
    moving = var.max() > 1e-12 * power.max()
    if moving and var.max() > static_ratio * np.median(var):
        return int(np.argmax(var)) + 1
    return int(np.argmax(np.mean(np.abs(rp[:, 1:]), axis=0))) + 1


def extract_phase(range_profiles: np.ndarray, bin_index: int, sample_rate: float) -> PhaseSeries:
    """Unwrapped, mean-removed slow-time phase at one range bin."""
    rp = np.atleast_2d(range_profiles)
    if not 0 <= bin_index < rp.shape[1]:
        raise FMCWError(f"bin {bin_index} out of range")
    phi = np.unwrap(np.angle(rp[:, bin_index]))
    return PhaseSeries(phi - phi.mean(), bin_index, sample_rate, True)


def displacement_from_phase(series: PhaseSeries, profile: SensorProfile,
                            label: str = "composite", reference: str = "center") -> DisplacementSignal:
    """x = lambda / (4 pi) * phi, returned in mm.

    ``reference="start"`` uses lambda = c / f_c literally; the default uses the
    sweep-centre wavelength, which is what the peak-bin phase actually tracks.
    """
    if reference not in ("center", "start"):
        raise FMCWError("reference must be 'center' or 'start'")
    lam = profile.effective_wavelength if reference == "center" else profile.wavelength
    x_m = lam / (4.0 * np.pi) * series.phase
    return DisplacementSignal(1e3 * x_m, series.sample_rate, label)


def sense(profile: SensorProfile, scene: Scene, rng: np.random.Generator | None = None,
          label: str = "composite") -> tuple[DisplacementSignal, PhaseSeries]:
    """Full chain: IF frames -> range FFT -> bin selection -> displacement."""
    rp = observe(profile, scene, rng)
    series = extract_phase(rp, select_bin(rp), profile.frame_rate)
    return displacement_from_phase(series, profile, label), series


def write_if_matrix(path, frames: np.ndarray) -> None:
    """Little-endian complex64 with a 16-byte header: magic, rows, cols."""
    frames = np.atleast_2d(frames)
    rows, cols = frames.shape
    with open(path, "wb") as fh:
        fh.write(IF_MAGIC + struct.pack("<II", rows, cols))
        fh.write(frames.astype("<c8").tobytes())


def read_if_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != IF_MAGIC:
        raise FMCWError("not an IF matrix file")
    rows, cols = struct.unpack("<II", raw[8:16])
    return np.frombuffer(raw[16:], dtype="<c8").reshape(rows, cols)


def with_snr(scene: Scene, snr_db: float) -> Scene:
    return replace(scene, snr_db=snr_db)
