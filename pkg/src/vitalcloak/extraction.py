"""Heart-rate estimation from displacement, with or without the decoy key."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import signal

from .signal_model import DisplacementSignal

MODES = ("authorized", "unauthorized")
METHODS = ("fft_peak", "peak_rr")
VALID_BPM = (30.0, 240.0)
# fft_peak and peak_rr further apart than this mark the estimate low-confidence
DISAGREEMENT_BPM = 10.0
RELATIVE_PROMINENCE = 0.5


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class HeartBandFilter:
    """Zero-phase Butterworth band-pass.

    Designed so that, after forward-backward application, the pass band
    [low, high] has at most 1 dB ripple and everything below
    ``low * stop_ratio_low`` or above ``high * stop_ratio_high`` is at least
    40 dB down.
    """

    low: float = 0.8
    high: float = 2.0
    stop_ratio_low: float = 0.5
    stop_ratio_high: float = 2.0
    gpass_db: float = 0.5
    gstop_db: float = 20.0

    def __post_init__(self) -> None:
        if not 0 < self.low < self.high:
            raise ExtractionError("need 0 < low < high")

    def sos(self, fs: float) -> np.ndarray:
        nyq = fs / 2.0
        ws_hi = self.high * self.stop_ratio_high
        if self.high >= nyq:
            raise ExtractionError(f"band edge {self.high} Hz beyond Nyquist {nyq} Hz")
        ws_hi = min(ws_hi, 0.5 * (self.high + nyq))
        order, wn = signal.buttord([self.low, self.high], [self.low * self.stop_ratio_low, ws_hi],
                                   self.gpass_db, self.gstop_db, fs=fs)
        return signal.butter(order, wn, btype="bandpass", output="sos", fs=fs)

    @property
    def bpm_range(self) -> tuple[float, float]:
        return self.low * 60.0, self.high * 60.0


@dataclass(frozen=True)
class NotchBank:
    """Cascade of second-order notches at the key's decoy rates (BPM).

    ``half_bandwidth`` is the half width of each single-pass -3 dB stop band.
    """

    center_frequencies: tuple[float, ...] = ()
    half_bandwidth: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_frequencies",
                           tuple(float(f) for f in self.center_frequencies))
        if self.half_bandwidth <= 0:
            raise ExtractionError("half_bandwidth must be positive")

    def sos(self, fs: float) -> np.ndarray:
        """Second-order sections of the cascade, one per decoy rate."""
        sections = []
        for f_bpm in self.center_frequencies:
            f0 = f_bpm / 60.0
            if not 0 < f0 < fs / 2:
                raise ExtractionError(f"notch at {f_bpm} BPM not representable at fs={fs}")
            bw = 2.0 * self.half_bandwidth / 60.0
            b, a = signal.iirnotch(f0, f0 / bw, fs=fs)
            sections.append(signal.tf2sos(b, a))
        return np.vstack(sections) if sections else np.empty((0, 6))

    def power_response(self, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
        """|H(f)|^2 of the cascade, i.e. the forward-backward gain."""
        freqs_hz = np.asarray(freqs_hz, dtype=float)
        if not self.center_frequencies:
            return np.ones_like(freqs_hz)
        _, h = signal.sosfreqz(self.sos(fs), worN=freqs_hz, fs=fs)
        return np.abs(h) ** 2


@dataclass(frozen=True)
class HeartRateEstimate:
    bpm: float
    method: str
    mode: str
    confidence: float
    valid: bool = True
    cross_check_bpm: float = float("nan")

    def __post_init__(self) -> None:
        if self.valid and not VALID_BPM[0] <= self.bpm <= VALID_BPM[1]:
            object.__setattr__(self, "valid", False)


def _padlen(n: int, fs: float, low: float) -> int:
    return min(n - 1, int(3.0 * fs / low))


def bandpass(sig: DisplacementSignal, band: HeartBandFilter | None = None) -> DisplacementSignal:
    band = band or HeartBandFilter()
    sos = band.sos(sig.sample_rate)
    if len(sig) < 2 * sig.sample_rate / band.low:
        raise ExtractionError("signal shorter than the filter transient")
    y = signal.sosfiltfilt(sos, sig.samples - sig.samples.mean(),
                           padlen=_padlen(len(sig), sig.sample_rate, band.low))
    return DisplacementSignal(y, sig.sample_rate, sig.label)


def apply_notches(sig: DisplacementSignal, bank: NotchBank) -> DisplacementSignal:
    """Zero-phase notch cascade (forward-backward).

    Odd extension over the whole record lets the narrow notches settle before
    the data starts; the residual transient decays within a few seconds.
    """
    if not bank.center_frequencies:
        return sig
    y = signal.sosfiltfilt(bank.sos(sig.sample_rate), sig.samples, padlen=len(sig) - 1)
    return DisplacementSignal(y, sig.sample_rate, sig.label)


def authorized_filter(sig: DisplacementSignal, key, half_bandwidth: float = 2.0) -> DisplacementSignal:
    """Remove the key's decoy rates. ``key`` is an ObfuscationKey or a list of BPM."""
    freqs = getattr(key, "frequencies", key)
    return apply_notches(sig, NotchBank(tuple(freqs), half_bandwidth))


def band_spectrum(sig: DisplacementSignal, band: HeartBandFilter | None = None,
                  step_bpm: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed magnitude spectrum on a fine BPM grid across the heart band."""
    band = band or HeartBandFilter()
    lo, hi = band.bpm_range
    m = int(round((hi - lo) / step_bpm)) + 1
    x = sig.samples - sig.samples.mean()
    x = x * signal.windows.hann(len(x), sym=False)
    mag = np.abs(signal.zoom_fft(x, [lo / 60.0, hi / 60.0], m=m, fs=sig.sample_rate, endpoint=True))
    return np.linspace(lo, hi, m), mag


def _require_length(sig: DisplacementSignal, seconds: float = 10.0) -> None:
    if sig.duration < seconds - 1e-9:
        raise ExtractionError(f"need at least {seconds} s of signal, got {sig.duration:.2f} s")


def estimate_hr_fft(sig: DisplacementSignal, band: HeartBandFilter | None = None,
                    mode: str = "unauthorized") -> HeartRateEstimate:
    _require_length(sig)
    bpm, mag = band_spectrum(sig, band)
    peaks, _ = signal.find_peaks(mag)
    if mag.max() <= 0 or len(peaks) == 0:
        return HeartRateEstimate(float("nan"), "fft_peak", mode, 0.0, valid=False)
    heights = np.sort(mag[peaks])[::-1]
    top = peaks[np.argmax(mag[peaks])]
    conf = float(heights[0] / heights[1]) if len(heights) > 1 else float("inf")
    return HeartRateEstimate(float(bpm[top]), "fft_peak", mode, conf)


def detect_beats(sig: DisplacementSignal, prominence_factor: float = 0.3,
                 max_bpm: float = VALID_BPM[1]) -> np.ndarray:
    """Sample indices of prominence-filtered local maxima.

    A peak must clear ``prominence_factor * std(x)`` and half the 90th
    percentile of all candidate prominences. The relative rule drops the
    secondary maximum that the in-band second harmonic puts between beats
    when the rate is below about 60 BPM.
    """
    x = sig.samples
    prom = prominence_factor * float(np.std(x))
    if prom <= 0:
        return np.array([], dtype=int)
    distance = max(int(sig.sample_rate * 60.0 / max_bpm), 1)
    peaks, props = signal.find_peaks(x, prominence=prom, distance=distance)
    if len(peaks) == 0:
        return peaks
    rel = RELATIVE_PROMINENCE * np.percentile(props["prominences"], 90)
    return peaks[props["prominences"] >= rel]


def rr_to_bpm(rr_intervals: Iterable[float]) -> float:
    """Heart rate = 60 / mean RR interval."""
    rr = np.asarray(list(rr_intervals), dtype=float)
    if rr.size == 0 or rr.mean() <= 0:
        raise ExtractionError("need at least one positive RR interval")
    return 60.0 / float(rr.mean())


def estimate_hr_peaks(sig: DisplacementSignal, prominence_factor: float = 0.3,
                      mode: str = "unauthorized") -> HeartRateEstimate:
    _require_length(sig)
    peaks = detect_beats(sig, prominence_factor)
    if len(peaks) < 2:
        return HeartRateEstimate(float("nan"), "peak_rr", mode, 0.0, valid=False)
    rr = np.diff(peaks) / sig.sample_rate
    # regularity of RR intervals as confidence
    conf = float(1.0 / (1.0 + np.std(rr) / np.mean(rr)))
    return HeartRateEstimate(rr_to_bpm(rr), "peak_rr", mode, conf)


def estimate(sig: DisplacementSignal, mode: str = "unauthorized", key=None,
             method: str = "fft_peak", band: HeartBandFilter | None = None,
             half_bandwidth: float = 2.0, prominence_factor: float = 0.3) -> HeartRateEstimate:
    """Band-pass, optionally strip the key's decoys, then estimate.

    The other method runs as a cross-check; if the two disagree by more than
    ``DISAGREEMENT_BPM`` the primary estimate is kept with confidence 0.
    """
    if mode not in MODES:
        raise ExtractionError(f"mode must be one of {MODES}")
    if method not in METHODS:
        raise ExtractionError(f"method must be one of {METHODS}")
    if mode == "authorized" and key is None:
        raise ExtractionError("authorized mode requires a key")
    x = bandpass(sig, band)
    if mode == "authorized":
        x = authorized_filter(x, key, half_bandwidth)
    fft_est = estimate_hr_fft(x, band, mode)
    rr_est = estimate_hr_peaks(x, prominence_factor, mode)
    primary, other = (fft_est, rr_est) if method == "fft_peak" else (rr_est, fft_est)
    conf = primary.confidence
    if not (other.valid and primary.valid) or abs(primary.bpm - other.bpm) > DISAGREEMENT_BPM:
        conf = 0.0
    return HeartRateEstimate(primary.bpm, primary.method, mode, conf, primary.valid, other.bpm)
