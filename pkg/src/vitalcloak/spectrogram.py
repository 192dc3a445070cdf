"""Time-frequency views at a fixed BPM resolution."""

from __future__ import annotations

import numpy as np
from scipy import signal

from .signal_model import DisplacementSignal


def spectrogram(x: np.ndarray, fs: float, resolution_bpm: float = 6.0,
                overlap: float = 0.9, pad: int = 4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hann STFT whose window length gives ``resolution_bpm`` resolution.

    The window is zero-padded ``pad`` times, so the frequency grid is
    ``resolution_bpm / pad`` apart; a weak line squeezed between two strong
    neighbours still shows up as a local maximum.

    Returns (times_s, freqs_bpm, power[freq, time]).
    """
    nperseg = int(round(60.0 / resolution_bpm * fs))
    if nperseg > len(x):
        raise ValueError(f"signal shorter than one {60.0 / resolution_bpm:.1f} s window")
    noverlap = min(int(overlap * nperseg), nperseg - 1)
    f, t, sxx = signal.spectrogram(np.asarray(x, float) - np.mean(x), fs=fs, window="hann",
                                   nperseg=nperseg, noverlap=noverlap, nfft=nperseg * max(int(pad), 1),
                                   detrend="constant",
                                   scaling="spectrum")
    return t, f * 60.0, sxx


def signal_spectrogram(sig: DisplacementSignal, resolution_bpm: float = 6.0, overlap: float = 0.9,
                       pad: int = 4):
    return spectrogram(sig.samples, sig.sample_rate, resolution_bpm, overlap, pad)


def ridges(freqs_bpm: np.ndarray, power: np.ndarray, band=(45.0, 130.0), top: int | None = None,
           floor_db: float = -20.0) -> np.ndarray:
    """Local maxima of the time-averaged spectrum inside ``band``, strongest first.

    Maxima more than ``floor_db`` below the strongest one are dropped.
    """
    mean = power.mean(axis=1)
    sel = np.flatnonzero((freqs_bpm >= band[0]) & (freqs_bpm <= band[1]))
    # pad so a maximum at the band edge still counts
    seg = np.concatenate(([-np.inf], mean[sel], [-np.inf]))
    peaks, _ = signal.find_peaks(seg)
    peaks = sel[peaks - 1]
    if len(peaks) == 0:
        return np.array([])
    peaks = peaks[mean[peaks] >= mean[peaks].max() * 10.0 ** (floor_db / 10.0)]
    order = np.argsort(mean[peaks])[::-1]
    out = freqs_bpm[peaks[order]]
    return out if top is None else out[:top]


def ridges_match(freqs_bpm: np.ndarray, power: np.ndarray, targets, tolerance_bpm: float = 6.0,
                 band=(45.0, 130.0), floor_db: float = -20.0) -> bool:
    """True when every target has a ridge within ``tolerance_bpm`` (one resolution bin by default)."""
    found = ridges(freqs_bpm, power, band, floor_db=floor_db)
    return all(np.any(np.abs(found - f) <= tolerance_bpm + 1e-9) for f in targets)


def save_matrix(path, times: np.ndarray, freqs_bpm: np.ndarray, power: np.ndarray) -> None:
    """Dense text matrix: first row is times, first column is frequencies."""
    mat = np.zeros((len(freqs_bpm) + 1, len(times) + 1))
    mat[0, 0] = np.nan
    mat[0, 1:] = times
    mat[1:, 0] = freqs_bpm
    mat[1:, 1:] = power
    np.savetxt(path, mat, fmt="%.10g", delimiter=",")


def load_matrix(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mat = np.loadtxt(path, delimiter=",", ndmin=2)
    return mat[0, 1:], mat[1:, 0], mat[1:, 1:]
