"""Mel filterbank projection and MFCC cepstrogram."""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from . import stft as stft_mod
from .stft import TFRepresentation

WIDEBAND_MELS = 512
NARROWBAND_MELS = 128
DEFAULT_N_MFCC = 40
LOG_FLOOR = 1e-10


class FilterbankError(ValueError):
    """Raised for mel filterbank configurations with empty filters."""


def mel_scale(f):
    """Hz to mel, m = 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    weights: np.ndarray
    center_frequencies: np.ndarray
    f_min: float
    f_max: float

    @property
    def n_mels(self):
        return self.weights.shape[0]


def _triangle_area(lo, hi, left, center, right):
    """Integral of the unit-peak triangle (left, center, right) over [lo, hi].

    Vectorized over (lo, hi) pairs; used to attach weight to an FFT bin by
    averaging the triangle over the bin's frequency interval.
    """
    def ramp_int(a, b, x0, x1, y0, y1):
        # integral over [a,b] clipped to [x0,x1] of the line through
        # (x0,y0)-(x1,y1)
        a = np.clip(a, x0, x1)
        b = np.clip(b, x0, x1)
        slope = (y1 - y0) / (x1 - x0)
        fa = y0 + slope * (a - x0)
        fb = y0 + slope * (b - x0)
        return 0.5 * (fa + fb) * (b - a)

    return (ramp_int(lo, hi, left, center, 0.0, 1.0) +
            ramp_int(lo, hi, center, right, 1.0, 0.0))


def build_mel_filterbank(n_mels, n_fft_bins, sample_rate, f_min=0.0,
                         f_max=None):
    """Triangular mel filterbank with unit-peak rows.

    Filter apexes sit at mel-equally-spaced centers between mel(f_min) and
    mel(f_max).  Each weight is the triangle averaged over the FFT bin's
    frequency interval, so every in-range filter keeps positive weight even
    when it is narrower than the bin spacing.  Configurations with more
    filters than spectrum bins are rejected outright.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if not 0 <= f_min < f_max <= sample_rate / 2.0:
        raise ValueError("need 0 <= f_min < f_max <= Nyquist")
    if n_mels > n_fft_bins:
        raise FilterbankError(
            f"{n_mels} mel filters over {n_fft_bins} spectrum bins: "
            "more filters than bins guarantees empty filters")

    dft_size = 2 * (n_fft_bins - 1)
    bin_hz = sample_rate / dft_size
    bin_freqs = np.arange(n_fft_bins) * bin_hz
    lo = bin_freqs - bin_hz / 2.0
    hi = bin_freqs + bin_hz / 2.0

    mel_pts = np.linspace(mel_scale(f_min), mel_scale(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)

    weights = np.zeros((n_mels, n_fft_bins))
    for k in range(n_mels):
        left, center, right = hz_pts[k], hz_pts[k + 1], hz_pts[k + 2]
        row = _triangle_area(lo, hi, left, center, right) / bin_hz
        peak = row.max()
        if peak <= 0.0:
            raise FilterbankError(f"mel filter {k} has no positive weight")
        weights[k] = row / peak

    return MelFilterbank(weights, hz_pts[1:-1], float(f_min), float(f_max))


def mel_spectrogram(linear, fb):
    """Project a linear-STFT power spectrogram through a mel filterbank."""
    if linear.kind != "linear-stft":
        raise ValueError("input must be a linear-stft representation")
    if fb.weights.shape[1] != linear.values.shape[0]:
        raise ValueError(
            f"filterbank expects {fb.weights.shape[1]} bins, "
            f"got {linear.values.shape[0]}")
    values = fb.weights @ linear.values
    return TFRepresentation(values, fb.center_frequencies,
                            linear.frame_times, "mel")


def mfcc(clip, n_coeffs=DEFAULT_N_MFCC, spec=None, n_mels=NARROWBAND_MELS):
    """MFCC cepstrogram: orthonormal DCT-II of the log mel spectrogram.

    Uses the narrowband STFT preset by default.  Keeps the first
    `n_coeffs` coefficients per frame.
    """
    if spec is None:
        spec = stft_mod.narrowband_spec()
    fb = build_mel_filterbank(n_mels, spec.n_bins, clip.sample_rate)
    mel = mel_spectrogram(stft_mod.linear_spectrogram(clip, spec), fb)
    if n_coeffs > mel.values.shape[0]:
        raise ValueError(
            f"n_coeffs={n_coeffs} exceeds {mel.values.shape[0]} mel bands")
    log_mel = np.log(mel.values + LOG_FLOOR)
    coeffs = dct(log_mel, type=2, norm="ortho", axis=0)[:n_coeffs]
    return TFRepresentation(coeffs, np.arange(n_coeffs, dtype=float),
                            mel.frame_times, "mfcc")
