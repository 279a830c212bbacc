"""Hann-windowed STFT and linear-frequency power spectrogram."""

from dataclasses import dataclass

import numpy as np

WIDEBAND_WINDOW = 2048
NARROWBAND_WINDOW = 512


@dataclass
class StftSpec:
    """STFT framing parameters.  Hop is locked to half the window."""

    window_length: int
    centered: bool = True

    def __post_init__(self):
        if self.window_length < 2 or self.window_length % 2:
            raise ValueError("window_length must be an even integer >= 2")

    @property
    def hop(self):
        return self.window_length // 2

    @property
    def dft_size(self):
        return self.window_length

    @property
    def n_bins(self):
        return self.window_length // 2 + 1


def wideband_spec():
    return StftSpec(WIDEBAND_WINDOW)


def narrowband_spec():
    return StftSpec(NARROWBAND_WINDOW)


@dataclass
class TFRepresentation:
    """2-D frequency-by-time matrix with axis metadata.

    `values` holds power (nonnegative) for every kind except ``mfcc``,
    whose rows are cepstral coefficients and may be negative.
    """

    values: np.ndarray
    bin_frequencies: np.ndarray
    frame_times: np.ndarray
    kind: str
    scale: str = "power"  # "power" or "db"

    KINDS = ("linear-stft", "mel", "cqt", "cwt", "mfcc")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.bin_frequencies = np.asarray(self.bin_frequencies,
                                          dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.scale not in ("power", "db"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if self.kind != "mfcc":
            if self.scale == "power" and np.any(self.values < 0):
                raise ValueError("power values must be nonnegative")
            if np.any(np.diff(self.bin_frequencies) <= 0):
                raise ValueError("bin_frequencies must be strictly increasing")

    @property
    def shape(self):
        return self.values.shape


def hann_window(length):
    """Periodic Hann window w[n] = 0.5 (1 - cos(2 pi n / L))."""
    if length < 2:
        raise ValueError("window length must be >= 2")
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))


def frame_signal(x, window_length, hop, centered=True):
    """Slice a signal into overlapping frames (frames as rows).

    With centering, frame t covers samples centered at t*hop with
    reflection padding at the edges; n_frames = 1 + floor(len/hop).
    """
    x = np.asarray(x, dtype=np.float64)
    if centered:
        pad = window_length // 2
        if pad >= len(x):
            raise ValueError("signal shorter than one window")
        xp = np.pad(x, pad, mode="reflect")
        n_frames = 1 + len(x) // hop
    else:
        xp = x
        if len(x) < window_length:
            raise ValueError("signal shorter than one window")
        n_frames = 1 + (len(x) - window_length) // hop
    frames = np.lib.stride_tricks.sliding_window_view(
        xp, window_length)[::hop][:n_frames]
    return np.ascontiguousarray(frames)


def stft(clip, spec):
    """Complex STFT matrix of shape (L/2 + 1, n_frames)."""
    frames = frame_signal(clip.samples, spec.window_length, spec.hop,
                          spec.centered)
    w = hann_window(spec.window_length)
    return np.fft.rfft(frames * w, n=spec.dft_size, axis=1).T


def power_spectrogram(stft_matrix, sample_rate, hop):
    """Element-wise squared magnitude of an STFT matrix."""
    stft_matrix = np.asarray(stft_matrix)
    n_bins, n_frames = stft_matrix.shape
    dft_size = max(2 * (n_bins - 1), 1)
    power = np.abs(stft_matrix) ** 2
    freqs = np.arange(n_bins) * sample_rate / dft_size
    times = np.arange(n_frames) * hop / sample_rate
    return TFRepresentation(power, freqs, times, "linear-stft")


def linear_spectrogram(clip, spec):
    """STFT power spectrogram of a standardized clip."""
    return power_spectrogram(stft(clip, spec), clip.sample_rate, spec.hop)
