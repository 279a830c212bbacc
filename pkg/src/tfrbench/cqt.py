"""Constant-Q transform with geometrically spaced bins."""

from dataclasses import dataclass

import numpy as np

from .stft import TFRepresentation, hann_window

# Both presets start at musical C1.
DEFAULT_F_MIN = 32.70


@dataclass
class CqtSpec:
    n_bins: int
    bins_per_octave: int
    f_min: float = DEFAULT_F_MIN
    sample_rate: int = 22050
    hop: int = 256

    def __post_init__(self):
        if self.n_bins < 1 or self.bins_per_octave < 1:
            raise ValueError("bin counts must be positive")
        if self.f_min <= 0:
            raise ValueError("f_min must be positive")
        top = self.f_min * 2.0 ** ((self.n_bins - 1) / self.bins_per_octave)
        if top > self.sample_rate / 2.0:
            raise ValueError(
                f"top CQT bin {top:.1f} Hz exceeds Nyquist "
                f"{self.sample_rate / 2.0:.1f} Hz")

    @property
    def q_factor(self):
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)


def wideband_spec(sample_rate=22050):
    return CqtSpec(1024, 128, sample_rate=sample_rate, hop=1024)


def narrowband_spec(sample_rate=22050):
    return CqtSpec(256, 32, sample_rate=sample_rate, hop=256)


def cqt_center_frequencies(spec):
    """f_k = 2^(k/b) * f_min for k in [0, n_bins)."""
    k = np.arange(spec.n_bins)
    return spec.f_min * 2.0 ** (k / spec.bins_per_octave)


def cqt_window_lengths(spec):
    """Per-bin window length N[k] = ceil(Q * fs / f_k)."""
    freqs = cqt_center_frequencies(spec)
    return np.ceil(spec.q_factor * spec.sample_rate / freqs).astype(int)


def cqt_kernel(spec, k):
    """Windowed complex exponential atom for bin k (Hann window)."""
    n_k = cqt_window_lengths(spec)[k]
    m = np.arange(n_k)
    return hann_window(n_k) * np.exp(-2j * np.pi * m * spec.q_factor / n_k)


def cqt_naive(clip, spec):
    """Direct per-bin summation of the CQT; the correctness oracle.

    For each hop-aligned frame (centered, reflection padded) and bin k:
    (1/N[k]) * sum_m x[m] W[k,m] exp(-i 2 pi m Q / N[k]), squared magnitude.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    lengths = cqt_window_lengths(spec)
    pad = int(lengths[0] // 2) + 1
    if pad >= len(x):
        raise ValueError("longest CQT atom exceeds the signal length")
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + len(x) // spec.hop
    out = np.zeros((spec.n_bins, n_frames))
    for k in range(spec.n_bins):
        n_k = lengths[k]
        g = cqt_kernel(spec, k)
        for t in range(n_frames):
            start = pad + t * spec.hop - n_k // 2
            seg = xp[start:start + n_k]
            out[k, t] = np.abs(np.dot(seg, g) / n_k) ** 2
    return _wrap(out, clip, spec)


def cqt(clip, spec):
    """CQT power representation via batched per-bin inner products.

    Numerically equivalent to `cqt_naive`: each bin gathers its frame
    segments into one matrix and evaluates all frames as two real
    matrix-vector products.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    lengths = cqt_window_lengths(spec)
    pad = int(lengths[0] // 2) + 1
    if pad >= len(x):
        raise ValueError("longest CQT atom exceeds the signal length")
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + len(x) // spec.hop
    frame_pos = pad + np.arange(n_frames) * spec.hop
    out = np.zeros((spec.n_bins, n_frames))
    for k in range(spec.n_bins):
        n_k = lengths[k]
        g = cqt_kernel(spec, k)
        segs = np.lib.stride_tricks.sliding_window_view(
            xp, n_k)[frame_pos - n_k // 2]
        re = segs @ g.real
        im = segs @ g.imag
        out[k] = (re * re + im * im) / float(n_k) ** 2
    return _wrap(out, clip, spec)


def _wrap(power, clip, spec):
    freqs = cqt_center_frequencies(spec)
    times = np.arange(power.shape[1]) * spec.hop / clip.sample_rate
    return TFRepresentation(power, freqs, times, "cqt")
