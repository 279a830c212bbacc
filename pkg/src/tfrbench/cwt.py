"""Continuous wavelet transform with a real Morlet mother function."""

from dataclasses import dataclass, field

import numpy as np

from .stft import TFRepresentation

# Real Morlet, omega0 = 5; pseudo-frequency 5 / (2 pi) cycles per unit.
MORLET_OMEGA0 = 5.0
MORLET_CENTER_FREQ = MORLET_OMEGA0 / (2.0 * np.pi)
# Gaussian envelope truncation: exp(-18) ~ 1.5e-8, below the 1e-5 oracle
# tolerance.
_SUPPORT_RADIUS = 6.0

DEFAULT_N_SCALES = 256
DEFAULT_F_LO = 20.0
DEFAULT_TIME_DOWNSAMPLE = 256


def morlet(t):
    """Real Morlet wavelet: cos(5 t) exp(-t^2 / 2)."""
    t = np.asarray(t, dtype=np.float64)
    return np.cos(MORLET_OMEGA0 * t) * np.exp(-0.5 * t * t)


def log_scales(n_scales, sample_rate, f_lo, f_hi):
    """Logarithmically spaced scales covering [f_lo, f_hi] pseudo-Hz.

    Returned in increasing order (decreasing pseudo-frequency).
    """
    if not 0 < f_lo < f_hi <= sample_rate / 2.0:
        raise ValueError("need 0 < f_lo < f_hi <= Nyquist")
    a_min = MORLET_CENTER_FREQ * sample_rate / f_hi
    a_max = MORLET_CENTER_FREQ * sample_rate / f_lo
    return np.geomspace(a_min, a_max, n_scales)


@dataclass
class CwtSpec:
    sample_rate: int = 22050
    n_scales: int = DEFAULT_N_SCALES
    time_downsample: int = DEFAULT_TIME_DOWNSAMPLE
    f_lo: float = DEFAULT_F_LO
    f_hi: float = None
    scales: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.f_hi is None:
            self.f_hi = self.sample_rate / 2.0
        if self.scales is None:
            self.scales = log_scales(self.n_scales, self.sample_rate,
                                     self.f_lo, self.f_hi)
        else:
            self.scales = np.asarray(self.scales, dtype=np.float64)
            self.n_scales = len(self.scales)
        if np.any(self.scales <= 0) or np.any(np.diff(self.scales) <= 0):
            raise ValueError("scales must be positive, strictly increasing")
        if self.time_downsample < 1:
            raise ValueError("time_downsample must be >= 1")

    @property
    def pseudo_frequencies(self):
        """Hz per scale, f_c * fs / a; decreasing along the scale axis."""
        return MORLET_CENTER_FREQ * self.sample_rate / self.scales


def default_spec(sample_rate=22050):
    return CwtSpec(sample_rate=sample_rate)


def _kernel(scale):
    half = int(np.ceil(_SUPPORT_RADIUS * scale))
    t = np.arange(-half, half + 1) / scale
    return morlet(t)


def cwt_naive(clip, spec):
    """Direct time-domain inner products; the correctness oracle.

    F(a, b) = (1 / sqrt(a)) * sum_m x[m] psi((m - b) / a), squared, at
    translations b = 0, td, 2 td, ...  Zero-padded boundaries.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    n = len(x)
    positions = np.arange(0, n, spec.time_downsample)
    out = np.zeros((spec.n_scales, len(positions)))
    for i, a in enumerate(spec.scales):
        ker = _kernel(a)
        half = (len(ker) - 1) // 2
        if len(ker) > n:
            raise ValueError(
                f"scale {a:.1f}: wavelet support {len(ker)} exceeds signal "
                f"length {n}")
        for j, b in enumerate(positions):
            lo = max(0, b - half)
            hi = min(n, b + half + 1)
            seg = x[lo:hi]
            kseg = ker[lo - (b - half):hi - (b - half)]
            out[i, j] = (seg @ kseg / np.sqrt(a)) ** 2
    return _wrap(out, positions, spec)


def cwt(clip, spec):
    """Scalogram via FFT convolution, one shared signal transform.

    Matches `cwt_naive` up to floating-point error; rows are ordered by
    increasing pseudo-frequency to keep the axis convention shared with
    the other representations.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    n = len(x)
    max_half = int(np.ceil(_SUPPORT_RADIUS * spec.scales[-1]))
    if 2 * max_half + 1 > n:
        raise ValueError(
            f"largest scale {spec.scales[-1]:.1f}: wavelet support "
            f"{2 * max_half + 1} exceeds signal length {n}")
    nfft = 1 << int(np.ceil(np.log2(n + 2 * max_half + 1)))
    xf = np.fft.rfft(x, nfft)
    positions = np.arange(0, n, spec.time_downsample)
    out = np.zeros((spec.n_scales, len(positions)))
    for i, a in enumerate(spec.scales):
        ker = _kernel(a)
        half = (len(ker) - 1) // 2
        conv = np.fft.irfft(xf * np.fft.rfft(ker, nfft), nfft)
        # conv[b + half] = sum_m x[m] ker[b + half - m]; the kernel is
        # even, so this equals the correlation required.
        out[i] = (conv[positions + half] / np.sqrt(a)) ** 2
    return _wrap(out, positions, spec)


def _wrap(power, positions, spec):
    # Flip so bin_frequencies increase with the row index.
    freqs = spec.pseudo_frequencies
    return TFRepresentation(power[::-1], freqs[::-1],
                            positions / spec.sample_rate, "cwt")
