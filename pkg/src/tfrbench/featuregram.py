"""Fixed-size normalized feature images for the CNN.

Pipeline: time-frequency transform -> dB scaling (except MFCC) ->
[-1, 1] normalization -> Lanczos-3 downscale -> clamp.
"""

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import cqt as cqt_mod
from . import cwt as cwt_mod
from . import mel_mfcc
from . import stft as stft_mod
from .stft import TFRepresentation

DB_FLOOR = -80.0

NARROWBAND_SHAPE = (37, 50)   # 1850 values
WIDEBAND_SHAPE = (154, 12)    # 1848 values

KINDS = ("linear-stft", "mel-stft", "cqt", "cwt", "mfcc")
BANDS = ("wideband", "narrowband")
NARROW_ONLY = ("cwt", "mfcc")

_KIND_TAGS = {k: i for i, k in enumerate(KINDS)}
_TAG_KINDS = {i: k for k, i in _KIND_TAGS.items()}

_TFR_MAGIC = b"TFR1"


class FeatureFileError(Exception):
    """Raised for corrupt or truncated feature files."""


@dataclass(frozen=True)
class TransformSpec:
    """Selects one of the five representations plus the band preset."""

    kind: str
    band: str = "narrowband"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        if self.kind in NARROW_ONLY and self.band != "narrowband":
            raise ValueError(f"{self.kind} supports only the narrowband "
                             "preset")

    @property
    def target_shape(self):
        return WIDEBAND_SHAPE if self.band == "wideband" else NARROWBAND_SHAPE

    @property
    def tag(self):
        return f"{self.kind}-{self.band}"


@dataclass
class FeatureImage:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("feature image must be 2-D")
        if np.any(self.values < -1.0) or np.any(self.values > 1.0):
            raise ValueError("feature values must lie in [-1, 1]")

    @property
    def shape(self):
        return self.values.shape


def power_to_db(tf):
    """10 log10(p / max), floored at -80 dB; the maximum maps to 0 dB."""
    if tf.kind == "mfcc":
        raise ValueError("MFCC cepstrograms are not dB-scaled")
    if tf.scale != "power":
        raise ValueError("input must be on the power scale")
    p = tf.values
    ref = p.max()
    if ref <= 0.0:
        db = np.full_like(p, DB_FLOOR)
    else:
        floor_p = ref * 10.0 ** (DB_FLOOR / 10.0)
        db = 10.0 * np.log10(np.maximum(p, floor_p) / ref)
    return TFRepresentation(db, tf.bin_frequencies, tf.frame_times,
                            tf.kind, scale="db")


def normalize(values):
    """Affine map sending min -> -1 and max -> +1; constant -> zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    return 2.0 * (values - lo) / (hi - lo) - 1.0


def _lanczos3(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 3.0, np.sinc(x) * np.sinc(x / 3.0), 0.0)


def _resize_axis(values, target, axis):
    src = values.shape[axis]
    if src == target:
        return values
    v = np.moveaxis(values, axis, 0)
    out = np.zeros((target,) + v.shape[1:])
    for i in range(target):
        x = (i + 0.5) * src / target - 0.5
        j0 = int(np.floor(x)) - 2
        taps = np.arange(j0, j0 + 6)
        w = _lanczos3(x - taps)
        keep = (taps >= 0) & (taps < src) & (w != 0.0)
        taps, w = taps[keep], w[keep]
        w = w / w.sum()
        out[i] = np.tensordot(w, v[taps], axes=1)
    return np.moveaxis(out, 0, axis)


def lanczos_resize(values, target_rows, target_cols):
    """Separable Lanczos-3 resampling, frequency axis then time axis.

    Kernel sinc(x) sinc(x/3) for |x| < 3; per-output-sample weights are
    renormalized to unit sum (borders truncate the kernel).
    """
    if target_rows < 1 or target_cols < 1:
        raise ValueError("target dims must be positive")
    values = np.asarray(values, dtype=np.float64)
    values = _resize_axis(values, target_rows, axis=0)
    return _resize_axis(values, target_cols, axis=1)


def compute_representation(clip, spec):
    """Raw time-frequency representation for a TransformSpec."""
    if spec.kind == "linear-stft":
        s = (stft_mod.wideband_spec() if spec.band == "wideband"
             else stft_mod.narrowband_spec())
        return stft_mod.linear_spectrogram(clip, s)
    if spec.kind == "mel-stft":
        if spec.band == "wideband":
            s = stft_mod.wideband_spec()
            n_mels = mel_mfcc.WIDEBAND_MELS
        else:
            s = stft_mod.narrowband_spec()
            n_mels = mel_mfcc.NARROWBAND_MELS
        fb = mel_mfcc.build_mel_filterbank(n_mels, s.n_bins, clip.sample_rate)
        return mel_mfcc.mel_spectrogram(
            stft_mod.linear_spectrogram(clip, s), fb)
    if spec.kind == "cqt":
        s = (cqt_mod.wideband_spec(clip.sample_rate)
             if spec.band == "wideband"
             else cqt_mod.narrowband_spec(clip.sample_rate))
        return cqt_mod.cqt(clip, s)
    if spec.kind == "cwt":
        return cwt_mod.cwt(clip, cwt_mod.default_spec(clip.sample_rate))
    if spec.kind == "mfcc":
        return mel_mfcc.mfcc(clip)
    raise ValueError(f"unknown kind {spec.kind!r}")


def extract_feature(clip, spec):
    """Full pipeline from a standardized clip to a FeatureImage."""
    tf = compute_representation(clip, spec)
    values = tf.values if spec.kind == "mfcc" else power_to_db(tf).values
    values = normalize(values)
    rows, cols = spec.target_shape
    values = lanczos_resize(values, rows, cols)
    values = np.clip(values, -1.0, 1.0)
    return FeatureImage(values, spec.kind)


def export_png(img, path):
    """8-bit grayscale PNG; row 0 rendered as the highest frequency."""
    v = np.clip(img.values, -1.0, 1.0)
    pixels = np.floor((v + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(pixels[::-1], mode="L").save(path, format="PNG")


def import_png(path):
    """Inverse of `export_png` up to 8-bit quantization."""
    pixels = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
    values = pixels[::-1] / 255.0 * 2.0 - 1.0
    return np.clip(values, -1.0, 1.0)


def save_feature(img, path):
    """Write the binary TFR1 feature file (little-endian)."""
    rows, cols = img.shape
    header = _TFR_MAGIC + struct.pack("<III", rows, cols,
                                      _KIND_TAGS[img.kind])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.values.astype("<f4").tobytes())


def load_feature(path):
    """Read a TFR1 feature file back into a FeatureImage."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != _TFR_MAGIC:
        raise FeatureFileError(f"{path}: bad magic")
    rows, cols, tag = struct.unpack_from("<III", data, 4)
    if tag not in _TAG_KINDS:
        raise FeatureFileError(f"{path}: unknown kind tag {tag}")
    expected = 16 + 4 * rows * cols
    if len(data) != expected:
        raise FeatureFileError(
            f"{path}: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64)
    return FeatureImage(values.reshape(rows, cols), _TAG_KINDS[tag])
