"""Audio loading, resampling and standardization.

Every clip entering the feature pipeline is first brought to the canonical
form: mono, 22050 Hz, exactly 4 seconds (88200 samples).
"""

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import firwin, resample_poly

CANONICAL_RATE = 22050
CANONICAL_DURATION = 4.0

# Kaiser-windowed sinc anti-aliasing filter: 64 zero crossings per lobe side.
_KAISER_BETA = 14.77
_SINC_ZEROS = 64


class AudioError(Exception):
    """Raised for unreadable or unsupported audio files."""


class ManifestError(Exception):
    """Raised for malformed dataset manifests."""


@dataclass
class AudioClip:
    """Mono audio signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class ManifestEntry:
    path: str
    label: int
    fold: int


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)

    @property
    def folds(self):
        return sorted({e.fold for e in self.entries})

    @property
    def n_classes(self):
        return max(e.label for e in self.entries) + 1 if self.entries else 0

    def per_fold_counts(self):
        counts = {}
        for e in self.entries:
            counts[e.fold] = counts.get(e.fold, 0) + 1
        return counts


def _parse_wav_chunks(data):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    frames = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            frames = body
        pos += 8 + size + (size & 1)
    if fmt is None or frames is None:
        raise AudioError("missing fmt or data chunk")
    return fmt, frames


def load_wav(path):
    """Load a PCM WAV file as a mono AudioClip with samples in [-1, 1].

    Supports 8/16/24/32-bit integer and 32-bit float encodings, 1 or 2
    channels.  Stereo is collapsed by channel mean.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc

    fmt, frames = _parse_wav_chunks(data)
    if len(fmt) < 16:
        raise AudioError("truncated fmt chunk")
    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt, 0)
    if audio_format == 0xFFFE and len(fmt) >= 26:
        # WAVE_FORMAT_EXTENSIBLE: actual format is in the GUID prefix.
        audio_format = struct.unpack_from("<H", fmt, 24)[0]
    if n_channels not in (1, 2):
        raise AudioError(f"unsupported channel count {n_channels}")

    if audio_format == 1:  # integer PCM
        if bits == 8:
            x = np.frombuffer(frames, dtype=np.uint8).astype(np.float64)
            x = (x - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            raw = np.frombuffer(frames, dtype=np.uint8)
            raw = raw[:len(raw) - len(raw) % 3].reshape(-1, 3).astype(np.int64)
            x = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
            x = np.where(x >= 1 << 23, x - (1 << 24), x).astype(np.float64)
            x /= float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(frames, dtype="<i4").astype(np.float64)
            x /= float(1 << 31)
        else:
            raise AudioError(f"unsupported PCM bit depth {bits}")
    elif audio_format == 3 and bits == 32:  # IEEE float
        x = np.frombuffer(frames, dtype="<f4").astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV format tag {audio_format} "
                         f"({bits}-bit)")

    if n_channels == 2:
        x = x[:len(x) - len(x) % 2].reshape(-1, 2).mean(axis=1)
    if len(x) == 0:
        raise AudioError(f"{path}: zero-length audio")
    return AudioClip(x, sample_rate)


def save_wav(clip, path, bits=16, fmt="pcm"):
    """Write a mono AudioClip as a WAV file (testing and tooling aid)."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if fmt == "float":
        payload = x.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    elif bits == 16:
        payload = np.round(x * 32767.0).astype("<i2").tobytes()
        audio_format = 1
    elif bits == 24:
        q = np.round(x * ((1 << 23) - 1)).astype(np.int64)
        q = np.where(q < 0, q + (1 << 24), q)
        b = np.zeros((len(q), 3), dtype=np.uint8)
        b[:, 0] = q & 0xFF
        b[:, 1] = (q >> 8) & 0xFF
        b[:, 2] = (q >> 16) & 0xFF
        payload = b.tobytes()
        audio_format = 1
    elif bits == 32:
        q = np.round(x * ((1 << 31) - 1)).astype("<i4")
        payload = q.tobytes()
        audio_format = 1
    else:
        raise ValueError(f"unsupported bit depth {bits}")

    byte_rate = clip.sample_rate * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE", b"fmt ", 16,
        audio_format, 1, clip.sample_rate, byte_rate, bits // 8, bits,
        b"data", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def resample(clip, target_rate):
    """Band-limited resampling with a Kaiser-windowed sinc filter.

    Zero-phase polyphase implementation; output length is
    round(len * target / source).  target == source is the exact identity.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip

    g = math.gcd(int(clip.sample_rate), int(target_rate))
    up = int(target_rate) // g
    down = int(clip.sample_rate) // g
    x = clip.samples
    n = len(x)

    # Cutoff at the lower of the two Nyquist frequencies (normalized so
    # that 1.0 is the Nyquist of the upsampled stream).
    cutoff = 1.0 / max(up, down)
    half_len = _SINC_ZEROS * max(up, down)
    # resample_poly scales an array window by `up` itself.
    h = firwin(2 * half_len + 1, cutoff, window=("kaiser", _KAISER_BETA))

    # Reflection padding so filter edge effects never touch the payload.
    half_in = -(-half_len // up) + 1
    pad = down * (-(-half_in // down))
    if pad >= n:
        pad = n - 1  # short clip: best effort
    xp = np.pad(x, pad, mode="reflect")
    y = resample_poly(xp, up, down, window=h)
    offset = pad * up // down
    out_len = int(round(n * up / down))
    y = y[offset:offset + out_len]
    if len(y) < out_len:
        y = np.pad(y, (0, out_len - len(y)))
    return AudioClip(y, int(target_rate))


def standardize(clip, duration=CANONICAL_DURATION):
    """Force a clip at the canonical rate to an exact duration.

    Longer clips are truncated from the tail; shorter clips are
    zero-padded at the tail.  Idempotent.
    """
    target = int(round(duration * clip.sample_rate))
    x = clip.samples
    if len(x) > target:
        x = x[:target]
    elif len(x) < target:
        x = np.pad(x, (0, target - len(x)))
    return AudioClip(x, clip.sample_rate)


def load_manifest(path, n_folds=None, n_classes=None):
    """Parse and validate a `path,label,fold` CSV manifest."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError("empty manifest")
        missing = {"path", "label", "fold"} - set(reader.fieldnames)
        if missing:
            raise ManifestError(f"missing columns: {sorted(missing)}")
        entries = []
        seen = set()
        for i, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
                fold = int(row["fold"])
            except (TypeError, ValueError) as exc:
                raise ManifestError(
                    f"line {i}: non-integer label/fold") from exc
            p = row["path"]
            if not p:
                raise ManifestError(f"line {i}: empty path")
            if p in seen:
                raise ManifestError(f"line {i}: duplicate path {p!r}")
            seen.add(p)
            if label < 0 or (n_classes is not None and label >= n_classes):
                raise ManifestError(f"line {i}: label {label} out of range")
            if fold < 1 or (n_folds is not None and fold > n_folds):
                raise ManifestError(f"line {i}: fold {fold} out of range")
            entries.append(ManifestEntry(p, label, fold))
    return DatasetManifest(entries)
