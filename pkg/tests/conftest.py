import numpy as np
import pytest

from tfrbench.audio_io import AudioClip, CANONICAL_RATE


SR = CANONICAL_RATE


def tone(freq, n=88200, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(n) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def chirp(f0, f1, n=88200, sr=SR, amp=0.5):
    t = np.arange(n) / sr
    dur = n / sr
    phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * dur))
    return amp * np.sin(phase)


def noise_burst(rng, n=88200, sr=SR, amp=0.3, start=0.5, stop=2.5):
    x = np.zeros(n)
    i0, i1 = int(start * sr), int(stop * sr)
    x[i0:i1] = amp * rng.standard_normal(i1 - i0)
    return x


def am_tone(carrier, mod, n=88200, sr=SR, amp=0.5):
    t = np.arange(n) / sr
    return amp * (0.5 + 0.5 * np.sin(2 * np.pi * mod * t)) * \
        np.sin(2 * np.pi * carrier * t)


def synth_clip(cls, rng, n=88200, sr=SR):
    """One clip of synthetic class 0..3 with mild within-class variation."""
    if cls == 0:
        return tone(rng.uniform(400, 900), n, sr)
    if cls == 1:
        return chirp(rng.uniform(200, 400), rng.uniform(4000, 7000), n, sr)
    if cls == 2:
        return noise_burst(rng, n, sr, start=rng.uniform(0.2, 0.8),
                           stop=rng.uniform(2.0, 3.5))
    return am_tone(rng.uniform(1500, 3000), rng.uniform(4, 12), n, sr)


def make_clip(samples, sr=SR):
    return AudioClip(np.asarray(samples, dtype=float), sr)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
