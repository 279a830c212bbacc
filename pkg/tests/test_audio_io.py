import numpy as np
import pytest

from tfrbench.audio_io import (AudioClip, AudioError, ManifestError,
                               CANONICAL_RATE, load_manifest, load_wav,
                               resample, save_wav, standardize)

from conftest import make_clip, tone


class TestLoadWav:
    def test_int16_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        payload = np.array([0, 16384, -16384], dtype="<i2").tobytes()
        _write_raw_wav(path, payload, bits=16, channels=1, rate=22050)
        clip = load_wav(str(path))
        assert np.allclose(clip.samples, [0.0, 0.5, -0.5])
        assert clip.sample_rate == 22050

    def test_stereo_channel_mean(self, tmp_path):
        path = tmp_path / "s.wav"
        frame = np.array([[0.2, 0.6]], dtype="<f4")
        _write_raw_wav(path, frame.tobytes(), bits=32, channels=2,
                       rate=44100, fmt=3)
        clip = load_wav(str(path))
        assert clip.samples.shape == (1,)
        assert clip.samples[0] == pytest.approx(0.4, abs=1e-7)

    def test_24bit_round_trip(self, tmp_path, rng):
        path = tmp_path / "rt.wav"
        x = rng.uniform(-0.9, 0.9, 1000)
        save_wav(make_clip(x), str(path), bits=24)
        back = load_wav(str(path))
        assert back.sample_rate == CANONICAL_RATE
        assert np.max(np.abs(back.samples - x)) < 1e-6

    def test_float32_round_trip(self, tmp_path, rng):
        path = tmp_path / "f.wav"
        x = rng.uniform(-1, 1, 500)
        save_wav(make_clip(x), str(path), fmt="float")
        back = load_wav(str(path))
        assert np.max(np.abs(back.samples - x)) < 1e-7

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(AudioError):
            load_wav(str(tmp_path / "missing.wav"))

    def test_not_a_wav(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"this is not audio data")
        with pytest.raises(AudioError):
            load_wav(str(path))

    def test_zero_length(self, tmp_path):
        path = tmp_path / "empty.wav"
        _write_raw_wav(path, b"", bits=16, channels=1, rate=22050)
        with pytest.raises(AudioError):
            load_wav(str(path))


class TestResample:
    def test_identity(self, rng):
        clip = make_clip(rng.standard_normal(1000), sr=22050)
        out = resample(clip, 22050)
        assert out.sample_rate == 22050
        assert np.array_equal(out.samples, clip.samples)

    def test_dc_preserved(self):
        clip = make_clip(np.ones(44100), sr=44100)
        out = resample(clip, 22050)
        assert len(out.samples) == 22050
        assert np.max(np.abs(out.samples - 1.0)) < 1e-3

    def test_sine_peak_preserved(self):
        fs, n = 44100, 44100
        clip = make_clip(np.sin(2 * np.pi * 1000 * np.arange(n) / fs), fs)
        out = resample(clip, 22050)

        def peak(x, sr):
            w = np.hanning(len(x))
            spec = np.abs(np.fft.rfft(x * w))
            k = int(spec.argmax())
            mag_db = 20 * np.log10(spec[k] * 2 / w.sum())
            return k * sr / len(x), mag_db

        fin, min_db = peak(clip.samples, fs)
        fout, mout_db = peak(out.samples, 22050)
        assert abs(fin - 1000) < 2 and abs(fout - 1000) < 2
        assert abs(mout_db - min_db) < 0.5

    def test_output_length_rounding(self, rng):
        clip = make_clip(rng.standard_normal(44100), 44100)
        out = resample(clip, 8000)
        assert len(out.samples) == round(44100 * 8000 / 44100)

    def test_low_frequency_energy_preserved(self):
        # energy of content below 0.45x the lower Nyquist within 1%
        fs = 44100
        clip = make_clip(tone(3000, n=fs, sr=fs, amp=1.0), fs)
        out = resample(clip, 22050)
        e_in = np.sum(clip.samples ** 2) / fs
        e_out = np.sum(out.samples ** 2) / 22050
        assert abs(e_out - e_in) / e_in < 0.01

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            resample(make_clip(np.zeros(10)), 0)


class TestStandardize:
    def test_truncates_tail(self, rng):
        x = rng.standard_normal(110250)
        out = standardize(make_clip(x))
        assert len(out.samples) == 88200
        assert np.array_equal(out.samples, x[:88200])

    def test_pads_tail_with_zeros(self, rng):
        x = rng.standard_normal(44100)
        out = standardize(make_clip(x))
        assert len(out.samples) == 88200
        assert np.array_equal(out.samples[:44100], x)
        assert np.all(out.samples[44100:] == 0)

    def test_exact_length_unchanged(self, rng):
        x = rng.standard_normal(88200)
        out = standardize(make_clip(x))
        assert np.array_equal(out.samples, x)

    def test_idempotent(self, rng):
        clip = make_clip(rng.standard_normal(50000))
        once = standardize(clip)
        twice = standardize(once)
        assert np.array_equal(once.samples, twice.samples)


class TestManifest:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,fold\na.wav,0,1\nb.wav,1,2\nc.wav,2,3\n")
        m = load_manifest(str(p))
        assert len(m.entries) == 3
        assert m.entries[1].label == 1
        assert m.entries[2].fold == 3

    def test_fold_out_of_range(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,fold\na.wav,0,0\n")
        with pytest.raises(ManifestError):
            load_manifest(str(p), n_folds=5)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label\na.wav,0\n")
        with pytest.raises(ManifestError):
            load_manifest(str(p))

    def test_non_integer_label(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,fold\na.wav,x,1\n")
        with pytest.raises(ManifestError):
            load_manifest(str(p))

    def test_duplicate_path(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,fold\na.wav,0,1\na.wav,1,2\n")
        with pytest.raises(ManifestError):
            load_manifest(str(p))

    def test_crlf_accepted(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_bytes(b"path,label,fold\r\na.wav,0,1\r\nb.wav,1,2\r\n")
        m = load_manifest(str(p))
        assert len(m.entries) == 2

    def test_esc50_style_fold_counts(self, tmp_path):
        # 2000 clips split equally over 50 classes and 5 folds
        rows = ["path,label,fold"]
        i = 0
        for fold in range(1, 6):
            for label in range(50):
                for _ in range(8):
                    rows.append(f"clip{i}.wav,{label},{fold}")
                    i += 1
        p = tmp_path / "esc.csv"
        p.write_text("\n".join(rows) + "\n")
        m = load_manifest(str(p), n_folds=5, n_classes=50)
        assert m.per_fold_counts() == {f: 400 for f in range(1, 6)}


class TestClipInvariants:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]), 22050)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(4), 0)


def _write_raw_wav(path, payload, bits, channels, rate, fmt=1):
    import struct
    byte_rate = rate * channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE", b"fmt ", 16,
        fmt, channels, rate, byte_rate, channels * bits // 8, bits,
        b"data", len(payload))
    path.write_bytes(header + payload)
