import math

import numpy as np
import pytest

from sembed import dsp
from oracles import dft_naive


def sine(freq_hz, seconds=1.0, amplitude=0.5):
    t = np.arange(int(dsp.SAMPLE_RATE * seconds)) / dsp.SAMPLE_RATE
    return dsp.AudioBuffer(samples=amplitude * np.sin(2 * np.pi * freq_hz * t))


class TestMelScale:
    def test_zero(self):
        assert dsp.hz_to_mel(0.0) == 0.0

    def test_700hz(self):
        assert dsp.hz_to_mel(700.0) == pytest.approx(1127.0 * math.log(2.0), rel=1e-12)

    def test_monotone(self):
        f = np.linspace(0, 8000, 200)
        m = dsp.hz_to_mel(f)
        assert (np.diff(m) > 0).all()

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            dsp.hz_to_mel(-1.0)

    def test_roundtrip(self):
        f = np.array([0.0, 123.4, 700.0, 7999.0])
        np.testing.assert_allclose(dsp.mel_to_hz(dsp.hz_to_mel(f)), f, rtol=1e-12, atol=1e-9)


class TestFft:
    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64, 128, 256, 512])
    def test_matches_naive_dft(self, n):
        rng = np.random.default_rng(n)
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        np.testing.assert_allclose(dsp.fft(x), dft_naive(x), atol=1e-9)

    def test_impulse_is_flat(self):
        x = np.zeros(64)
        x[0] = 1.0
        np.testing.assert_allclose(dsp.fft(x), np.ones(64, dtype=complex), atol=1e-12)

    def test_batched_equals_rowwise(self):
        rng = np.random.default_rng(9)
        batch = rng.normal(size=(5, 128))
        out = dsp.fft(batch)
        for i in range(5):
            np.testing.assert_allclose(out[i], dsp.fft(batch[i]), atol=1e-12)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            dsp.fft(np.zeros(12))


class TestMelFilterbank:
    def test_shape(self):
        fb = dsp.mel_filterbank()
        assert fb.shape == (80, 257)

    def test_every_filter_has_positive_weight(self):
        fb = dsp.mel_filterbank()
        assert (fb.max(axis=1) > 0).all()

    def test_weights_nonnegative(self):
        assert (dsp.mel_filterbank() >= 0).all()

    def test_centers_strictly_increasing(self):
        centers = dsp.filter_center_frequencies(dsp.mel_filterbank())
        assert (np.diff(centers) > 0).all()

    def test_peak_is_one_and_adjacent_filters_sum_to_one_at_centers(self):
        fb = dsp.mel_filterbank()
        peaks = fb.max(axis=1)
        np.testing.assert_allclose(peaks, 1.0, rtol=1e-12)
        center_bins = fb.argmax(axis=1)
        col_sums = fb.sum(axis=0)[center_bins]
        np.testing.assert_allclose(col_sums, 1.0, rtol=1e-12)

    def test_interior_bins_between_centers_partition_unity(self):
        fb = dsp.mel_filterbank()
        center_bins = fb.argmax(axis=1)
        interior = np.arange(center_bins[0], center_bins[-1] + 1)
        np.testing.assert_allclose(fb.sum(axis=0)[interior], 1.0, rtol=1e-12)


class TestLogMel:
    def test_silence_hits_log_floor(self):
        mel = dsp.log_mel(dsp.AudioBuffer(samples=np.zeros(dsp.SAMPLE_RATE)))
        np.testing.assert_allclose(mel.frames, math.log(1e-10), rtol=1e-12)

    def test_frame_count_formula(self):
        mel = dsp.log_mel(dsp.AudioBuffer(samples=np.zeros(16000)))
        assert mel.num_frames == 98

    def test_1khz_sine_peaks_at_nearest_filter(self):
        mel = dsp.log_mel(sine(1000.0))
        centers = dsp.filter_center_frequencies(dsp.mel_filterbank())
        expected_bin = int(np.argmin(np.abs(centers - 1000.0)))
        assert (mel.frames.argmax(axis=1) == expected_bin).all()

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            dsp.log_mel(dsp.AudioBuffer(samples=np.zeros(399)))

    def test_energy_scales_quadratically(self):
        rng = np.random.default_rng(10)
        base = 0.2 * rng.normal(size=8000)
        base = np.clip(base, -0.45, 0.45)
        m1 = dsp.log_mel(dsp.AudioBuffer(samples=base))
        m2 = dsp.log_mel(dsp.AudioBuffer(samples=2.0 * base))
        # pre-log energies scale by c^2, so log energies shift by log(4)
        np.testing.assert_allclose(m2.frames - m1.frames, math.log(4.0), rtol=1e-9)

    def test_appending_tail_changes_frame_count_by_at_most_one(self):
        rng = np.random.default_rng(11)
        base = 0.3 * np.sin(np.linspace(0, 50, 5000))
        n0 = dsp.log_mel(dsp.AudioBuffer(samples=base)).num_frames
        for extra in [1, 80, 159]:
            ext = np.concatenate([base, 0.1 * rng.normal(size=extra).clip(-1, 1)])
            n1 = dsp.log_mel(dsp.AudioBuffer(samples=ext)).num_frames
            assert abs(n1 - n0) <= 1


class TestAudioBufferValidation:
    def test_wrong_rate_rejected(self):
        with pytest.raises(ValueError, match="sample rate"):
            dsp.AudioBuffer(samples=np.zeros(100), sample_rate_hz=8000)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="exceed"):
            dsp.AudioBuffer(samples=np.array([0.0, 1.5]))

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            dsp.AudioBuffer(samples=np.array([0.0, np.nan]))


class TestWavIo:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(12)
        samples = np.clip(0.8 * rng.normal(size=3200), -1, 1)
        buf = dsp.AudioBuffer(samples=samples)
        path = tmp_path / "x.wav"
        dsp.write_wav(path, buf)
        back = dsp.read_wav(path)
        assert back.sample_rate_hz == 16000
        np.testing.assert_allclose(back.samples, samples, atol=1.0 / 32767.0)

    def test_rejects_stereo(self, tmp_path):
        import wave
        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(16000)
            wf.writeframes(b"\x00\x00\x00\x00" * 10)
        with pytest.raises(ValueError, match="mono"):
            dsp.read_wav(path)

    def test_rejects_wrong_rate(self, tmp_path):
        import wave
        path = tmp_path / "slow.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(8000)
            wf.writeframes(b"\x00\x00" * 10)
        with pytest.raises(ValueError, match="8000"):
            dsp.read_wav(path)


class TestFeatureNorm:
    def test_fit_apply_standardizes(self):
        rng = np.random.default_rng(13)
        mels = [dsp.MelSpectrogram(frames=rng.normal(loc=3.0, scale=2.0, size=(50, 80)))
                for _ in range(4)]
        norm = dsp.FeatureNorm.fit(mels)
        out = np.concatenate([norm.apply(m).frames for m in mels])
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-9)

    def test_dict_roundtrip(self):
        norm = dsp.FeatureNorm(mean=np.arange(80.0), std=np.ones(80))
        back = dsp.FeatureNorm.from_dict(norm.to_dict())
        np.testing.assert_array_equal(back.mean, norm.mean)
        np.testing.assert_array_equal(back.std, norm.std)
