"""Unit tests for STFT, onset envelope, peak picking, and tempo estimation.

Expected values here are either hand-computed on tiny inputs or produced by
an independent direct-DFT oracle written before the library code.
"""

import numpy as np
import pytest

from mudar.audio_rhythm import (
    estimate_tempo,
    music_rhythm,
    onset_envelope,
    pick_peaks,
    stft,
)
from mudar.datatypes import AudioClip, OnsetEnvelope, Spectrogram
from mudar.errors import InputTooShortError, InvalidInputError


def direct_dft_magnitude(window_samples: np.ndarray) -> np.ndarray:
    """Naive O(N^2) DFT magnitude of one already-windowed frame."""
    n = window_samples.size
    k = np.arange(n // 2 + 1)
    q = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, q) / n)
    return np.abs(basis @ window_samples)


def sine_clip(freq_hz: float, rate: int = 16000, seconds: float = 1.0) -> AudioClip:
    t = np.arange(int(rate * seconds)) / rate
    return AudioClip(samples=0.5 * np.sin(2 * np.pi * freq_hz * t), rate=rate)


class TestStft:
    def test_shape_and_metadata(self):
        clip = sine_clip(1000.0)
        spec = stft(clip, window_size=2048, hop=512)
        assert isinstance(spec, Spectrogram)
        padded = clip.samples.size + 2 * (2048 // 2)
        assert spec.n_frames == 1 + (padded - 2048) // 512
        assert spec.n_bins == 1025
        assert spec.frame_rate == pytest.approx(31.25)
        assert spec.bin_hz == pytest.approx(16000 / 2048)

    def test_pure_sine_peaks_at_expected_bin(self):
        spec = stft(sine_clip(1000.0), window_size=2048, hop=512)
        expected_bin = round(1000.0 / spec.bin_hz)
        assert expected_bin == 128
        interior = spec.magnitudes[4:-4]
        assert np.all(np.argmax(interior, axis=1) == expected_bin)

    def test_matches_direct_dft_on_interior_frame(self):
        clip = sine_clip(1000.0)
        spec = stft(clip, window_size=2048, hop=512)
        # Frame n is centered on sample n*hop of the unpadded signal.
        n = 10
        start = n * 512 - 1024
        window = np.hamming(2048)
        oracle = direct_dft_magnitude(clip.samples[start : start + 2048] * window)
        np.testing.assert_allclose(spec.magnitudes[n], oracle, atol=1e-8)

    def test_impulse_energy_confined_to_covering_frames(self):
        samples = np.zeros(16000)
        samples[0] = 1.0
        spec = stft(AudioClip(samples=samples, rate=16000), window_size=2048, hop=512)
        frame_energy = spec.magnitudes.sum(axis=1)
        # Only frames whose centered window reaches sample 0 see the impulse.
        assert np.all(frame_energy[:3] > 0)
        assert np.all(frame_energy[3:] == 0)

    def test_rejects_short_input(self):
        with pytest.raises(InputTooShortError):
            stft(AudioClip(samples=np.zeros(100), rate=16000), window_size=2048, hop=512)

    def test_rejects_bad_hop(self):
        with pytest.raises(InvalidInputError):
            stft(sine_clip(440.0), window_size=2048, hop=0)


class TestOnsetEnvelope:
    def test_hand_computed_flux(self):
        mags = np.array(
            [
                [1.0, 0.0, 2.0, 1.0],
                [2.0, 1.0, 1.0, 3.0],
                [0.0, 5.0, 1.0, 2.0],
            ]
        )
        spec = Spectrogram(magnitudes=mags, rate=16000, hop=512, window_size=6)
        env = onset_envelope(spec, max_filter_bins=3, lag=1)
        # Width-3 max filter of row 0 is [1,2,2,2]; of row 1 is [2,2,3,3].
        np.testing.assert_allclose(env.values, [0.0, 2.0, 3.0])
        assert env.frame_rate == spec.frame_rate

    def test_max_filter_width_one_is_plain_flux(self):
        mags = np.array([[1.0, 4.0], [3.0, 2.0]])
        spec = Spectrogram(magnitudes=mags, rate=8, hop=4, window_size=2)
        env = onset_envelope(spec, max_filter_bins=1, lag=1)
        np.testing.assert_allclose(env.values, [0.0, 2.0])

    def test_lag_two_zeroes_first_two_frames(self):
        rng = np.random.default_rng(0)
        mags = rng.random((6, 5))
        spec = Spectrogram(magnitudes=mags, rate=80, hop=10, window_size=8)
        env = onset_envelope(spec, max_filter_bins=3, lag=2)
        assert env.values[0] == 0.0 and env.values[1] == 0.0
        assert np.all(env.values >= 0)

    def test_hop_periodic_tone_has_zero_interior_flux(self):
        # 1000 Hz advances exactly 32 cycles per 512-sample hop, so interior
        # windows repeat up to sin() rounding and the flux is at noise level.
        env = onset_envelope(stft(sine_clip(1000.0), window_size=2048, hop=512))
        assert env.values[4:-4].max() < 1e-9

    def test_steady_tone_yields_no_interior_peaks(self):
        # Boundary frames see the pad fold and may peak; the interior must not.
        env = onset_envelope(stft(sine_clip(440.0), window_size=2048, hop=512))
        peaks = pick_peaks(env)
        interior = peaks[(peaks >= 4) & (peaks <= env.n_frames - 5)]
        assert interior.size == 0

    def test_amplitude_scaling_equivariance(self):
        # Power-of-two scaling stays bit-exact through the whole chain.
        clip = sine_clip(313.0, seconds=0.5)
        env1 = onset_envelope(stft(clip))
        half = AudioClip(samples=0.5 * clip.samples, rate=clip.rate)
        env_half = onset_envelope(stft(half))
        np.testing.assert_array_equal(env_half.values * 2.0, env1.values)

    def test_time_shift_covariance(self):
        rng = np.random.default_rng(7)
        x = 0.9 * (rng.random(16000) * 2 - 1)
        hop, win = 512, 2048
        env = onset_envelope(stft(AudioClip(samples=x, rate=16000), window_size=win, hop=hop))
        shifted = np.concatenate([np.zeros(hop), x])
        env_s = onset_envelope(stft(AudioClip(samples=shifted, rate=16000), window_size=win, hop=hop))
        # Interior frames away from both signals' padded borders match exactly.
        lo = 1 + win // (2 * hop) + 1
        hi = env.n_frames - win // (2 * hop) - 1
        np.testing.assert_array_equal(env_s.values[lo + 1 : hi + 1], env.values[lo:hi])


class TestPickPeaks:
    ENV = np.array([0.0, 3.0, 1.0, 0.0, 4.0, 0.0, 0.0, 2.0, 0.0, 3.0])

    def test_hand_traced_peaks(self):
        peaks = pick_peaks(self.ENV, pre_max=1, post_max=1, pre_avg=3, post_avg=3, delta=0.5, wait=2)
        np.testing.assert_array_equal(peaks, [1, 4, 7, 9])

    def test_wait_drops_close_peak(self):
        peaks = pick_peaks(self.ENV, pre_max=1, post_max=1, pre_avg=3, post_avg=3, delta=0.5, wait=3)
        np.testing.assert_array_equal(peaks, [1, 4, 7])

    def test_default_delta_is_relative_to_max(self):
        env = np.zeros(50)
        env[[10, 30]] = 1.0
        env[20] = 0.05  # below 0.07 * max, must be rejected
        peaks = pick_peaks(env)
        np.testing.assert_array_equal(peaks, [10, 30])

    def test_constant_envelope_no_interior_peaks(self):
        peaks = pick_peaks(np.ones(20), delta=0.5)
        assert peaks.size == 0

    def test_accepts_envelope_object(self):
        env = OnsetEnvelope(values=self.ENV, frame_rate=8.0)
        np.testing.assert_array_equal(
            pick_peaks(env, delta=0.5), pick_peaks(self.ENV, delta=0.5)
        )

    def test_min_gap_invariant(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            env = rng.random(200)
            for wait in (1, 2, 5):
                peaks = pick_peaks(env, delta=0.0, wait=wait)
                if peaks.size > 1:
                    assert np.diff(peaks).min() >= wait


def impulse_train_envelope(bpm: float, frame_rate: float = 31.25, seconds: float = 8.0) -> OnsetEnvelope:
    n = int(round(frame_rate * seconds))
    values = np.zeros(n)
    period = frame_rate * 60.0 / bpm
    k = 0
    while True:
        idx = int(round((k + 0.5) * period))
        if idx >= n:
            break
        values[idx] = 1.0
        k += 1
    return OnsetEnvelope(values=values, frame_rate=frame_rate)


class TestEstimateTempo:
    @pytest.mark.parametrize("bpm", [60.0, 90.0, 120.0])
    def test_impulse_train_within_two_bpm(self, bpm):
        est = estimate_tempo(impulse_train_envelope(bpm))
        assert abs(est.bpm - bpm) <= 2.0
        assert 0.0 <= est.confidence <= 1.0

    def test_flat_envelope_reports_midpoint_with_zero_confidence(self):
        env = OnsetEnvelope(values=np.ones(250), frame_rate=31.25)
        est = estimate_tempo(env, bpm_range=(60.0, 240.0))
        assert est.bpm == pytest.approx(150.0)
        assert est.confidence == 0.0

    def test_zero_envelope_reports_midpoint_with_zero_confidence(self):
        env = OnsetEnvelope(values=np.zeros(250), frame_rate=31.25)
        est = estimate_tempo(env, bpm_range=(60.0, 240.0))
        assert est.bpm == pytest.approx(150.0)
        assert est.confidence == 0.0

    def test_too_short_envelope_rejected(self):
        env = OnsetEnvelope(values=np.ones(10), frame_rate=31.25)
        with pytest.raises(InputTooShortError):
            estimate_tempo(env)

    def test_result_within_requested_range(self):
        est = estimate_tempo(impulse_train_envelope(120.0), bpm_range=(100.0, 200.0))
        assert 100.0 <= est.bpm <= 200.0


class TestMusicRhythm:
    def test_metronome_keypoints_near_click_frames(self):
        rate, seconds, bpm = 16000, 8.0, 120.0
        t = np.arange(int(rate * seconds)) / rate
        samples = np.zeros(t.size)
        period = 60.0 / bpm
        k = 0
        while (k + 0.5) * period < seconds:
            center = int(round((k + 0.5) * period * rate))
            burst = np.sin(2 * np.pi * 2000.0 * np.arange(160) / rate) * np.hanning(160)
            end = min(center + 160, samples.size)
            samples[center:end] += burst[: end - center]
            k += 1
        clip = AudioClip(samples=0.9 * samples / np.abs(samples).max(), rate=rate)
        env, track, tempo = music_rhythm(clip)
        assert track.modality == "audio"
        assert track.fps == pytest.approx(31.25)
        assert env.n_frames == track.length_frames
        expected = [int(round((j + 0.5) * period * 31.25)) for j in range(16)]
        assert track.n_keypoints == len(expected)
        for got, want in zip(track.keypoints, expected):
            assert abs(got - want) <= 1
        assert abs(tempo.bpm - bpm) <= 2.0

    def test_silence_gives_empty_track_and_zero_confidence(self):
        clip = AudioClip(samples=np.zeros(16000 * 8), rate=16000)
        env, track, tempo = music_rhythm(clip)
        assert track.keypoints == ()
        assert np.all(env.values == 0.0)
        assert tempo.confidence == 0.0

    def test_deterministic_on_noise(self):
        rng = np.random.default_rng(7)
        samples = 0.5 * rng.standard_normal(16000 * 8).clip(-1.9, 1.9) / 2.0
        clip = AudioClip(samples=samples, rate=16000)
        _, track_a, _ = music_rhythm(clip)
        _, track_b, _ = music_rhythm(clip)
        assert track_a == track_b
