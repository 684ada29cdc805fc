import os

import numpy as np
import soundfile
from parameterized import parameterized

from mvsd.constants import FFT_SIZE, HOP_SIZE, MAG_FLOOR, N_MELS, SAMPLE_RATE, SPEC_WIDTH
from mvsd.libraries.acoustics import stft_distance
from mvsd.libraries.scenes import synth_speechlike
from mvsd.libraries.spectral import (
    MagSpec,
    MelSpec,
    SpectralError,
    analysis_window_length,
    denormalize,
    fit_width,
    griffin_lim_with_history,
    log_normalize,
    make_waveform,
    mel_filterbank,
    mel_invert,
    mel_project,
    read_wav,
    stft,
    vocode,
    waveform_to_melspec,
    write_wav,
)
from mvsd.tests.libraries.client import MvsdTestClient


def sinusoid(bin_index, amplitude=1.0, frames=8):
    n = FFT_SIZE + (frames - 1) * HOP_SIZE
    t = np.arange(n)
    return make_waveform(amplitude * np.sin(2 * np.pi * bin_index * t / FFT_SIZE))


class StftTests(MvsdTestClient):
    @parameterized.expand([[FFT_SIZE, 1], [FFT_SIZE + HOP_SIZE, 2], [FFT_SIZE + 3 * HOP_SIZE + 10, 4]])
    def test_frame_count(self, samples, frames):
        spec = stft(make_waveform(np.zeros(samples)))
        self.assertEqual(spec.grid.shape, (frames, FFT_SIZE // 2 + 1))

    def test_insufficient_samples(self):
        with self.assertRaises(SpectralError) as context:
            stft(make_waveform(np.zeros(FFT_SIZE - 1)))
        self.assertIn("insufficient samples", str(context.exception))

    def test_fft_size_must_be_power_of_two(self):
        with self.assertRaises(SpectralError):
            stft(make_waveform(np.zeros(2000)), fft_size=1000)

    def test_non_finite_samples_are_rejected(self):
        with self.assertRaises(SpectralError):
            make_waveform(np.array([0.0, np.nan, 0.0]))

    def test_sinusoid_peaks_at_half_its_amplitude(self):
        spec = stft(sinusoid(64))
        np.testing.assert_allclose(spec.grid[:, 64], 0.5, atol=1e-9)

    def test_hann_leakage_stays_in_neighbouring_bins(self):
        spec = stft(sinusoid(64))
        far = [j for j in range(spec.grid.shape[1]) if abs(j - 64) >= 2]
        self.assertLess(float(np.max(spec.grid[:, far])), 1e-9)

    def test_linear_in_amplitude(self):
        np.testing.assert_allclose(stft(sinusoid(40, 0.3)).grid, 0.3 * stft(sinusoid(40)).grid, atol=1e-12)

    def test_silence_gives_zeros(self):
        self.assertEqual(float(np.max(stft(make_waveform(np.zeros(4096))).grid)), 0.0)


class MelTests(MvsdTestClient):
    @parameterized.expand([[40], [N_MELS]])
    def test_filter_rows_sum_to_one(self, n_mels):
        fb = mel_filterbank(n_mels=n_mels)
        self.assertEqual(fb.shape, (n_mels, FFT_SIZE // 2 + 1))
        np.testing.assert_allclose(fb.sum(axis=1), 1.0, atol=1e-12)
        self.assertTrue(np.all(fb >= 0))

    @parameterized.expand([[0], [FFT_SIZE]])
    def test_invalid_mel_count(self, n_mels):
        with self.assertRaises(SpectralError):
            mel_filterbank(n_mels=n_mels)

    def test_constant_spectrum_projects_to_the_constant(self):
        spec = MagSpec(np.full((3, FFT_SIZE // 2 + 1), 0.25), FFT_SIZE, HOP_SIZE, SAMPLE_RATE)
        np.testing.assert_allclose(mel_project(spec), 0.25, atol=1e-12)

    @parameterized.expand([[1.0, 1.0], [0.01, 0.0], [1e-4, -1.0], [1e-6, -1.0], [5.0, 1.0]])
    def test_log_normalize(self, magnitude, expected):
        grid = log_normalize(np.full((2, 2), magnitude)).grid
        np.testing.assert_allclose(grid, expected, atol=1e-12)

    def test_normalized_values_stay_in_range(self):
        grid = log_normalize(self.rng.random((N_MELS, 16)) * 3.0).grid
        self.assertGreaterEqual(float(grid.min()), -1.0)
        self.assertLessEqual(float(grid.max()), 1.0)

    def test_denormalize_inverts_log_normalize_above_the_floor(self):
        magnitudes = np.geomspace(1e-4, 1.0, 20)[None, :]
        np.testing.assert_allclose(denormalize(log_normalize(magnitudes)), magnitudes, rtol=1e-9)

    def test_floor_decodes_to_the_floor_magnitude(self):
        grid = denormalize(MelSpec(np.full((2, 2), -1.0), SAMPLE_RATE))
        np.testing.assert_allclose(grid, MAG_FLOOR, rtol=1e-9)

    @parameterized.expand([[5], [50], [300]])
    def test_single_bin_reaches_at_most_two_filters(self, bin_index):
        grid = np.zeros((1, FFT_SIZE // 2 + 1))
        grid[0, bin_index] = 1.0
        projected = mel_project(MagSpec(grid, FFT_SIZE, HOP_SIZE, SAMPLE_RATE))
        self.assertLessEqual(int(np.count_nonzero(projected)), 2)
        self.assertGreater(int(np.count_nonzero(projected)), 0)

    def test_fit_width_pads_with_silence(self):
        mel = fit_width(MelSpec(np.zeros((N_MELS, 100)), SAMPLE_RATE))
        self.assertEqual(mel.grid.shape, (N_MELS, SPEC_WIDTH))
        self.assertTrue(np.all(mel.grid[:, 100:] == -1.0))
        self.assertTrue(np.all(mel.grid[:, :100] == 0.0))

    def test_fit_width_truncates(self):
        mel = fit_width(MelSpec(np.zeros((N_MELS, 200)), SAMPLE_RATE))
        self.assertEqual(mel.grid.shape, (N_MELS, SPEC_WIDTH))

    def test_fit_width_rejects_empty_grids(self):
        with self.assertRaises(SpectralError):
            fit_width(MelSpec(np.zeros((N_MELS, 0)), SAMPLE_RATE))

    def test_waveform_to_melspec_shape(self):
        mel = waveform_to_melspec(synth_speechlike(3))
        self.assertEqual(mel.grid.shape, (N_MELS, SPEC_WIDTH))

    def test_analysis_window_length(self):
        self.assertEqual(analysis_window_length(), (SPEC_WIDTH - 1) * HOP_SIZE + FFT_SIZE)


class VocoderTests(MvsdTestClient):
    def test_mel_invert_shape(self):
        mel = waveform_to_melspec(synth_speechlike(5))
        self.assertEqual(mel_invert(mel).grid.shape, (SPEC_WIDTH, FFT_SIZE // 2 + 1))

    def test_mel_invert_keeps_a_flat_spectrum_flat(self):
        flat = MagSpec(np.full((SPEC_WIDTH, FFT_SIZE // 2 + 1), 0.1), FFT_SIZE, HOP_SIZE, SAMPLE_RATE)
        inverted = mel_invert(log_normalize(mel_project(flat))).grid
        covered = mel_filterbank().sum(axis=0) > 0
        np.testing.assert_allclose(inverted[:, covered], 0.1, rtol=0.1)

    def test_mel_invert_of_the_floor_is_the_floor(self):
        inverted = mel_invert(MelSpec(np.full((N_MELS, SPEC_WIDTH), -1.0), SAMPLE_RATE)).grid
        np.testing.assert_allclose(inverted, MAG_FLOOR, rtol=0.1)

    @parameterized.expand([[0], [1], [2], [3], [4]])
    def test_mel_invert_keeps_the_energy(self, seed):
        clip = synth_speechlike(seed, duration=3.0)
        window = make_waveform(clip.samples[: analysis_window_length()])
        original = stft(window).grid
        inverted = mel_invert(waveform_to_melspec(window)).grid
        ratio_db = 10.0 * np.log10(np.sum(inverted**2) / np.sum(original**2))
        self.assertLess(abs(ratio_db), 3.0)

    def test_griffin_lim_error_never_increases(self):
        mel = waveform_to_melspec(synth_speechlike(6))
        _, errors = griffin_lim_with_history(mel_invert(mel), iterations=20, seed=0)
        self.assertEqual(len(errors), 20)
        for before, after in zip(errors, errors[1:]):
            self.assertLessEqual(after, before + 1e-7)

    def test_griffin_lim_of_silence(self):
        spec = MagSpec(np.zeros((4, FFT_SIZE // 2 + 1)), FFT_SIZE, HOP_SIZE, SAMPLE_RATE)
        waveform, errors = griffin_lim_with_history(spec, iterations=3)
        self.assertEqual(errors, [0.0, 0.0, 0.0])
        self.assertFalse(np.any(waveform.samples))

    def test_griffin_lim_needs_an_iteration(self):
        spec = MagSpec(np.ones((4, FFT_SIZE // 2 + 1)), FFT_SIZE, HOP_SIZE, SAMPLE_RATE)
        with self.assertRaises(SpectralError):
            griffin_lim_with_history(spec, iterations=0)

    def test_vocoder_floor(self):
        silent = make_waveform(np.zeros(analysis_window_length()))
        for seed in range(3):
            clip = synth_speechlike(seed)
            mel = waveform_to_melspec(clip)
            vocoded = vocode(mel, 60, seed)

            rebuilt = denormalize(waveform_to_melspec(vocoded)).ravel()
            original = denormalize(mel).ravel()
            self.assertGreater(float(np.corrcoef(rebuilt, original)[0, 1]), 0.95)

            window = make_waveform(clip.samples[: analysis_window_length()])
            self.assertLess(stft_distance(vocoded, window), 0.25 * stft_distance(silent, window))


class WavTests(MvsdTestClient):
    def test_write_then_read(self):
        path = os.path.join(self.make_tempdir(), "clip.wav")
        clip = synth_speechlike(2)
        write_wav(path, clip)
        loaded = read_wav(path)
        self.assertEqual(loaded.sample_rate, SAMPLE_RATE)
        np.testing.assert_allclose(loaded.samples, clip.samples, atol=1.0 / 32768 + 1e-9)

    def test_stereo_is_rejected(self):
        path = os.path.join(self.make_tempdir(), "stereo.wav")
        soundfile.write(path, np.zeros((1000, 2)), SAMPLE_RATE)
        with self.assertRaises(SpectralError):
            read_wav(path)
