import logging
from collections import namedtuple
from functools import lru_cache

import librosa
import numpy as np
import soundfile

from mvsd.constants import (
    DB_FLOOR,
    FFT_SIZE,
    HOP_SIZE,
    MAG_FLOOR,
    MEL_INVERT_ITERATIONS,
    N_MELS,
    SAMPLE_RATE,
    SPEC_WIDTH,
    WAV_SUBTYPE,
)

logger = logging.getLogger(__name__)

Waveform = namedtuple("Waveform", "samples, sample_rate")

# grid is [frames x (fft_size / 2 + 1)]
MagSpec = namedtuple("MagSpec", "grid, fft_size, hop, sample_rate")

# grid is [n_mels x frames], values in [-1, 1]
MelSpec = namedtuple("MelSpec", "grid, sample_rate")


class SpectralError(ValueError):
    """Raised when a waveform or spectrogram can't be analysed as requested"""


def make_waveform(samples, sample_rate: int = SAMPLE_RATE) -> Waveform:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise SpectralError(f"expected mono samples, got shape {samples.shape}")
    if sample_rate <= 0:
        raise SpectralError(f"sample rate must be positive, got {sample_rate}")
    if not np.all(np.isfinite(samples)):
        raise SpectralError("waveform contains non-finite samples")
    return Waveform(samples, sample_rate)


def window_sum(fft_size: int = FFT_SIZE) -> float:
    return float(np.sum(librosa.filters.get_window("hann", fft_size)))


def stft(w: Waveform, fft_size: int = FFT_SIZE, hop: int = HOP_SIZE) -> MagSpec:
    """
    Hann-windowed magnitude STFT without centring, so a waveform of n samples gives
    floor((n - fft_size) / hop) + 1 frames. Magnitudes are divided by the window sum,
    which puts a full-scale sinusoid at 0.5 in its own bin.
    """
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise SpectralError(f"fft size must be a power of two, got {fft_size}")
    samples = np.asarray(w.samples, dtype=np.float64)
    if len(samples) < fft_size:
        raise SpectralError(f"insufficient samples: {len(samples)} < fft size {fft_size}")
    if not np.all(np.isfinite(samples)):
        raise SpectralError("waveform contains non-finite samples")

    spectrum = librosa.stft(samples, n_fft=fft_size, hop_length=hop, window="hann", center=False)
    grid = np.abs(spectrum).T / window_sum(fft_size)
    return MagSpec(grid, fft_size, hop, w.sample_rate)


@lru_cache(maxsize=8)
def _filterbank(sample_rate: int, fft_size: int, n_mels: int) -> np.ndarray:
    weights = librosa.filters.mel(
        sr=sample_rate, n_fft=fft_size, n_mels=n_mels, fmin=0.0, fmax=sample_rate / 2, norm=None, dtype=np.float64
    )
    sums = weights.sum(axis=1)
    if np.any(sums <= 0):
        raise SpectralError(f"{int(np.sum(sums <= 0))} of {n_mels} mel filters cover no fft bin")
    weights = weights / sums[:, None]
    weights.setflags(write=False)
    return weights


def mel_filterbank(sample_rate: int = SAMPLE_RATE, fft_size: int = FFT_SIZE, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular filters over [0, sample_rate / 2], each row summing to 1. Shape [n_mels x bins]."""
    if n_mels < 1 or n_mels > fft_size // 2 + 1:
        raise SpectralError(f"n_mels must be in [1, {fft_size // 2 + 1}], got {n_mels}")
    return _filterbank(sample_rate, fft_size, n_mels)


def mel_project(m: MagSpec, n_mels: int = N_MELS) -> np.ndarray:
    fb = mel_filterbank(m.sample_rate, m.fft_size, n_mels)
    return fb @ m.grid.T


def log_normalize(grid, sample_rate: int = SAMPLE_RATE) -> MelSpec:
    db = 20.0 * np.log10(np.maximum(np.asarray(grid, dtype=np.float64), MAG_FLOOR))
    db = np.clip(db, DB_FLOOR, 0.0)
    return MelSpec(db / (-DB_FLOOR / 2.0) + 1.0, sample_rate)


def denormalize(mel: MelSpec) -> np.ndarray:
    db = (np.clip(mel.grid, -1.0, 1.0) - 1.0) * (-DB_FLOOR / 2.0)
    return np.power(10.0, db / 20.0)


def fit_width(mel: MelSpec, width: int = SPEC_WIDTH) -> MelSpec:
    grid = np.asarray(mel.grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] < 1:
        raise SpectralError("cannot fit an empty spectrogram")
    if grid.shape[1] >= width:
        return MelSpec(grid[:, :width].copy(), mel.sample_rate)
    pad = np.full((grid.shape[0], width - grid.shape[1]), -1.0)
    return MelSpec(np.concatenate([grid, pad], axis=1), mel.sample_rate)


def waveform_to_melspec(w: Waveform, width: int = SPEC_WIDTH, n_mels: int = N_MELS) -> MelSpec:
    return fit_width(log_normalize(mel_project(stft(w), n_mels), w.sample_rate), width)


def analysis_window_length(width: int = SPEC_WIDTH, fft_size: int = FFT_SIZE, hop: int = HOP_SIZE) -> int:
    """Number of samples covered by a `width`-frame spectrogram."""
    return (width - 1) * hop + fft_size


def mel_invert(mel: MelSpec, fft_size: int = FFT_SIZE, hop: int = HOP_SIZE) -> MagSpec:
    """
    Pseudo-inverse of the mel projection: each linear bin starts at the weight-averaged value of the
    filters covering it, then multiplicative updates pull fb @ S towards the mel grid.
    """
    target = denormalize(mel)
    fb = mel_filterbank(mel.sample_rate, fft_size, target.shape[0])
    coverage = fb.sum(axis=0)
    covered = coverage > 0

    projected = fb.T @ target
    estimate = np.full_like(projected, MAG_FLOOR)
    estimate[covered] = projected[covered] / coverage[covered, None]

    eps = 1e-12
    for _ in range(MEL_INVERT_ITERATIONS):
        ratio = projected / (fb.T @ (fb @ estimate) + eps)
        estimate[covered] *= ratio[covered]

    return MagSpec(np.maximum(estimate, 0.0).T, fft_size, hop, mel.sample_rate)


def griffin_lim_with_history(m: MagSpec, iterations: int, seed: int = 0):
    """
    Returns the reconstructed waveform and the spectral-convergence error after every iteration,
    || |STFT(y_k)| - target || / || target ||. Alternating projections make this sequence non-increasing.
    """
    if iterations < 1:
        raise SpectralError(f"iterations must be >= 1, got {iterations}")

    target = np.asarray(m.grid, dtype=np.float64).T * window_sum(m.fft_size)
    length = (target.shape[1] - 1) * m.hop + m.fft_size
    norm = float(np.linalg.norm(target))
    if norm == 0.0:
        return Waveform(np.zeros(length), m.sample_rate), [0.0] * iterations

    rng = np.random.default_rng(seed)
    angles = np.exp(2j * np.pi * rng.random(target.shape))
    errors = []
    samples = None
    for _ in range(iterations):
        samples = librosa.istft(target * angles, hop_length=m.hop, window="hann", center=False, length=length)
        rebuilt = librosa.stft(samples, n_fft=m.fft_size, hop_length=m.hop, window="hann", center=False)
        errors.append(float(np.linalg.norm(np.abs(rebuilt) - target)) / norm)
        angles = np.exp(1j * np.angle(rebuilt))

    return Waveform(samples, m.sample_rate), errors


def griffin_lim(m: MagSpec, iterations: int, seed: int = 0) -> Waveform:
    waveform, _ = griffin_lim_with_history(m, iterations, seed)
    return waveform


def vocode(mel: MelSpec, iterations: int, seed: int = 0) -> Waveform:
    return griffin_lim(mel_invert(mel), iterations, seed)


def read_wav(path) -> Waveform:
    samples, sample_rate = soundfile.read(str(path), dtype="float64", always_2d=False)
    if samples.ndim != 1:
        raise SpectralError(f"{path}: only mono audio is supported, got {samples.shape[1]} channels")
    return make_waveform(samples, sample_rate)


def write_wav(path, w: Waveform):
    samples = np.clip(np.asarray(w.samples, dtype=np.float64), -1.0, 1.0)
    soundfile.write(str(path), samples, w.sample_rate, subtype=WAV_SUBTYPE)
    logger.debug("Wrote %s samples to %s", len(samples), path)
