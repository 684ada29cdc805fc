import logging
import math
from collections import namedtuple

import numpy as np
from scipy import signal, stats

from mvsd.constants import (
    DECAY_FIT_RANGE,
    DRR_RANGE,
    FFT_SIZE,
    MAG_FLOOR,
    REVERB_PEAK,
    ROOM_VOLUME_RANGE,
    RT60_RANGE,
    SAMPLE_RATE,
)
from mvsd.libraries.spectral import Waveform, make_waveform, stft

logger = logging.getLogger(__name__)

SceneParams = namedtuple("SceneParams", "rt60, drr, room_volume, seed")

RIR = namedtuple("RIR", "taps, sample_rate")

ItemMetrics = namedtuple("ItemMetrics", "item_id, stft_distance, rte")

MetricReport = namedtuple("MetricReport", "items, stft_distance, rte, rte_failures")

# amplitude decays by 60 dB (a factor 1000) over one rt60
DECAY_CONSTANT = math.log(1000.0)

# blind estimation works on 10 ms energy frames
ONSET_FRAME_SECONDS = 0.01
ONSET_DROP_DB = 6.0
ONSET_SKIP_FRAMES = 2


class SceneParamsError(ValueError):
    pass


class SampleRateMismatchError(ValueError):
    pass


class DecayMeasurementError(ValueError):
    """Raised when no free decay from -5 dB to -25 dB can be found"""

    def __init__(self, message="no measurable decay", side=None):
        super().__init__(message if side is None else f"{side}: {message}")
        self.side = side


def validate_scene_params(p: SceneParams) -> SceneParams:
    problems = []
    for name, (low, high) in (("rt60", RT60_RANGE), ("drr", DRR_RANGE), ("room_volume", ROOM_VOLUME_RANGE)):
        value = getattr(p, name)
        if not (low <= value <= high):
            problems.append(f"{name}={value} outside [{low}, {high}]")
    if problems:
        raise SceneParamsError("; ".join(problems))
    return p


def synth_rir(p: SceneParams, sample_rate: int = SAMPLE_RATE) -> RIR:
    """
    Polack model: a unit direct-path tap followed by Gaussian noise under an exponential envelope.
    The tail gain is solved so the direct-to-reverberant energy ratio equals p.drr exactly.
    """
    validate_scene_params(p)
    length = max(2, math.ceil(1.5 * p.rt60 * sample_rate))
    tau = p.rt60 / DECAY_CONSTANT

    rng = np.random.default_rng([p.seed, 1])
    t = np.arange(1, length, dtype=np.float64)
    tail = rng.standard_normal(length - 1) * np.exp(-t / (sample_rate * tau))

    gain = math.sqrt(1.0 / (float(np.sum(tail**2)) * 10.0 ** (p.drr / 10.0)))
    taps = np.concatenate([[1.0], gain * tail])
    return RIR(taps, sample_rate)


def reverberate(w: Waveform, h: RIR, normalize: bool = True) -> Waveform:
    """
    Full linear convolution. With normalize, outputs peaking above 0.95 are scaled down to 0.95;
    the superposition property only holds with normalize=False.
    """
    if w.sample_rate != h.sample_rate:
        raise SampleRateMismatchError(f"waveform at {w.sample_rate} Hz, rir at {h.sample_rate} Hz")
    out = signal.fftconvolve(np.asarray(w.samples, dtype=np.float64), np.asarray(h.taps, dtype=np.float64))
    if normalize:
        peak = float(np.max(np.abs(out))) if len(out) else 0.0
        if peak > REVERB_PEAK:
            out = out * (REVERB_PEAK / peak)
    return Waveform(out, w.sample_rate)


def schroeder_curve(samples) -> np.ndarray:
    """Backward-integrated energy in dB relative to the total; -inf once nothing is left."""
    energy = np.asarray(samples, dtype=np.float64) ** 2
    edc = np.cumsum(energy[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def _t20(samples, sample_rate: int) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 2 or not np.any(samples):
        raise DecayMeasurementError()

    edc_db = schroeder_curve(samples)
    upper, lower = DECAY_FIT_RANGE
    in_range = (edc_db <= upper) & (edc_db >= lower)
    if np.min(edc_db) > lower or np.count_nonzero(in_range) < 2:
        raise DecayMeasurementError()

    times = np.flatnonzero(in_range) / sample_rate
    fit = stats.linregress(times, edc_db[in_range])
    if not fit.slope < 0:
        raise DecayMeasurementError()
    return -60.0 / fit.slope


def decay_onset(w: Waveform) -> int:
    """
    Sample index where the final free decay can be measured: two frames after the last 10 ms frame
    within 6 dB of the loudest one. By then the source and its direct path have stopped.
    """
    frame = max(1, int(round(ONSET_FRAME_SECONDS * w.sample_rate)))
    samples = np.asarray(w.samples, dtype=np.float64)
    frames = math.ceil(len(samples) / frame)
    padded = np.zeros(frames * frame)
    padded[: len(samples)] = samples
    energy = np.sum(padded.reshape(frames, frame) ** 2, axis=1)
    if not np.any(energy):
        raise DecayMeasurementError()

    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy)
    loud = np.flatnonzero(level >= np.max(level) - ONSET_DROP_DB)
    return (int(loud[-1]) + ONSET_SKIP_FRAMES) * frame


def estimate_rt60(w) -> float:
    """
    T20 estimate in seconds. RIRs are integrated from their first tap; recorded audio from the start of
    its final free decay.
    """
    if isinstance(w, RIR):
        return _t20(w.taps, w.sample_rate)
    return _t20(np.asarray(w.samples)[decay_onset(w) :], w.sample_rate)


def rte(pred: Waveform, gt: Waveform) -> float:
    estimates = {}
    for side, waveform in (("pred", pred), ("gt", gt)):
        try:
            estimates[side] = estimate_rt60(waveform)
        except DecayMeasurementError as error:
            raise DecayMeasurementError(str(error), side=side) from error
    return abs(estimates["pred"] - estimates["gt"])


def _equal_length(pred: Waveform, gt: Waveform):
    if pred.sample_rate != gt.sample_rate:
        raise SampleRateMismatchError(f"pred at {pred.sample_rate} Hz, gt at {gt.sample_rate} Hz")
    length = max(len(pred.samples), len(gt.samples), FFT_SIZE)
    a = np.zeros(length)
    b = np.zeros(length)
    a[: len(pred.samples)] = pred.samples
    b[: len(gt.samples)] = gt.samples
    return make_waveform(a, pred.sample_rate), make_waveform(b, gt.sample_rate)


def stft_distance(pred: Waveform, gt: Waveform) -> float:
    a, b = _equal_length(pred, gt)
    return float(np.mean((stft(a).grid - stft(b).grid) ** 2))


def log_spectral_distance(pred: Waveform, gt: Waveform) -> float:
    """Mean over frames of the RMS dB difference between power spectra."""
    a, b = _equal_length(pred, gt)
    floor = MAG_FLOOR**2
    pa = 10.0 * np.log10(stft(a).grid ** 2 + floor)
    pb = 10.0 * np.log10(stft(b).grid ** 2 + floor)
    return float(np.mean(np.sqrt(np.mean((pa - pb) ** 2, axis=1))))


def build_metric_report(items) -> MetricReport:
    """
    Aggregates are plain means over the items with a value; items whose RT60 couldn't be measured keep
    rte=None and are counted in rte_failures.
    """
    items = list(items)
    distances = [item.stft_distance for item in items if item.stft_distance is not None]
    rtes = [item.rte for item in items if item.rte is not None]
    return MetricReport(
        items=items,
        stft_distance=math.fsum(distances) / len(distances) if distances else None,
        rte=math.fsum(rtes) / len(rtes) if rtes else None,
        rte_failures=sum(1 for item in items if item.rte is None),
    )
