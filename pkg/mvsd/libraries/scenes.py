import io
import logging
import math
from collections import namedtuple

import numpy as np
from PIL import Image, ImageColor, ImageDraw

from mvsd.constants import (
    DRR_RANGE,
    ROOM_VOLUME_RANGE,
    RT60_RANGE,
    SAMPLE_RATE,
    SCENE_HUE_DEAD,
    SCENE_HUE_LIVE,
    SCENE_SIZE,
    SCENE_TEXTURE_JITTER,
    SPEECH_DURATION,
    SPEECH_PEAK,
    SPEECH_TRAILING_SILENCE,
)
from mvsd.libraries.acoustics import SceneParams, validate_scene_params
from mvsd.libraries.spectral import Waveform

logger = logging.getLogger(__name__)

SceneImage = namedtuple("SceneImage", "pixels, params")

WALL_SATURATION = 0.6
BACK_WALL_VALUE = 0.75
SIDE_WALL_VALUE = 0.6
FLOOR_HUE = 0.1
FLOOR_SATURATION = 0.3
CEILING_VALUE = 0.85

BURST_SECONDS = (0.15, 0.40)
GAP_SECONDS = (0.12, 0.25)
LEAD_IN_SECONDS = 0.05
RAMP_SECONDS = 0.01
HARMONICS = 8
F0_RANGE = (80.0, 300.0)
MODULATION_DEPTH = 0.2


class SpeechSynthesisError(ValueError):
    pass


def _log_uniform(rng, low, high):
    return float(np.clip(math.exp(rng.uniform(math.log(low), math.log(high))), low, high))


def sample_scene_params(rng_seed: int) -> SceneParams:
    rng = np.random.default_rng([rng_seed, 0])
    return SceneParams(
        rt60=_log_uniform(rng, *RT60_RANGE),
        drr=float(rng.uniform(*DRR_RANGE)),
        room_volume=_log_uniform(rng, *ROOM_VOLUME_RANGE),
        seed=int(rng_seed),
    )


def hue_for_rt60(rt60: float) -> float:
    """Linear map from the rt60 range onto hues, blue for dead rooms to orange for live ones."""
    low, high = RT60_RANGE
    return SCENE_HUE_DEAD - (SCENE_HUE_DEAD - SCENE_HUE_LIVE) * (rt60 - low) / (high - low)


def rt60_for_hue(hue: float) -> float:
    low, high = RT60_RANGE
    return low + (SCENE_HUE_DEAD - hue) / (SCENE_HUE_DEAD - SCENE_HUE_LIVE) * (high - low)


def hue_table(points: int = 12):
    return [(rt60, hue_for_rt60(rt60)) for rt60 in np.linspace(*RT60_RANGE, points)]


def floor_value_for_drr(drr: float) -> float:
    low, high = DRR_RANGE
    return 0.25 + 0.6 * (drr - low) / (high - low)


def back_wall_box(room_volume: float, size: int = SCENE_SIZE):
    """Bigger rooms look deeper, so their back wall is smaller."""
    low, high = ROOM_VOLUME_RANGE
    depth = (math.log(room_volume) - math.log(low)) / (math.log(high) - math.log(low))
    half = (24.0 - 16.0 * depth) * size / 64.0
    centre = (size - 1) / 2.0
    return (
        int(round(centre - half)),
        int(round(centre - 0.75 * half)),
        int(round(centre + half)),
        int(round(centre + 0.75 * half)),
    )


def _hsv(hue, saturation, value):
    return ImageColor.getrgb(f"hsv({hue * 360:.2f}, {saturation * 100:.2f}%, {value * 100:.2f}%)")


def render_noiseless(p: SceneParams, size: int = SCENE_SIZE) -> np.ndarray:
    validate_scene_params(p)
    hue = hue_for_rt60(p.rt60)
    left, top, right, bottom = back_wall_box(p.room_volume, size)
    edge = size - 1

    image = Image.new("RGB", (size, size))
    draw = ImageDraw.Draw(image)
    draw.polygon([(0, 0), (edge, 0), (right, top), (left, top)], fill=_hsv(0.0, 0.0, CEILING_VALUE))
    draw.polygon(
        [(0, edge), (edge, edge), (right, bottom), (left, bottom)],
        fill=_hsv(FLOOR_HUE, FLOOR_SATURATION, floor_value_for_drr(p.drr)),
    )
    side = _hsv(hue, WALL_SATURATION, SIDE_WALL_VALUE)
    draw.polygon([(0, 0), (left, top), (left, bottom), (0, edge)], fill=side)
    draw.polygon([(edge, 0), (right, top), (right, bottom), (edge, edge)], fill=side)
    draw.rectangle([left, top, right, bottom], fill=_hsv(hue, WALL_SATURATION, BACK_WALL_VALUE))
    return np.asarray(image, dtype=np.uint8)


def render_scene(p: SceneParams, size: int = SCENE_SIZE) -> SceneImage:
    base = render_noiseless(p, size).astype(np.int16)
    rng = np.random.default_rng([p.seed, 2])
    noise = rng.integers(-SCENE_TEXTURE_JITTER, SCENE_TEXTURE_JITTER + 1, size=base.shape)
    pixels = np.clip(base + noise, 0, 255).astype(np.uint8)
    return SceneImage(pixels, p)


def scene_png_bytes(pixels) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB").save(buffer, format="PNG")
    return buffer.getvalue()


def save_scene_png(path, pixels):
    with open(path, "wb") as f:
        f.write(scene_png_bytes(pixels))


def load_scene_png(path) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.uint8)


def _burst_spans(rng, duration):
    active_end = duration - SPEECH_TRAILING_SILENCE
    spans = []
    cursor = LEAD_IN_SECONDS
    while cursor < active_end:
        end = min(cursor + rng.uniform(*BURST_SECONDS), active_end)
        if end - cursor < 4 * RAMP_SECONDS:
            break
        spans.append((cursor, end))
        cursor = end + rng.uniform(*GAP_SECONDS)
    return spans


def _gate(spans, n, sample_rate):
    gate = np.zeros(n)
    ramp = int(RAMP_SECONDS * sample_rate)
    shape = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    for start, end in spans:
        a, b = int(start * sample_rate), int(end * sample_rate)
        gate[a:b] = 1.0
        gate[a : a + ramp] = shape
        gate[b - ramp : b] = shape[::-1]
    return gate


def synth_speechlike(seed: int, duration: float = SPEECH_DURATION, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """
    Voiced bursts of a harmonic source separated by true silence. The gaps and the trailing silence let
    reverberant tails decay freely once the source stops.
    """
    if duration < 1.0:
        raise SpeechSynthesisError(f"duration must be at least 1.0 s, got {duration}")

    rng = np.random.default_rng([seed, 3])
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    control = np.arange(0.0, duration + 0.01, 0.01)
    f0 = rng.uniform(100.0, 220.0) + np.cumsum(rng.normal(0.0, 4.0, len(control)))
    f0 = np.clip(f0, *F0_RANGE)
    phase = 2 * np.pi * np.cumsum(np.interp(t, control, f0)) / sample_rate

    tilt = rng.uniform(0.8, 1.2)
    offsets = rng.uniform(0.0, 2 * np.pi, HARMONICS)
    voiced = sum(k ** -tilt * np.sin(k * phase + offsets[k - 1]) for k in range(1, HARMONICS + 1))

    rate = rng.uniform(2.0, 6.0)
    syllables = 1.0 - MODULATION_DEPTH * (0.5 - 0.5 * np.cos(2 * np.pi * rate * t + rng.uniform(0.0, 2 * np.pi)))

    samples = voiced * syllables * _gate(_burst_spans(rng, duration), n, sample_rate)
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples = samples * (SPEECH_PEAK / peak)
    return Waveform(samples, sample_rate)
