import logging
import os

import librosa

from mvsd.constants import SAMPLE_RATE
from mvsd.enums import TaskEnum
from mvsd.libraries.checkpoints import load_converters
from mvsd.libraries.evaluation import convert_clip
from mvsd.libraries.plots import plot_spectrogram
from mvsd.libraries.scenes import load_scene_png
from mvsd.libraries.spectral import make_waveform, read_wav, write_wav
from mvsd.management.MvsdCommand import MvsdCommand, UsageError
from mvsd.serializers import InferSerializer

logger = logging.getLogger(__name__)


class Command(MvsdCommand):
    help = """
    Convert one clip under one scene image. --task vam reverberates anechoic audio to match the scene,
    --task dereverb removes the scene's reverberation. Writes <stem>.<task>.wav and <stem>.<task>.png.
    """
    info = "Converting audio"
    success = "Conversion written"
    failure = "Conversion failed"
    out_required = False

    def add_command_arguments(self, parser):
        parser.add_argument("--task", help=f"One of {', '.join(TaskEnum.inference_choices)}")
        parser.add_argument("--audio", help="Mono WAV file to convert")
        parser.add_argument("--scene", help="64x64 scene PNG conditioning the converter")
        parser.add_argument("--checkpoint", help="Converters checkpoint")
        parser.add_argument("--steps", help="Number of sampling steps, defaults to the trained T")
        parser.add_argument("--griffin-lim-iterations", dest="griffin_lim_iterations")

    def operation(self, *args, **options):
        self.require(options, "task", "audio")
        if options["task"] in TaskEnum.inference_choices:
            self.require(options, "scene", reason=f"for --task {options['task']}")
        config = self.resolve_config(
            InferSerializer,
            options,
            task=options["task"],
            audio=options["audio"],
            scene=options["scene"],
            checkpoint=options["checkpoint"],
            steps=options["steps"],
            griffin_lim_iterations=options["griffin_lim_iterations"],
        )
        for name in ("audio", "scene", "checkpoint"):
            if not os.path.isfile(config[name]):
                raise UsageError(f"--{name}: no such file {config[name]}")

        audio = read_wav(config["audio"])
        if audio.sample_rate != SAMPLE_RATE:
            logger.warning("Resampling %s from %s Hz to %s Hz", config["audio"], audio.sample_rate, SAMPLE_RATE)
            samples = librosa.resample(audio.samples, orig_sr=audio.sample_rate, target_sr=SAMPLE_RATE)
            audio = make_waveform(samples, SAMPLE_RATE)

        loaded = load_converters(config["checkpoint"], self.device)
        waveform, mel = convert_clip(
            loaded,
            config["task"],
            audio,
            load_scene_png(config["scene"]),
            seed=config.get("seed", 0),
            steps=config.get("steps"),
            iterations=config["griffin_lim_iterations"],
        )

        stem = os.path.splitext(os.path.basename(config["audio"]))[0]
        out_dir = options["out"] or os.path.dirname(os.path.abspath(config["audio"]))
        wav_path = os.path.join(out_dir, f"{stem}.{config['task']}.wav")
        write_wav(wav_path, waveform)
        plot_spectrogram(mel, os.path.join(out_dir, f"{stem}.{config['task']}.png"), TaskEnum.get_text(config["task"]))
        self.stdout.write(wav_path)
