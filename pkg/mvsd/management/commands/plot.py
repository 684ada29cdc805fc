import csv
import os

from mvsd.constants import VALIDATION_LOG_FILENAME
from mvsd.enums import PlotKindEnum
from mvsd.libraries.plots import plot_ablation, plot_loss_curves, plot_spectrogram
from mvsd.libraries.spectral import read_wav, waveform_to_melspec
from mvsd.libraries.trainer import read_loss_log
from mvsd.management.MvsdCommand import MvsdCommand, UsageError


def _read_rows(path):
    def value(text):
        try:
            return float(text)
        except ValueError:
            return text or None

    with open(path, newline="") as f:
        return [{key: value(text) for key, text in row.items()} for row in csv.DictReader(f)]


class Command(MvsdCommand):
    help = """
    Draw a PNG from an existing artifact: --kind loss reads a loss_log.csv (and validation.csv next to it),
    --kind ablation reads ablation.csv, --kind spectrogram reads a WAV file.
    """
    info = "Plotting"
    success = "Plot written"
    failure = "Plotting failed"

    def add_command_arguments(self, parser):
        parser.add_argument("--kind", help=f"One of {', '.join(kind for kind, _ in PlotKindEnum.choices)}")
        parser.add_argument("--input", help="Artifact to plot")
        parser.add_argument("--metric", default="val_cycle", help="Ablation metric to draw")

    def operation(self, *args, **options):
        self.require(options, "kind", "input")
        kind = options["kind"]
        source = options["input"]
        if kind not in [choice for choice, _ in PlotKindEnum.choices]:
            raise UsageError(f"--kind: unknown plot kind {kind}")
        if not os.path.isfile(source):
            raise UsageError(f"--input: no such file {source}")

        stem = os.path.splitext(os.path.basename(source))[0]
        path = self.out_path(options, f"{stem}.{kind}.png")
        if kind == PlotKindEnum.LOSS:
            validation_path = os.path.join(os.path.dirname(source), VALIDATION_LOG_FILENAME)
            validation = _read_rows(validation_path) if os.path.isfile(validation_path) else None
            plot_loss_curves(read_loss_log(source), path, validation)
        elif kind == PlotKindEnum.ABLATION:
            plot_ablation(_read_rows(source), path, options["metric"])
        else:
            plot_spectrogram(waveform_to_melspec(read_wav(source)), path, stem)
        self.stdout.write(path)
