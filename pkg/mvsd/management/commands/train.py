import logging

from mvsd.libraries.checkpoints import load_encoder
from mvsd.libraries.dataset import load_manifest
from mvsd.libraries.plots import plot_loss_curves
from mvsd.libraries.trainer import build_converters, read_loss_log, train
from mvsd.management.MvsdCommand import MvsdCommand
from mvsd.serializers import TrainConfigSerializer

logger = logging.getLogger(__name__)

FLAGS = [
    "learning_rate",
    "batch_size",
    "epochs",
    "unpaired_warmup",
    "diffusion_steps",
    "beta_start",
    "beta_end",
    "base_channels",
    "ladder",
    "optimizer",
    "unpaired_fraction",
    "cycle_steps",
]


class Command(MvsdCommand):
    help = """
    Train the reverberator and the dereverberator jointly. Writes loss_log.csv, validation.csv,
    parameters.json, loss_curves.png and checkpoints/epoch_XXX.pt into --out.
    """
    info = "Training converters"
    success = "Training finished"
    failure = "Training failed"

    def add_command_arguments(self, parser):
        parser.add_argument("--dataset", help="Dataset directory or manifest.json")
        parser.add_argument("--encoder", help="Pretrained encoder checkpoint")
        for name in FLAGS:
            parser.add_argument(f"--{name.replace('_', '-')}", dest=name)
        parser.add_argument(
            "--no-mutual",
            dest="use_mutual",
            action="store_const",
            const=False,
            help="Train the converters separately, without cycle losses or unpaired data",
        )
        parser.add_argument("--no-unpaired", dest="use_unpaired", action="store_const", const=False)
        parser.add_argument("--no-style", dest="use_style", action="store_const", const=False)

    def operation(self, *args, **options):
        self.require(options, "dataset", "encoder")
        flags = {name: options[name] for name in FLAGS + ["use_mutual", "use_unpaired", "use_style"]}
        config = self.resolve_config(TrainConfigSerializer, options, **flags)
        logger.info("Training with %s", config._asdict())

        manifest = load_manifest(options["dataset"])
        encoder = load_encoder(options["encoder"]).to(self.device)
        f, g = build_converters(config, encoder, self.device)
        result = train(f, g, encoder, manifest, config, options["out"], device=self.device, workers=self.workers)
        plot_loss_curves(read_loss_log(result.loss_log), self.out_path(options, "loss_curves.png"), result.validation)
        self.stdout.write(result.checkpoints[-1])
