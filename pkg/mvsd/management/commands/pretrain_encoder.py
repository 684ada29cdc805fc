import logging

import numpy as np

from mvsd.constants import ENCODER_FILENAME
from mvsd.enums import SplitEnum
from mvsd.libraries.checkpoints import save_encoder
from mvsd.libraries.contrastive import pretrain_encoder
from mvsd.libraries.dataset import in_split, load_manifest, scene_path
from mvsd.libraries.networks import SceneEncoder, images_to_tensor
from mvsd.libraries.reports import write_csv
from mvsd.libraries.scenes import load_scene_png
from mvsd.management.MvsdCommand import MvsdCommand
from mvsd.serializers import PretrainConfigSerializer

logger = logging.getLogger(__name__)


class Command(MvsdCommand):
    help = """
    Pretrain the scene encoder with the supervised contrastive loss on rt60 classes of the training scenes
    (paired and natural). Writes encoder.pt and encoder_losses.csv into --out.
    """
    info = "Pretraining the scene encoder"
    success = "Scene encoder saved"
    failure = "Failed to pretrain the scene encoder"

    def add_command_arguments(self, parser):
        parser.add_argument("--dataset", help="Dataset directory or manifest.json")
        parser.add_argument("--epochs")
        parser.add_argument("--temperature")
        parser.add_argument("--batch-size", dest="batch_size")
        parser.add_argument("--learning-rate", dest="learning_rate")

    def operation(self, *args, **options):
        self.require(options, "dataset")
        config = self.resolve_config(
            PretrainConfigSerializer,
            options,
            epochs=options["epochs"],
            temperature=options["temperature"],
            batch_size=options["batch_size"],
            learning_rate=options["learning_rate"],
        )
        manifest = load_manifest(options["dataset"])
        items = in_split(manifest.paired + manifest.unpaired_natural, SplitEnum.TRAIN)
        logger.info("Pretraining on %s training scenes", len(items))
        pixels = [load_scene_png(scene_path(manifest.root, item.scene_id)) for item in items]
        images = images_to_tensor(np.stack(pixels))

        encoder = SceneEncoder().to(self.device)
        result = pretrain_encoder(encoder, images, [item.params.rt60 for item in items], config)
        save_encoder(self.out_path(options, ENCODER_FILENAME), result.encoder, result.losses)
        write_csv(
            self.out_path(options, "encoder_losses.csv"),
            [{"epoch": epoch, "loss": loss} for epoch, loss in enumerate(result.losses, start=1)],
        )
