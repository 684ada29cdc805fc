import logging

from mvsd.libraries.dataset import build_dataset, dataset_checksum
from mvsd.management.MvsdCommand import MvsdCommand
from mvsd.serializers import DatasetConfigSerializer

logger = logging.getLogger(__name__)


class Command(MvsdCommand):
    help = """
    Generate the synthetic dataset: paired (scene, clean, reverberant) triples, natural (scene, reverberant)
    pairs and scene-less anechoic clips, split 80/10/10, with a manifest.json at the root of --out.
    """
    info = "Generating dataset"
    success = "Dataset generated"
    failure = "Failed to generate the dataset"

    def add_command_arguments(self, parser):
        parser.add_argument("--n-paired", dest="n_paired", help="Number of paired items")
        parser.add_argument("--m-natural", dest="m_natural", help="Number of unpaired natural items")
        parser.add_argument("--k-anechoic", dest="k_anechoic", help="Number of unpaired anechoic clips")
        parser.add_argument("--duration", help="Length of every speech-like clip in seconds")
        parser.add_argument("--workers", type=int, help="Worker pool size, defaults to MVSD_WORKERS")

    def operation(self, *args, **options):
        config = self.resolve_config(
            DatasetConfigSerializer,
            options,
            n_paired=options["n_paired"],
            m_natural=options["m_natural"],
            k_anechoic=options["k_anechoic"],
            duration=options["duration"],
            workers=options["workers"],
        )
        build_dataset(
            config.n_paired,
            config.m_natural,
            config.k_anechoic,
            options["out"],
            config.seed,
            workers=config.workers,
            duration=config.duration,
        )
        checksum = dataset_checksum(options["out"])
        logger.info("Dataset checksum %s", checksum)
        self.stdout.write(checksum)
