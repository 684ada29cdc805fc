import logging

from mvsd.libraries.ablation import ablation_suite
from mvsd.management.MvsdCommand import MvsdCommand
from mvsd.serializers import AblationConfigSerializer

logger = logging.getLogger(__name__)

FLAGS = ["seeds", "epochs", "batch_size", "learning_rate", "base_channels", "ladder", "unpaired_warmup", "split"]


class Command(MvsdCommand):
    help = """
    Run the ablation grid: separately trained converters, mutual learning with 0%, 12.5% and 25% unpaired
    data, and full mutual learning at T = 10, 50 and 250. Writes ablation.csv, ablation_runs.csv, one PNG
    chart per metric and every cell's training output into --out.
    """
    info = "Running the ablation grid"
    success = "Ablation finished"
    failure = "Ablation failed"

    def add_command_arguments(self, parser):
        parser.add_argument("--dataset", help="Dataset directory or manifest.json")
        parser.add_argument("--encoder", help="Pretrained encoder checkpoint")
        for name in FLAGS:
            parser.add_argument(f"--{name.replace('_', '-')}", dest=name)
        parser.add_argument("--runs", dest="n_sampling_runs")

    def operation(self, *args, **options):
        self.require(options, "dataset", "encoder")
        flags = {name: options[name] for name in FLAGS + ["n_sampling_runs"]}
        config = self.resolve_config(AblationConfigSerializer, options, **flags)
        result = ablation_suite(
            config, options["dataset"], options["encoder"], options["out"], device=self.device, workers=self.workers
        )
        self.stdout.write(result.summary_csv)
