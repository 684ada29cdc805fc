import json
import logging

from mvsd.enums import PredictorEnum, TaskEnum
from mvsd.libraries.evaluation import evaluate
from mvsd.libraries.reports import write_run_report
from mvsd.management.MvsdCommand import MvsdCommand
from mvsd.serializers import EvalConfigSerializer

logger = logging.getLogger(__name__)


class Command(MvsdCommand):
    help = """
    Evaluate a checkpoint (or a baseline predictor) on a dataset split. Writes <task>_<predictor>.json with
    the aggregate, config echo and checkpoint digest, and <task>_<predictor>.csv with one row per item. vam runs add
    <task>_<predictor>.metrics.json and .metrics.csv with the per-item stft_distance and rte.
    """
    info = "Evaluating"
    success = "Evaluation report written"
    failure = "Evaluation failed"

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", help="Converters checkpoint")
        parser.add_argument("--dataset", dest="manifest", help="Dataset directory or manifest.json")
        parser.add_argument("--task", help=f"One of {', '.join(choice for choice, _ in TaskEnum.choices)}")
        parser.add_argument("--split")
        parser.add_argument("--runs", dest="n_sampling_runs", help="Sampling runs per item, 1 to 10")
        parser.add_argument("--steps", help="Sampling steps, defaults to the trained T")
        parser.add_argument("--predictor", help=f"One of {', '.join(PredictorEnum.as_list())}")
        parser.add_argument("--griffin-lim-iterations", dest="griffin_lim_iterations")
        parser.add_argument("--workers", type=int)

    def operation(self, *args, **options):
        names = ["checkpoint", "manifest", "task", "split", "n_sampling_runs", "steps", "predictor"]
        names += ["griffin_lim_iterations", "workers"]
        flags = {name: options[name] for name in names}
        config = self.resolve_config(EvalConfigSerializer, options, **flags)

        report = evaluate(config, self.device)
        json_path, _ = write_run_report(report, options["out"])
        self.stdout.write(json.dumps(report.aggregate, sort_keys=True))
        self.stdout.write(json_path)
