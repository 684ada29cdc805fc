import os
from abc import ABC

from django.conf import settings
from django.core.management import BaseCommand, CommandError

from mvsd.libraries.run_config import RunConfigError, check_keys, read_run_config, resolve
from mvsd.serializers import known_config_keys


class UsageError(CommandError):
    """A problem with the command line or the config file; reported one line per problem"""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("\n".join(self.problems))


class MvsdCommand(ABC, BaseCommand):
    """
    Help and Success message should be overridden
    with messages relevant to the operation
    """

    help: str = ""
    info: str = ""
    success: str = "Successfully executed operation"
    failure: str = "Failed to execute operation"
    out_required: bool = True

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Run configuration file of key=value lines")
        parser.add_argument("--seed", type=int, help="Seed for every random draw of the operation")
        parser.add_argument("--out", help="Directory that receives every output")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        if self.out_required and not options.get("out"):
            raise UsageError("--out: required")
        if options.get("out"):
            os.makedirs(options["out"], exist_ok=True)

        if not settings.SUPPRESS_TEST_OUTPUT and self.info:
            self.stdout.write(self.style.WARNING(f"{self.info}\n"))

        try:
            self.operation(*args, **options)
        except RunConfigError as error:
            raise UsageError(error.problems) from error
        except Exception:
            self.stderr.write(self.style.ERROR(self.failure))
            raise

        if not settings.SUPPRESS_TEST_OUTPUT:
            self.stdout.write(self.style.SUCCESS(self.success))

    def operation(self, *args, **options):
        """
        operation should be overridden in child class
        with the code required to execute the command
        """
        pass

    def file_config(self, options) -> dict:
        if not options.get("config"):
            return {}
        return check_keys(read_run_config(options["config"]), known_config_keys())

    def resolve_config(self, serializer_class, options, **flags):
        """
        Config object for `serializer_class`: MVSD_WORKERS and MVSD_GRIFFIN_LIM_ITERATIONS, overridden by
        the config file, overridden by the given flags and --seed.
        """
        settings_values = {"workers": self.workers, "griffin_lim_iterations": settings.MVSD_GRIFFIN_LIM_ITERATIONS}
        flags = {**flags, "seed": options.get("seed")}
        return resolve(serializer_class, self.file_config(options), flags, settings_values)

    @staticmethod
    def require(options, *names, reason=""):
        missing = [name for name in names if not options.get(name)]
        if missing:
            suffix = f" {reason}" if reason else ""
            raise UsageError([f"--{name.replace('_', '-')}: required{suffix}" for name in missing])

    @staticmethod
    def out_path(options, *parts):
        return os.path.join(options["out"], *parts)

    @property
    def device(self):
        return settings.MVSD_DEVICE

    @property
    def workers(self):
        return settings.MVSD_WORKERS
