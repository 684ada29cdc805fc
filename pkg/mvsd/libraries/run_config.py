"""
Run configuration files: `.env` style `key=value` lines read with django-environ into a private mapping,
merged with command-line flags and validated by the config serializers.

Precedence is defaults < environment settings < file < flags.
"""
import logging
import os

from environ import Env

from mvsd.serializers import error_lines

logger = logging.getLogger(__name__)


class RunConfigError(ValueError):
    """Carries every problem found, one per line"""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("\n".join(self.problems))


def read_run_config(path) -> dict:
    if not os.path.isfile(path):
        raise RunConfigError(f"--config: no such file {path}")
    # a throwaway subclass keeps the values out of os.environ
    env_class = type("RunConfigEnv", (Env,), {"ENVIRON": {}})
    env_class.read_env(str(path))
    values = {key.strip().lower(): value for key, value in env_class.ENVIRON.items()}
    logger.debug("Read %s keys from %s", len(values), path)
    return values


def check_keys(values: dict, known) -> dict:
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise RunConfigError([f"{key}: unknown configuration key" for key in unknown])
    return values


def resolve(serializer_class, file_values=None, flags=None, settings_values=None):
    """
    Builds the config object of `serializer_class` from settings values, file values and flags; keys the
    serializer doesn't declare are left to other commands. None-valued flags were not given.
    """
    fields = serializer_class().fields
    data = {key: value for key, value in (settings_values or {}).items() if key in fields and value is not None}
    data.update({key: value for key, value in (file_values or {}).items() if key in fields})
    data.update({key: value for key, value in (flags or {}).items() if key in fields and value is not None})
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise RunConfigError(error_lines(serializer.errors))
    return serializer.save()
