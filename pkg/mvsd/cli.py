"""
Command-line surface: `mvsd <subcommand> [flags]`.

Exit codes: 0 on success, 1 for usage problems (one line per problem on stderr), 2 for runtime failures.
"""
import logging
import sys

from django.core.management import CommandError, load_command_class

logger = logging.getLogger(__name__)

SUBCOMMANDS = {
    "gen-data": "gen_data",
    "pretrain-encoder": "pretrain_encoder",
    "train": "train",
    "infer": "infer",
    "eval": "eval",
    "ablate": "ablate",
    "plot": "plot",
}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


def _problems(error):
    problems = getattr(error, "problems", None) or str(error).splitlines() or [type(error).__name__]
    return [problem.replace("Error: ", "", 1) for problem in problems]


def _report(prefix, problems, stderr):
    for problem in problems:
        stderr.write(f"{prefix}: {problem}\n")


def cli(argv, stderr=None) -> int:
    stderr = stderr or sys.stderr
    if not argv or argv[0] not in SUBCOMMANDS:
        given = argv[0] if argv else ""
        _report("mvsd", [f"unknown subcommand '{given}', expected one of {', '.join(SUBCOMMANDS)}"], stderr)
        return EXIT_USAGE

    name = SUBCOMMANDS[argv[0]]
    command = load_command_class("mvsd", name)
    try:
        parser = command.create_parser("mvsd", argv[0])
        options = vars(parser.parse_args(argv[1:]))
        args = options.pop("args", ())
        command.execute(*args, **options)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)
    except CommandError as error:
        _report(f"mvsd {argv[0]}", _problems(error), stderr)
        return EXIT_USAGE
    except Exception as error:  # noqa
        logger.exception("mvsd %s failed", argv[0])
        _report(f"mvsd {argv[0]}", [f"{type(error).__name__}: {problem}" for problem in _problems(error)], stderr)
        return EXIT_FAILURE
    return EXIT_OK
