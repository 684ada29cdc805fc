"""
Django settings for the mvsd project.

The project has no web surface: Django provides the settings layer, the
management-command CLI and the test runner. Every value below can be
overridden from the environment or from a `.env` file at the repository root.
"""
import os
import sys

from environ import Env
from django_log_formatter_ecs import ECSFormatter

import sentry_sdk
from sentry_sdk.integrations.django import DjangoIntegration

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

ENV_FILE = os.path.join(BASE_DIR, ".env")
if os.path.exists(ENV_FILE):
    Env.read_env(ENV_FILE)

env = Env(
    DEBUG=(bool, False),
    LOG_LEVEL=(str, "INFO"),
    LOG_FORMAT=(str, "simple"),
    MVSD_DEVICE=(str, "cpu"),
    MVSD_WORKERS=(int, 4),
    MVSD_GRIFFIN_LIM_ITERATIONS=(int, 60),
    MVSD_TORCH_THREADS=(int, 0),
    TIME_TESTS=(bool, False),
)

# Only used by Django internals; nothing in this project signs data.
SECRET_KEY = env.str("DJANGO_SECRET_KEY", "mvsd-local-development")

DEBUG = env("DEBUG")

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "mvsd.apps.MvsdConfig",
]

DATABASES = {}

DEFAULT_AUTO_FIELD = "django.db.models.AutoField"

# Torch device used for training and inference, e.g. "cpu" or "cuda:0"
MVSD_DEVICE = env("MVSD_DEVICE")

# Pool size for dataset generation and evaluation items
MVSD_WORKERS = env("MVSD_WORKERS")

MVSD_GRIFFIN_LIM_ITERATIONS = env("MVSD_GRIFFIN_LIM_ITERATIONS")

# 0 leaves torch's own choice alone
MVSD_TORCH_THREADS = env("MVSD_TORCH_THREADS")

TIME_TESTS = env("TIME_TESTS")

SUPPRESS_TEST_OUTPUT = env.bool("SUPPRESS_TEST_OUTPUT", False)

# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = env.bool("USE_TZ", True)

if "test" not in sys.argv:
    LOGGING = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "simple": {"format": "{asctime} {levelname} {name} {message}", "style": "{"},
            "ecs_formatter": {"()": ECSFormatter},
        },
        "handlers": {
            "stdout": {"class": "logging.StreamHandler", "formatter": "simple"},
            "ecs": {"class": "logging.StreamHandler", "formatter": "ecs_formatter"},
        },
        "root": {
            "handlers": ["ecs" if env("LOG_FORMAT").lower() == "ecs" else "stdout"],
            "level": env("LOG_LEVEL").upper(),
        },
    }
else:
    LOGGING = {"version": 1, "disable_existing_loggers": True}

# Sentry
if env.str("SENTRY_DSN", ""):
    sentry_sdk.init(
        dsn=env.str("SENTRY_DSN"),
        environment=env.str("SENTRY_ENVIRONMENT", "local"),
        integrations=[DjangoIntegration()],
    )
