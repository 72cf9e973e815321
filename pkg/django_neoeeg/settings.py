"""Standalone settings used by the ``neoeeg`` entry point."""

import os

SECRET_KEY = os.environ.get("NEOEEG_SECRET_KEY", "neoeeg-standalone")

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
    "django_neoeeg",
]

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("NEOEEG_DB", "neoeeg.sqlite3"),
    }
}

USE_TZ = True

NEOEEG: dict = {}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "stderr": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "django_neoeeg": {
            "handlers": ["stderr"],
            "level": os.environ.get("NEOEEG_LOG_LEVEL", "INFO"),
        },
    },
}
