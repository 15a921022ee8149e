# core/boundary/cli.py
"""Exit-status contract shared by the management commands: 0 ok, 1 runtime failure, 2 usage/validation."""

from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.boundary.config_serializers import error_text

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def usage_error(message) -> CommandError:
    if not isinstance(message, str):
        message = error_text(message)
    return CommandError(message, returncode=EXIT_USAGE)


def runtime_error(message) -> CommandError:
    return CommandError(str(message), returncode=EXIT_RUNTIME)


def existing_dir(value: str, flag: str) -> Path:
    path = Path(value)
    if not path.is_dir():
        raise usage_error(f"{flag}: output directory '{value}' does not exist.")
    return path


def existing_file(value: str, flag: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise usage_error(f"{flag}: file '{value}' does not exist.")
    return path


def overrides(options: dict, keys) -> dict:
    """CLI values that were actually given, keyed by config-document key."""
    return {key: options[opt] for opt, key in keys.items() if options.get(opt) is not None}
