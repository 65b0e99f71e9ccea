"""
Runtime settings.

Environment variables (optionally from a .env file in the working directory):
  TRACTCONN_LOG_LEVEL   DEBUG / INFO / WARNING ... (default INFO)
  TRACTCONN_DEBUG       1/true/yes/on enables built-in self-checks
  TRACTCONN_THREADS     default worker count (default: all available CPUs)

Per-run `key=value` config files are read with the same parser; their keys are
command-line flag names.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from dotenv import dotenv_values, find_dotenv, load_dotenv

from tractconn.errors import ConfigurationError
from tractconn.utils.parallel import available_workers

_log = logging.getLogger(__name__)

ENV_PREFIX = "TRACTCONN_"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def parse_bool(name: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigurationError(f"{name} must be a boolean (1/0, true/false), got {value!r}")


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    debug: bool = False
    threads: int = 1

    @classmethod
    def from_env(cls, dotenv_path: Optional[Union[str, Path]] = None) -> "Settings":
        """Read TRACTCONN_* variables; an existing environment wins over .env values."""
        dotenv_file = dotenv_path or find_dotenv(usecwd=True)
        if dotenv_file:
            load_dotenv(dotenv_file, override=False)
        env = os.environ

        log_level = env.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO").strip().upper() or "INFO"
        if not isinstance(logging.getLevelName(log_level), int):
            raise ConfigurationError(f"{ENV_PREFIX}LOG_LEVEL: unknown level {log_level!r}")

        debug = parse_bool(f"{ENV_PREFIX}DEBUG", env.get(f"{ENV_PREFIX}DEBUG", ""))

        raw_threads = env.get(f"{ENV_PREFIX}THREADS", "").strip()
        if raw_threads:
            try:
                threads = int(raw_threads)
            except ValueError as exc:
                raise ConfigurationError(f"{ENV_PREFIX}THREADS must be an integer, got {raw_threads!r}") from exc
            if threads < 1:
                raise ConfigurationError(f"{ENV_PREFIX}THREADS must be >= 1, got {threads}")
        else:
            threads = available_workers()
        return cls(log_level=log_level, debug=debug, threads=threads)


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_").lower()


def load_config_file(path: Union[str, Path], known_keys: Iterable[str]) -> Dict[str, str]:
    """
    Read a `key=value` run file. Keys may use dashes or underscores; the
    returned dict uses underscores. Unknown keys and keys without a value
    raise ConfigurationError.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    known = {normalize_key(k) for k in known_keys}
    values: Dict[str, str] = {}
    for raw_key, value in dotenv_values(path).items():
        key = normalize_key(raw_key)
        if key not in known:
            raise ConfigurationError(f"{path}: unknown key {raw_key!r}")
        if value is None:
            raise ConfigurationError(f"{path}: key {raw_key!r} has no value")
        values[key] = value
    _log.debug("Loaded %d settings from %s", len(values), path)
    return values
