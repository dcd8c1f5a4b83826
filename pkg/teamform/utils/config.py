"""
Reader for flat ``key = value`` configuration files.
"""

from typing import Dict

from ..errors import ConfigError

def read_config(path: str) -> Dict[str, str]:
    """
    Parse a flat key=value text file.

    Blank lines and lines starting with ``#`` are ignored. Keys are
    lower-cased; values keep their text with surrounding whitespace removed.

    Args:
        path: Path to the configuration file

    Returns:
        Dictionary of raw string values
    """
    values: Dict[str, str] = {}

    try:
        with open(path, "r") as handle:
            lines = handle.readlines()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")

    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")

        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"{path}:{number}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{number}: duplicate key '{key}'")
        values[key] = value.strip()

    return values


def parse_bool(value: str) -> bool:
    """Interpret common truthy/falsy spellings."""
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Not a boolean value: '{value}'")
