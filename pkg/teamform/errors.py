"""
Exception types for the team formation tool.

Every error carries a stable ``code`` that the CLI prints as
``ERROR_CODE=<code>: <message>`` for automation tools.
"""

from typing import List, Optional


class TeamFormError(Exception):
    """Base class for all team formation errors."""

    code = "TEAMFORM_ERROR"


class InvalidBoundsError(TeamFormError):
    """Team-size bounds are out of range or admit no partition."""

    code = "INVALID_BOUNDS"


class InvalidPartitionError(TeamFormError):
    """A partition is not a disjoint cover with legal team sizes."""

    code = "INVALID_PARTITION"


class DegeneratePreferencesError(TeamFormError):
    """
    One or more agents have an all-zero utility row.

    Args:
        agents: Indices of the offending agents
        game: The game with every other row normalized (offending rows stay zero)
    """

    code = "DEGENERATE_PREFS"

    def __init__(self, message: str, agents: Optional[List[int]] = None, game=None):
        super().__init__(message)
        self.agents = list(agents or [])
        self.game = game


class CapacityExceededError(TeamFormError):
    """An exhaustive search would exceed its configured size guard."""

    code = "CAPACITY_EXCEEDED"


class DataParseError(TeamFormError):
    """An input matrix file is malformed."""

    code = "PARSE_ERROR"


class CannotDeviateError(TeamFormError):
    """A utility row has no distinct permutation to report instead."""

    code = "CANNOT_DEVIATE"


class ConfigError(TeamFormError):
    """An experiment configuration is incomplete or inconsistent."""

    code = "CONFIG_ERROR"
