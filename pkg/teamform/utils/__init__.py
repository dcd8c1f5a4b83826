"""
Utility modules for the team formation tool.
"""

from .logging_setup import setup_logging
from .config import read_config, parse_bool
from .stats import mean_confidence_interval, format_interval
