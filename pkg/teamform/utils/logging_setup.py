"""
Logging setup module for the team formation tool.
"""

import logging
import os
from typing import Optional

def setup_logging(log_file: Optional[str] = "teamform.log", log_level: int = logging.INFO) -> logging.Logger:
    """
    Set up logging configuration.

    Args:
        log_file: Path to the log file, or None for console output only
        log_level: Logging level (default: INFO)

    Returns:
        Logger instance for the teamform package
    """
    handlers = [logging.StreamHandler()]

    if log_file:
        # Ensure parent directory exists for log file
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)
        handlers.insert(0, logging.FileHandler(log_file))

    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )

    logger = logging.getLogger("teamform")
    logger.setLevel(log_level)
    logger.info("Team formation tool initialized")

    return logger
