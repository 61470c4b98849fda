# src/libs/logger.py
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

# Constants for better maintainability
LOG_FILE = "bairc.log"
LOG_FORMAT_FILE = "%(asctime)s - %(name)s - %(levelname)s - %(message)s (%(lineno)d)"
LOG_FORMAT_STREAM = "%(asctime)s - %(name)s - %(levelname)s:\n  %(message)s"


def resolve_log_level(name: Optional[str], default: int = logging.WARNING) -> int:
    """
    Translate a level name such as "info" into a logging level.

    Args:
        name (Optional[str]): Level name, case-insensitive. None keeps the default.
        default (int, optional): Level used for missing or unknown names. Defaults to WARNING.

    Returns:
        int: The logging level.
    """
    if not name:
        return default
    level = getattr(logging, str(name).upper(), None)
    return level if isinstance(level, int) else default


def setup_logger(
    log_level: int = logging.INFO,
    log_to_console: bool = True,
    log_file: Optional[str] = LOG_FILE,
) -> None:
    """
    Set up the root logger with the specified log level.

    Args:
        log_level (int, optional): Logging level (e.g., logging.DEBUG, logging.INFO). Defaults to logging.INFO.
        log_to_console (bool, optional): Whether to add a console stream handler (stderr). Defaults to True.
        log_file (Optional[str], optional): Rotating log file path; None disables file logging.
    """
    logger = logging.getLogger()

    # Prevent adding multiple handlers if already configured
    if not logger.hasHandlers():
        logger.setLevel(log_level)

        if log_file:
            # Rotating File Handler
            file_handler = RotatingFileHandler(
                log_file, maxBytes=5 * 1024 * 1024, backupCount=3
            )  # 5MB per file, keep 3 backups
            file_handler.setLevel(log_level)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT_FILE))
            logger.addHandler(file_handler)

        if log_to_console:
            # Stream Handler, stderr keeps stdout free for JSON reports
            stream_handler = logging.StreamHandler()
            stream_handler.setLevel(log_level)
            stream_handler.setFormatter(logging.Formatter(LOG_FORMAT_STREAM))
            logger.addHandler(stream_handler)
