"""
Logging utilities for nnpost.

Provides centralized logging setup with console and optional file handlers.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

ROOT_LOGGER_NAME = "nnpost"


def setup_logging(
    log_dir: Optional[Union[str, Path]] = None,
    log_level: int = logging.INFO,
    console_level: int = logging.INFO,
    file_level: int = logging.DEBUG,
    logger_name: str = ROOT_LOGGER_NAME
) -> logging.Logger:
    """
    Set up logging with a console handler and, if requested, a file handler.

    When ``log_dir`` is given the directory is created and a timestamped
    ``nnpost_YYYYmmdd_HHMMSS.log`` file receives detailed records.

    Args:
        log_dir: Directory for log files. No file is written when None.
        log_level: Overall log level (default: INFO)
        console_level: Console handler log level (default: INFO)
        file_level: File handler log level (default: DEBUG)
        logger_name: Name of the logger (default: "nnpost")

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(logger_name)
    logger.setLevel(min(log_level, file_level) if log_dir is not None else log_level)

    # Avoid adding handlers multiple times
    if logger.handlers:
        return logger

    console_formatter = logging.Formatter('%(levelname)-8s | %(message)s')
    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = log_dir / f"nnpost_{timestamp}.log"

        detailed_formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(file_level)
        file_handler.setFormatter(detailed_formatter)
        logger.addHandler(file_handler)

        logger.debug(f"Logging initialized - Log file: {log_file}")

    logger.debug(
        f"Log levels - Console: {logging.getLevelName(console_level)}, "
        f"File: {logging.getLevelName(file_level) if log_dir is not None else 'off'}"
    )
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger below the nnpost root.

    Args:
        name: Child name, e.g. "quadrature". None returns the root logger.

    Returns:
        Logger instance
    """
    if not name:
        return logging.getLogger(ROOT_LOGGER_NAME)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
