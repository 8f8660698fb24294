"""
Logging utility module for the reconstruction pipeline.
"""
import logging
import sys


def setup_logger(name: str, level: str = "INFO") -> logging.Logger:
    """
    Setup logger with consistent formatting.

    Module loggers under a package configured by log_config.LOGGING_CONFIG stay at
    NOTSET and follow the package level.

    Args:
        name: Logger name
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Already configured through log_config.LOGGING_CONFIG
    if logger.handlers and any(h.formatter for h in logger.handlers):
        return logger

    # A parent logger configured by dictConfig already prints for us
    parent = logger.parent
    while parent is not None and parent.name != "root":
        if parent.handlers:
            return logger
        parent = parent.parent

    logger.setLevel(getattr(logging, level.upper()))

    if logger.handlers:
        return logger

    logger.propagate = False

    handler = logging.StreamHandler(sys.stdout)
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger


def get_logger(name: str, level: str = "INFO") -> logging.Logger:
    """
    Get logger instance with automatic setup.

    Args:
        name: Logger name
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        Logger instance
    """
    logger = logging.getLogger(name)

    if not logger.handlers:
        return setup_logger(name, level)

    return logger


def set_level(level: str) -> None:
    """
    Apply one level to every package logger declared in the logging config, and to
    module loggers below them that carry a level of their own.
    """
    from log_config import LOGGING_CONFIG

    value = getattr(logging, level.upper())
    for name in LOGGING_CONFIG["loggers"]:
        logging.getLogger(name).setLevel(value)

    packages = tuple(f"{name}." for name in LOGGING_CONFIG["loggers"])
    for name, logger in list(logging.root.manager.loggerDict.items()):
        if isinstance(logger, logging.Logger) and name.startswith(packages) \
                and logger.level != logging.NOTSET:
            logger.setLevel(value)
