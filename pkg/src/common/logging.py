"""
Logging configuration for the GDELT knowledge-graph QA pipeline
"""
import logging
import sys
from typing import Dict

# Loggers handed out by setup_logger, so the CLI can re-level them together
_LOGGERS: Dict[str, logging.Logger] = {}
_LEVEL = logging.INFO


def setup_logger(name: str, level: int = None) -> logging.Logger:
    """
    Configure and return a logger instance.

    Args:
        name: Logger name (usually __name__)
        level: Logging level (default: the current pipeline level, INFO unless changed)

    Returns:
        Configured logger instance
    """
    level = _LEVEL if level is None else level
    logger = logging.getLogger(name)
    logger.setLevel(level)
    _LOGGERS[name] = logger

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    # stderr keeps stdout free for CLI payloads (sentences, GraphML, tables)
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(logging.DEBUG)

    # Format: timestamp - name - level - message
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handler.setFormatter(formatter)

    logger.addHandler(handler)
    logger.propagate = False

    return logger


def set_log_level(level: int) -> None:
    """Re-level every logger created through setup_logger (used by --verbose)."""
    global _LEVEL
    _LEVEL = level
    for logger in _LOGGERS.values():
        logger.setLevel(level)
