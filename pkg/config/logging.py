"""
Logging configuration with a tag-colored console handler.

Usage:
    from config.logging import get_logger
    logger = get_logger("verify")
    logger.info("Check finished", extra={"check": "exchange_involution"})
"""

from __future__ import annotations

import logging
import os
import sys
from datetime import datetime
from typing import TextIO

# ANSI color codes for console output
COLORS = {
    "DEBUG": "\033[36m",  # Cyan
    "INFO": "\033[32m",  # Green
    "WARNING": "\033[33m",  # Yellow
    "ERROR": "\033[31m",  # Red
    "CRITICAL": "\033[35m",  # Magenta
    "RESET": "\033[0m",
}

# Component-specific colors for tags
TAG_COLORS = {
    "exterior": "\033[94m",  # Blue
    "fields": "\033[95m",  # Magenta
    "geometry": "\033[96m",  # Cyan
    "triple": "\033[93m",  # Yellow
    "dynamics": "\033[92m",  # Green
    "verify": "\033[91m",  # Red
    "cli": "\033[97m",  # White
}

# Extras shown after the message, in this order
_EXTRA_KEYS = ("problem", "check", "sample")


def _use_color(stream: TextIO) -> bool:
    if os.getenv("NO_COLOR"):
        return False
    isatty = getattr(stream, "isatty", None)
    return bool(isatty and isatty())


class ColoredConsoleFormatter(logging.Formatter):
    """Formatter that prints `HH:MM:SS LEVEL [tag] message (extras)`."""

    def __init__(self, color: bool = True):
        super().__init__()
        self._color = color

    def _paint(self, code: str, text: str) -> str:
        if not self._color:
            return text
        return f"{code}{text}{COLORS['RESET']}"

    def format(self, record: logging.LogRecord) -> str:
        tag = record.name
        timestamp = datetime.now().strftime("%H:%M:%S")
        level_str = self._paint(COLORS.get(record.levelname, ""), f"{record.levelname:8}")
        tag_str = self._paint(TAG_COLORS.get(tag, "\033[37m"), f"[{tag}]")

        extra_parts = [
            f"{key}={getattr(record, key)}"
            for key in _EXTRA_KEYS
            if getattr(record, key, None) is not None
        ]
        extra_str = f" ({', '.join(extra_parts)})" if extra_parts else ""
        msg = f"{timestamp} {level_str} {tag_str} {record.getMessage()}{extra_str}"

        if record.exc_info:
            msg += "\n" + self.formatException(record.exc_info)

        return msg


# Global state
_handler: logging.Handler | None = None
_initialized = False


def _get_console_level() -> int:
    """Get console log level from environment variable."""
    level_name = os.getenv("LOG_LEVEL", "INFO").upper()
    return getattr(logging, level_name, logging.INFO)


def init_logging(console_level: int | None = None, stream: TextIO | None = None):
    """Initialize the console handler.

    Args:
        console_level: Level for the console handler (default: LOG_LEVEL env)
        stream: Output stream (default: stderr, stdout stays free for reports)
    """
    global _handler, _initialized

    if _initialized:
        return

    if console_level is None:
        console_level = _get_console_level()
    if stream is None:
        stream = sys.stderr

    _handler = logging.StreamHandler(stream)
    _handler.setLevel(console_level)
    _handler.setFormatter(ColoredConsoleFormatter(color=_use_color(stream)))

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(_handler)

    _initialized = True


def set_console_level(level: int) -> None:
    """Change the console level after init (used by the CLI --verbose flag)."""
    if _handler:
        _handler.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    """Get a logger with the given name."""
    if not _initialized:
        init_logging()
    return logging.getLogger(name)


def shutdown_logging():
    """Detach the console handler."""
    global _handler, _initialized
    if _handler:
        logging.getLogger().removeHandler(_handler)
        _handler = None
    _initialized = False
