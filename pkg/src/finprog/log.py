"""Logging setup: rich console output by default, JSON lines on request."""
import logging
import os
import sys

from pythonjsonlogger.json import JsonFormatter
from rich.console import Console
from rich.logging import RichHandler

_ROOT = "finprog"


def get_logger(name: str) -> logging.Logger:
    if not name.startswith(_ROOT):
        name = f"{_ROOT}.{name}"
    return logging.getLogger(name)


def configure_logging(level: str = "WARNING", json_logs: bool | None = None) -> None:
    """Attach a single handler to the package logger (stderr only)."""
    if json_logs is None:
        json_logs = os.getenv("FINPROG_LOG_JSON", "") not in ("", "0", "false")

    logger = logging.getLogger(_ROOT)
    for h in list(logger.handlers):
        logger.removeHandler(h)

    if json_logs:
        handler: logging.Handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    else:
        handler = RichHandler(console=Console(stderr=True), show_path=False)

    logger.addHandler(handler)
    logger.setLevel(level.upper())
