"""Structured logging for the clearing engine.

Every module logs through ``logging.getLogger(__name__)``; this module installs a
single stderr handler on the ``engine`` logger that renders records either as
JSON lines or as plain text.
"""
import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict

ROOT_LOGGER = "engine"


class _JsonFormatter(logging.Formatter):
    _SKIP = frozenset({
        "msg", "args", "levelname", "levelno", "pathname", "filename",
        "module", "exc_info", "exc_text", "stack_info", "lineno",
        "funcName", "created", "msecs", "relativeCreated", "thread",
        "threadName", "processName", "process", "message", "name", "taskName",
    })

    def format(self, record: logging.LogRecord) -> str:
        obj: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            obj["exception"] = self.formatException(record.exc_info)
        for k, v in record.__dict__.items():
            if k not in self._SKIP:
                obj[k] = v
        return json.dumps(obj, default=str)


def configure_logging(level: str = "INFO", fmt: str = "json") -> logging.Logger:
    """
    Configure the package logger.

    Args:
        level (str): Log level name, e.g. "INFO" or "DEBUG".
        fmt (str): "json" for JSON lines, "text" for a human readable layout.

    Returns:
        logging.Logger: The configured ``engine`` logger.
    """
    lg = logging.getLogger(ROOT_LOGGER)
    for handler in list(lg.handlers):
        lg.removeHandler(handler)
    h = logging.StreamHandler(sys.stderr)
    if fmt == "json":
        h.setFormatter(_JsonFormatter())
    else:
        h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    lg.addHandler(h)
    lg.setLevel(getattr(logging, level.upper(), logging.INFO))
    lg.propagate = False
    return lg
