"""Optional logfire integration.

logfire is an extra; without it spans are no-ops and log lines go to the
``blindpdp`` stdlib logger.
"""

from __future__ import annotations

import logging
from contextlib import AbstractContextManager, nullcontext
from typing import Any

try:
    import logfire as _logfire
except ImportError:  # pragma: no cover - exercised with logfire blocked
    _logfire = None

logger = logging.getLogger("blindpdp")

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warn": logging.WARNING,
    "error": logging.ERROR,
}


def span(name: str, **attributes: Any) -> AbstractContextManager[Any]:
    if _logfire is None:
        return nullcontext()
    return _logfire.span(name, **attributes)


def log(level: str, message: str, **attributes: Any) -> None:
    if _logfire is not None:
        getattr(_logfire, level)(message, **attributes)
        return
    if attributes:
        details = " ".join(f"{k}={v}" for k, v in attributes.items())
        message = f"{message} [{details}]"
    logger.log(_LEVELS[level], message)
