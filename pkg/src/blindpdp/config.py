"""Service configuration."""

from __future__ import annotations

import warnings
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, cast

from .errors import ConfigurationError
from .sde import PROFILE_NAMES

STORE_ENV = "BLINDPDP_STORE"
PROFILE_ENV = "BLINDPDP_PROFILE"
LISTEN_ENV = "BLINDPDP_LISTEN"
TRANSPORT_ENV = "BLINDPDP_TRANSPORT"
TEST_MODE_ENV = "BLINDPDP_TEST_MODE"

_KNOWN_ENV = frozenset({STORE_ENV, PROFILE_ENV, LISTEN_ENV, TRANSPORT_ENV, TEST_MODE_ENV})
_TRANSPORTS = ("stream", "http")
_TRUE = frozenset({"1", "true", "yes", "on"})
_FALSE = frozenset({"", "0", "false", "no", "off"})

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7643


def parse_listen(value: str) -> tuple[str, int]:
    """``host:port``; IPv6 hosts go in brackets (``[::1]:7643``)."""
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ConfigurationError(f"Listen address must be host:port, got {value!r}")
    host = host.removeprefix("[").removesuffix("]")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigurationError(f"Listen port must be an integer, got {port!r}") from None


def _flag(name: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigurationError(f"{name} must be a boolean flag, got {value!r}")


@dataclass(frozen=True)
class ServiceConfig:
    store_path: Path
    profile: Literal["toy", "prod"] = "prod"
    transport: Literal["stream", "http"] = "stream"
    host: str = DEFAULT_HOST
    port: int = DEFAULT_PORT
    test_mode: bool = False

    def __post_init__(self) -> None:
        if not str(self.store_path):
            raise ConfigurationError("store_path must not be empty")
        if self.profile not in PROFILE_NAMES:
            raise ConfigurationError(
                f"Unknown profile {self.profile!r}. Expected one of {list(PROFILE_NAMES)}."
            )
        if self.transport not in _TRANSPORTS:
            raise ConfigurationError(
                f"Unknown transport {self.transport!r}. Expected one of {list(_TRANSPORTS)}."
            )
        if not 0 <= self.port <= 65535:
            raise ConfigurationError(f"port must be in 0..65535, got {self.port}")

    @classmethod
    def from_env(
        cls, environ: Mapping[str, str], **overrides: object
    ) -> "ServiceConfig":
        """Read ``BLINDPDP_*`` variables; explicit overrides win."""
        for name in sorted(environ):
            if name.startswith("BLINDPDP_") and name not in _KNOWN_ENV:
                warnings.warn(f"Ignoring unknown setting {name}", stacklevel=2)

        values: dict[str, object] = {}
        if STORE_ENV in environ:
            values["store_path"] = Path(environ[STORE_ENV])
        if PROFILE_ENV in environ:
            values["profile"] = environ[PROFILE_ENV]
        if TRANSPORT_ENV in environ:
            values["transport"] = environ[TRANSPORT_ENV]
        if LISTEN_ENV in environ:
            values["host"], values["port"] = parse_listen(environ[LISTEN_ENV])
        if TEST_MODE_ENV in environ:
            values["test_mode"] = _flag(TEST_MODE_ENV, environ[TEST_MODE_ENV])
        values.update({k: v for k, v in overrides.items() if v is not None})

        if "store_path" not in values:
            raise ConfigurationError(f"Set {STORE_ENV} or pass --store")
        values["store_path"] = Path(cast(str, values["store_path"]))
        return cls(**values)  # type: ignore[arg-type]
