"""
Exception hierarchy for blindpdp.

Shaped after the PEP 249 exception tree: interface misuse and engine
failures are separate branches under one ``Error`` base. Every concrete
class carries a ``code`` that travels over the wire so remote callers can
raise the same class locally.
"""

from __future__ import annotations

from typing import Any


class Error(Exception):
    """Base exception for all blindpdp errors.

    It can be used to catch every exception raised by this package.
    """

    code = "error"


class Warning(Exception):
    """Exception raised for important warnings."""

    pass


class InterfaceError(Error):
    """Exception raised for misuse of the library or service surface.

    Raised for malformed input documents, bad configuration and transport
    problems, never for policy decisions.
    """

    code = "interface"


class EngineError(Error):
    """Exception raised by the decision engines themselves.

    Base class for errors that relate to keys, policies or constraints.
    """

    code = "engine"


# Interface errors


class ConfigurationError(InterfaceError):
    """Exception raised for configuration errors."""

    code = "configuration"


class PolicySyntaxError(InterfaceError):
    """Exception raised when policy or condition text cannot be parsed."""

    code = "policy-syntax"

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class StoreFormatError(InterfaceError):
    """Exception raised for unreadable store, key or TKMA documents."""

    code = "store-format"


class ProtocolError(InterfaceError):
    """Exception raised for malformed wire payloads."""

    code = "protocol-error"

    def __init__(self, message: str, verb: str | None = None):
        self.verb = verb
        if verb:
            message = f"{verb}: {message}"
        super().__init__(message)


class ServiceConnectionError(InterfaceError):
    """Exception raised when the service cannot be reached."""

    code = "connection"

    def __init__(self, message: str, status_code: int | None = None):
        self.status_code = status_code
        super().__init__(message)


# Engine errors


class UserNotFoundError(EngineError):
    """Exception raised when a user has no server key in the key store."""

    code = "user-not-found"

    def __init__(self, user_id: str, message: str | None = None):
        self.user_id = user_id
        super().__init__(message or f"unknown user {user_id!r}")


class GenerationFailedError(EngineError):
    """Exception raised when group generation gives up."""

    code = "generation-failed"


class InvalidTreeError(EngineError):
    """Exception raised for structurally invalid policy trees."""

    code = "invalid-tree"


class InvalidHierarchyError(EngineError):
    """Exception raised for cyclic or dangling role hierarchies."""

    code = "invalid-hierarchy"


class InvalidConstraintError(EngineError):
    """Exception raised when a constraint tree fails shape validation."""

    code = "invalid-constraint"


class AlreadyIssuedError(EngineError):
    """Exception raised when the TKMA is asked to issue a key twice."""

    code = "already-issued"

    def __init__(self, user_id: str):
        self.user_id = user_id
        super().__init__(f"keys already issued for {user_id!r}; revoke first")


class NumericRangeError(EngineError):
    """Exception raised for numeric values that do not fit their bit width."""

    code = "range-error"


class DuplicateAttributeError(EngineError):
    """Exception raised when one request carries two values for one name."""

    code = "duplicate-attribute"


_OPTIONAL_ATTRS: dict[type[Error], tuple[str, ...]] = {
    PolicySyntaxError: ("position",),
    ProtocolError: ("verb",),
    ServiceConnectionError: ("status_code",),
}


def _concrete_classes() -> dict[str, type[Error]]:
    found: dict[str, type[Error]] = {}
    pending: list[type[Error]] = [Error]
    while pending:
        cls = pending.pop()
        found.setdefault(cls.code, cls)
        pending.extend(cls.__subclasses__())
    return found


def from_code(code: str, message: str, **attrs: Any) -> Error:
    """Rebuild an exception received over the wire.

    Unknown codes fall back to the base ``Error``. Attributes that the
    target class takes in its constructor are forwarded, the rest are set
    on the instance.
    """
    cls = _concrete_classes().get(code, Error)
    if cls is UserNotFoundError:
        exc: Error = UserNotFoundError(attrs.pop("user_id", ""), message)
    elif cls is AlreadyIssuedError:
        exc = AlreadyIssuedError(attrs.pop("user_id", ""))
        exc.args = (message,)
    else:
        exc = cls.__new__(cls)
        Exception.__init__(exc, message)
    for name in _OPTIONAL_ATTRS.get(cls, ()):
        attrs.setdefault(name, None)
    for name, value in attrs.items():
        setattr(exc, name, value)
    return exc
