"""Length-prefixed message framing for the stream transport.

Every message is one type byte, a 4-byte big-endian length that counts
itself, and the payload. A request payload is the verb, a NUL byte and a
JSON body; a response payload is a JSON body. Errors travel as
NUL-terminated ``<field byte><value>`` pairs, the same layout PostgreSQL
uses for ErrorResponse.
"""

from __future__ import annotations

import json
import struct
from typing import Any, Awaitable, Callable

from .errors import Error, ProtocolError, ServiceConnectionError, from_code

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

REQUEST_MSG = ord("Q")
RESPONSE_MSG = ord("R")
ERROR_RESPONSE_MSG = ord("E")
TERMINATE_MSG = ord("X")

MAX_MESSAGE_BYTES = 64 * 1024 * 1024

_ERROR_FIELD_NAMES: dict[int, str] = {
    ord("C"): "code",
    ord("M"): "message",
    ord("V"): "verb",
    ord("U"): "user_id",
    ord("P"): "position",
}
_ERROR_FIELD_TYPES = {name: code for code, name in _ERROR_FIELD_NAMES.items()}


# ---------------------------------------------------------------------------
# Buffered reader
# ---------------------------------------------------------------------------


class _BufferedReader:
    """Serves exact byte counts from a chunked source.

    Transport chunks do not align with message boundaries.
    """

    __slots__ = ("_recv", "_buffer", "_pos")

    def __init__(self, recv_fn: Callable[[], Awaitable[bytes]]) -> None:
        self._recv = recv_fn
        self._buffer = bytearray()
        self._pos = 0

    async def read_exact(self, n: int) -> bytes:
        while (self._pos + n) > len(self._buffer):
            chunk = await self._recv()
            if not chunk:
                raise ServiceConnectionError("Connection closed while reading")
            self._buffer.extend(chunk)

        result = bytes(self._buffer[self._pos : self._pos + n])
        self._pos += n

        if self._pos > 65536:
            del self._buffer[: self._pos]
            self._pos = 0

        return result

    @property
    def has_pending_data(self) -> bool:
        return self._pos < len(self._buffer)

    async def read_message(self) -> tuple[int, bytes]:
        """``(message_type, payload)``; the payload excludes the length field."""
        header = await self.read_exact(5)
        msg_type = header[0]
        (length,) = struct.unpack("!I", header[1:5])
        payload_len = length - 4
        if payload_len < 0 or length > MAX_MESSAGE_BYTES:
            raise ProtocolError(f"Invalid message length {length} for type {chr(msg_type)}")
        payload = await self.read_exact(payload_len) if payload_len > 0 else b""
        return msg_type, payload


# ---------------------------------------------------------------------------
# Message builders and parsers
# ---------------------------------------------------------------------------


def _json_bytes(body: Any) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def build_message(msg_type: int, payload: bytes = b"") -> bytes:
    length = len(payload) + 4
    return bytes([msg_type]) + struct.pack("!I", length) + payload


def build_request(verb: str, body: dict[str, Any]) -> bytes:
    if not verb or "\x00" in verb:
        raise ProtocolError("verb must be a non-empty string without NUL", verb)
    return build_message(REQUEST_MSG, verb.encode() + b"\x00" + _json_bytes(body))


def build_response(body: dict[str, Any]) -> bytes:
    return build_message(RESPONSE_MSG, _json_bytes(body))


def build_terminate() -> bytes:
    return build_message(TERMINATE_MSG)


def error_fields(exc: Error) -> dict[str, str]:
    """Wire fields of an error; shared by the stream and HTTP transports."""
    fields = {"code": exc.code, "message": str(exc)}
    for name in ("verb", "user_id", "position"):
        value = getattr(exc, name, None)
        if value is not None:
            fields[name] = str(value)
    return fields


def error_from_fields(fields: dict[str, str]) -> Error:
    fields = {k: v for k, v in fields.items() if k in _ERROR_FIELD_TYPES}
    code = fields.pop("code", "error")
    message = fields.pop("message", "Service error")
    verb = fields.get("verb")
    if code == ProtocolError.code and verb:
        return ProtocolError(message.removeprefix(f"{verb}: "), verb)
    attrs: dict[str, Any] = dict(fields)
    if "position" in attrs:
        attrs["position"] = int(attrs["position"])
    return from_code(code, message, **attrs)


def build_error(exc: Error) -> bytes:
    payload = bytearray()
    for name, value in error_fields(exc).items():
        payload.append(_ERROR_FIELD_TYPES[name])
        payload += value.replace("\x00", "").encode() + b"\x00"
    payload.append(0)
    return build_message(ERROR_RESPONSE_MSG, bytes(payload))


def parse_json_body(data: bytes, verb: str | None = None) -> dict[str, Any]:
    try:
        body = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"body is not JSON: {e}", verb) from e
    if not isinstance(body, dict):
        raise ProtocolError("body must be a JSON object", verb)
    return body


def parse_request(payload: bytes) -> tuple[str, dict[str, Any]]:
    try:
        null_pos = payload.index(0)
    except ValueError:
        raise ProtocolError("request has no verb terminator") from None
    verb = payload[:null_pos].decode("utf-8", errors="replace")
    if not verb:
        raise ProtocolError("request has an empty verb")
    return verb, parse_json_body(payload[null_pos + 1 :], verb)


def _parse_error_fields(payload: bytes) -> dict[str, str]:
    fields: dict[str, str] = {}
    pos = 0
    while pos < len(payload):
        field_type = payload[pos]
        pos += 1
        if field_type == 0:
            break
        null_pos = payload.index(0, pos)
        value = payload[pos:null_pos].decode("utf-8", errors="replace")
        pos = null_pos + 1
        name = _ERROR_FIELD_NAMES.get(field_type, f"unknown_{chr(field_type)}")
        fields[name] = value
    return fields


def error_from_payload(payload: bytes) -> Error:
    return error_from_fields(_parse_error_fields(payload))


# ---------------------------------------------------------------------------
# Client side
# ---------------------------------------------------------------------------


class WireProtocol:
    """One request/response exchange at a time over a byte stream.

    Transport-agnostic: *send_fn* and *recv_fn* provide the stream.
    """

    def __init__(
        self,
        send_fn: Callable[[bytes], Awaitable[None]],
        recv_fn: Callable[[], Awaitable[bytes]],
    ) -> None:
        self._send = send_fn
        self._reader = _BufferedReader(recv_fn)

    @property
    def is_reusable(self) -> bool:
        return not self._reader.has_pending_data

    async def call(self, verb: str, body: dict[str, Any]) -> dict[str, Any]:
        await self._send(build_request(verb, body))
        msg_type, payload = await self._reader.read_message()
        if msg_type == RESPONSE_MSG:
            return parse_json_body(payload, verb)
        if msg_type == ERROR_RESPONSE_MSG:
            raise error_from_payload(payload)
        raise ProtocolError(f"unexpected message type {chr(msg_type)!r}", verb)

    async def terminate(self) -> None:
        try:
            await self._send(build_terminate())
        except Exception:
            pass
