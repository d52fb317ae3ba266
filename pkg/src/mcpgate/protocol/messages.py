"""JSON-RPC 2.0 message parsing, validation, and serialization.

All gateway traffic is carried as single JSON-RPC 2.0 objects, UTF-8
encoded, one object per frame.  Decoding is deliberately strict:
duplicate keys, batch arrays, wrong version strings, and id/field
violations are all rejected with a typed error rather than coerced,
so nothing ambiguous ever reaches the policy or scanning layers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union

JSONRPC_VERSION = "2.0"

# Oversize frames are rejected outright; a hostile server must not be able
# to balloon gateway memory with one message.
MAX_FRAME_BYTES = 10 * 1024 * 1024

MessageId = Union[int, str]

_KNOWN_KEYS = ("jsonrpc", "id", "method", "params", "result", "error")


class ProtocolError(Exception):
    """Base class for framing/validation failures.

    ``offset`` is the byte offset of the problem where known, else None.
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset


class NotUtf8(ProtocolError):
    """Frame bytes are not valid UTF-8."""


class NotJson(ProtocolError):
    """Frame is not a well-formed JSON document (includes duplicate keys)."""


class ProtocolViolation(ProtocolError):
    """Well-formed JSON that is not a valid single JSON-RPC 2.0 message."""


class InvariantViolation(ProtocolError):
    """An in-memory message failed validation prior to encoding."""


@dataclass
class RpcError:
    code: int
    message: str
    data: Any = None

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.data is not None:
            wire["data"] = self.data
        return wire

    @classmethod
    def from_wire(cls, obj: Any) -> "RpcError":
        if not isinstance(obj, dict):
            raise ProtocolViolation("error member must be an object")
        unknown = set(obj) - {"code", "message", "data"}
        if unknown:
            raise ProtocolViolation(f"unexpected members in error object: {sorted(unknown)}")
        code = obj.get("code")
        if not isinstance(code, int) or isinstance(code, bool):
            raise ProtocolViolation("error.code must be an integer")
        message = obj.get("message")
        if not isinstance(message, str):
            raise ProtocolViolation("error.message must be a string")
        return cls(code=code, message=message, data=obj.get("data"))


@dataclass
class RpcMessage:
    """One parsed JSON-RPC message: request, response, or notification.

    ``extra`` holds unknown top-level members, preserved verbatim for
    forward compatibility but never interpreted.
    """

    kind: str
    id: Optional[MessageId] = None
    method: Optional[str] = None
    params: Any = None
    result: Any = None
    error: Optional[RpcError] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def request(cls, id: MessageId, method: str, params: Any = None) -> "RpcMessage":
        return cls(kind="request", id=id, method=method, params=params)

    @classmethod
    def notification(cls, method: str, params: Any = None) -> "RpcMessage":
        return cls(kind="notification", method=method, params=params)

    @classmethod
    def response(cls, id: MessageId, result: Any) -> "RpcMessage":
        return cls(kind="response", id=id, result=result)

    @classmethod
    def error_response(cls, id: MessageId, code: int, message: str, data: Any = None) -> "RpcMessage":
        return cls(kind="response", id=id, error=RpcError(code, message, data))

    @property
    def is_error(self) -> bool:
        return self.kind == "response" and self.error is not None

    def validate(self) -> None:
        if self.kind not in ("request", "response", "notification"):
            raise InvariantViolation(f"unknown message kind {self.kind!r}")
        if self.id is not None and not _valid_id(self.id):
            raise InvariantViolation("id must be an integer or string")
        if self.params is not None and not isinstance(self.params, (dict, list)):
            raise InvariantViolation("params must be a structured value")
        if self.kind == "request":
            if self.id is None:
                raise InvariantViolation("request requires an id")
            if not self.method:
                raise InvariantViolation("request requires a nonempty method")
            if self.result is not None or self.error is not None:
                raise InvariantViolation("request must not carry result or error")
        elif self.kind == "notification":
            if self.id is not None:
                raise InvariantViolation("notification must not carry an id")
            if not self.method:
                raise InvariantViolation("notification requires a nonempty method")
            if self.result is not None or self.error is not None:
                raise InvariantViolation("notification must not carry result or error")
        else:  # response
            if self.id is None:
                raise InvariantViolation("response requires an id")
            if self.method is not None:
                raise InvariantViolation("response must not carry a method")
            if self.params is not None:
                raise InvariantViolation("response must not carry params")
            # error=None means success; a null result is legal and serialized
            # explicitly, so "exactly one member" still holds on the wire.
            if self.result is not None and self.error is not None:
                raise InvariantViolation("response cannot carry both result and error")

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"jsonrpc": JSONRPC_VERSION}
        if self.id is not None:
            wire["id"] = self.id
        if self.method is not None:
            wire["method"] = self.method
        if self.params is not None:
            wire["params"] = self.params
        if self.kind == "response":
            if self.error is not None:
                wire["error"] = self.error.to_wire()
            else:
                wire["result"] = self.result
        for key, value in self.extra.items():
            wire[key] = value
        return wire


def _valid_id(value: Any) -> bool:
    return (isinstance(value, str) or isinstance(value, int)) and not isinstance(value, bool)


def _pairs_rejecting_duplicates(pairs: list) -> dict:
    obj: dict = {}
    for key, value in pairs:
        if key in obj:
            # Last-wins parsing would let an attacker smuggle a second value
            # past the scanner; treat the document as malformed instead.
            raise _DuplicateKey(key)
        obj[key] = value
    return obj


class _DuplicateKey(Exception):
    def __init__(self, key: str):
        super().__init__(key)
        self.key = key


def decode_message(data: bytes) -> RpcMessage:
    """Decode one complete frame into a validated :class:`RpcMessage`.

    Raises :class:`NotUtf8`, :class:`NotJson`, or
    :class:`ProtocolViolation`; never returns a partially-populated message.
    """
    if len(data) > MAX_FRAME_BYTES:
        raise ProtocolViolation(f"frame exceeds {MAX_FRAME_BYTES} bytes")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NotUtf8(f"invalid UTF-8 at byte {exc.start}", offset=exc.start) from exc
    try:
        doc = json.loads(text, object_pairs_hook=_pairs_rejecting_duplicates)
    except _DuplicateKey as exc:
        raise NotJson(f"duplicate object key {exc.key!r}") from exc
    except json.JSONDecodeError as exc:
        raise NotJson(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc

    if isinstance(doc, list):
        raise ProtocolViolation("batch arrays are not supported")
    if not isinstance(doc, dict):
        raise ProtocolViolation("top-level value must be an object")
    if doc.get("jsonrpc") != JSONRPC_VERSION:
        raise ProtocolViolation('jsonrpc member must equal "2.0"')

    msg_id = doc.get("id")
    if "id" in doc:
        if not _valid_id(msg_id):
            raise ProtocolViolation("id must be an integer or string")
    method = doc.get("method")
    params = doc.get("params")
    if "params" in doc and not isinstance(params, (dict, list)):
        raise ProtocolViolation("params must be an object or array")
    extra = {k: v for k, v in doc.items() if k not in _KNOWN_KEYS}

    if "method" in doc:
        if not isinstance(method, str) or not method:
            raise ProtocolViolation("method must be a nonempty string")
        if "result" in doc or "error" in doc:
            raise ProtocolViolation("request/notification must not carry result or error")
        if "id" in doc:
            msg = RpcMessage(kind="request", id=msg_id, method=method, params=params, extra=extra)
        else:
            msg = RpcMessage(kind="notification", method=method, params=params, extra=extra)
    else:
        if "id" not in doc:
            raise ProtocolViolation("message has neither method nor id")
        has_result = "result" in doc
        has_error = "error" in doc
        if has_result == has_error:
            raise ProtocolViolation("response requires exactly one of result and error")
        if "params" in doc:
            raise ProtocolViolation("response must not carry params")
        error = RpcError.from_wire(doc["error"]) if has_error else None
        msg = RpcMessage(kind="response", id=msg_id, result=doc.get("result"), error=error, extra=extra)

    msg.validate()
    return msg


def encode_message(msg: RpcMessage) -> bytes:
    """Serialize to one line of UTF-8 with no embedded newline.

    Raises :class:`InvariantViolation` if the message is internally
    inconsistent; ``decode_message(encode_message(m))`` round-trips.
    """
    try:
        msg.validate()
    except InvariantViolation:
        raise
    encoded = json.dumps(msg.to_wire(), ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    if b"\n" in encoded or b"\r" in encoded:
        raise InvariantViolation("encoded frame contains a raw newline")
    if len(encoded) > MAX_FRAME_BYTES:
        raise InvariantViolation(f"encoded frame exceeds {MAX_FRAME_BYTES} bytes")
    return encoded
