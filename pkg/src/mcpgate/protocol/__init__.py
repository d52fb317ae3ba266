"""JSON-RPC 2.0 message codec and the two MCP transports."""

from .messages import (
    JSONRPC_VERSION,
    MAX_FRAME_BYTES,
    InvariantViolation,
    NotJson,
    NotUtf8,
    ProtocolError,
    ProtocolViolation,
    RpcError,
    RpcMessage,
    decode_message,
    encode_message,
)
from .tools import ToolDescriptor, parse_listing
from .stdio import (
    ConnectionFailed,
    ExecutionForbidden,
    SpawnFailed,
    StdioEndpoint,
    TransportError,
)
from .http import SESSION_HEADER, HttpEndpoint, HttpStatusError, StreamCorrupted

__all__ = [
    "JSONRPC_VERSION",
    "MAX_FRAME_BYTES",
    "ProtocolError",
    "NotUtf8",
    "NotJson",
    "ProtocolViolation",
    "InvariantViolation",
    "RpcError",
    "RpcMessage",
    "decode_message",
    "encode_message",
    "ToolDescriptor",
    "parse_listing",
    "TransportError",
    "SpawnFailed",
    "ExecutionForbidden",
    "ConnectionFailed",
    "StdioEndpoint",
    "HttpEndpoint",
    "HttpStatusError",
    "StreamCorrupted",
    "SESSION_HEADER",
]
