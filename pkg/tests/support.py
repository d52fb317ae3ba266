"""Shared helpers: seeded message generator and malformed-frame corpus."""

from __future__ import annotations

import random
import string

from mcpgate.protocol import NotJson, NotUtf8, ProtocolViolation, RpcMessage

_METHODS = [
    "initialize",
    "tools/list",
    "tools/call",
    "resources/read",
    "prompts/get",
    "notifications/tools/list_changed",
    "ping",
]

_TEXT_POOL = (
    string.ascii_letters
    + string.digits
    + " _-./:{}[]"
    + "äöüßéèñ中文字符絵文字"
    + "  "  # awkward whitespace that must survive round trips
)


def _rand_text(rng: random.Random, lo: int = 0, hi: int = 40) -> str:
    return "".join(rng.choice(_TEXT_POOL) for _ in range(rng.randint(lo, hi)))


def _rand_value(rng: random.Random, depth: int = 0):
    kinds = ["str", "int", "float", "bool", "null"]
    if depth < 3:
        kinds += ["list", "dict"]
    kind = rng.choice(kinds)
    if kind == "str":
        return _rand_text(rng)
    if kind == "int":
        return rng.randint(-(2**40), 2**40)
    if kind == "float":
        # Round so repr/parse round trips exactly.
        return round(rng.uniform(-1e6, 1e6), 6)
    if kind == "bool":
        return rng.choice([True, False])
    if kind == "null":
        return None
    if kind == "list":
        return [_rand_value(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {_rand_text(rng, 1, 12): _rand_value(rng, depth + 1) for _ in range(rng.randint(0, 4))}


def random_message(rng: random.Random) -> RpcMessage:
    """One structurally valid message of a random kind."""
    kind = rng.choice(["request", "request", "notification", "response", "error"])
    msg_id = rng.choice([rng.randint(0, 10**9), "req-" + _rand_text(rng, 4, 12)])
    if kind == "request":
        params = rng.choice(
            [None, {_rand_text(rng, 1, 10): _rand_value(rng) for _ in range(rng.randint(0, 3))}]
        )
        msg = RpcMessage.request(msg_id, rng.choice(_METHODS), params)
    elif kind == "notification":
        msg = RpcMessage.notification(rng.choice(_METHODS), rng.choice([None, {"n": _rand_value(rng)}]))
    elif kind == "response":
        msg = RpcMessage.response(msg_id, _rand_value(rng))
    else:
        msg = RpcMessage.error_response(
            msg_id,
            rng.choice([-32600, -32601, -32010, -32014]),
            _rand_text(rng, 1, 60),
            rng.choice([None, {"reason_code": "TOOL_NOT_ALLOWED"}]),
        )
    if rng.random() < 0.2:
        msg.extra["_meta" if rng.random() < 0.5 else "x-" + _rand_text(rng, 1, 6)] = _rand_value(rng)
    return msg


# (frame bytes, expected error class) — every entry must fail decoding.
MALFORMED_CORPUS = [
    (b"\xff\xfe{}", NotUtf8),
    (b'{"jsonrpc":"2.0","id":1,"method":"m\xc3"}', NotUtf8),
    (b"", NotJson),
    (b"   ", NotJson),
    (b"{", NotJson),
    (b'{"jsonrpc":"2.0",}', NotJson),
    (b"nonsense", NotJson),
    (b'"just a string"', ProtocolViolation),
    (b"42", ProtocolViolation),
    (b"null", ProtocolViolation),
    (b'[{"jsonrpc":"2.0","id":1,"method":"a"}]', ProtocolViolation),
    (b"[]", ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"method":"a","method":"b"}', NotJson),
    (b'{"id":1,"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":"1.0","id":1,"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":2.0,"id":1,"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":true,"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1.5,"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":[1],"method":"a"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"method":42}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"method":"a","params":"s"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"method":"a","params":3}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","result":{}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"result":{},"error":{"code":-1,"message":"x"}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":{"message":"x"}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":{"code":"NaN","message":"x"}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":{"code":true,"message":"x"}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":{"code":-1}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":{"code":-1,"message":"x","bogus":1}}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"error":"broken"}', ProtocolViolation),
    (b'{"jsonrpc":"2.0","id":1,"result":{},"params":{}}', ProtocolViolation),
]


# -- audit-log tamper harness -------------------------------------------------
#
# Each helper takes the exported JSONL lines of a sealed log, applies one
# randomized corruption, and returns the expected first break so tests can
# assert both detection and localization.

import json as _json

TAMPER_KINDS = (
    "field",
    "field_rehash",
    "signature",
    "chain_hash",
    "prev_hash",
    "delete",
    "insert_dup",
    "swap",
)

_MUTABLE_FIELDS = ("user_id", "tool", "params_digest", "payload_summary", "timestamp")


def _flip_hex(value: str, rng: random.Random) -> str:
    i = rng.randrange(len(value))
    repl = rng.choice([d for d in "0123456789abcdef" if d != value[i]])
    return value[:i] + repl + value[i + 1 :]


def _dump(doc: dict) -> str:
    return _json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def tamper_lines(lines: list, rng: random.Random):
    """Corrupt one aspect of an exported log.

    Returns (new_lines, expected_broken_at, expected_cause).  Tail
    truncation is excluded: a pure hash chain cannot see it without an
    external head anchor, which gets its own dedicated test.
    """
    from mcpgate.provenance import ProvenanceRecord, chain_hash

    n = len(lines)
    kind = rng.choice(TAMPER_KINDS)
    lines = list(lines)
    if kind == "swap":
        k = rng.randrange(n - 1)
        lines[k], lines[k + 1] = lines[k + 1], lines[k]
        return lines, k, "gap"
    if kind == "delete":
        k = rng.randrange(n - 1)
        del lines[k]
        return lines, k, "gap"
    if kind == "insert_dup":
        k = rng.randrange(n)
        lines.insert(k + 1, lines[k])
        return lines, k, "gap"
    k = rng.randrange(n)
    doc = _json.loads(lines[k])
    if kind == "field":
        field = rng.choice(_MUTABLE_FIELDS)
        doc["record"][field] = str(doc["record"][field]) + "x"
        expected = (k, "hash")
    elif kind == "field_rehash":
        # forge without the signing key: fix the chain hash, signature stays stale
        doc["record"]["user_id"] += "x"
        rec = ProvenanceRecord.from_dict(doc["record"])
        doc["chain_hash"] = chain_hash(doc["prev_hash"], rec)
        expected = (k, "signature")
    elif kind == "signature":
        doc["signature"] = _flip_hex(doc["signature"], rng)
        expected = (k, "signature")
    elif kind == "chain_hash":
        doc["chain_hash"] = _flip_hex(doc["chain_hash"], rng)
        expected = (k, "hash")
    else:
        doc["prev_hash"] = _flip_hex(doc["prev_hash"], rng)
        expected = (k, "hash")
    lines[k] = _dump(doc)
    return lines, expected[0], expected[1]


# ---------------------------------------------------------------------------
# Minimal stdio MCP server that reports selected environment variables.
# Used to observe what the gateway's process spawning actually passes down.
# ---------------------------------------------------------------------------

ENV_ECHO_SERVER = r"""
import json, os, sys
REPORT = ("FIXTURE_TOKEN", "SECRET_FROM_PARENT", "PASSTHROUGH")
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    msg = json.loads(line)
    mid = msg.get("id")
    if mid is None:
        continue
    method = msg.get("method")
    if method == "initialize":
        result = {
            "protocolVersion": "2025-06-18",
            "capabilities": {"tools": {}},
            "serverInfo": {"name": "envecho", "version": "1.0"},
        }
    elif method == "tools/list":
        result = {"tools": [{
            "name": "env_report",
            "description": "Report selected environment variables.",
            "inputSchema": {"type": "object", "properties": {}},
        }]}
    elif method == "tools/call":
        body = {k: os.environ.get(k, "") for k in REPORT}
        result = {
            "content": [{"type": "text", "text": json.dumps(body, sort_keys=True)}],
            "isError": False,
        }
    else:
        result = {}
    sys.stdout.write(json.dumps({"jsonrpc": "2.0", "id": mid, "result": result}) + "\n")
    sys.stdout.flush()
"""
