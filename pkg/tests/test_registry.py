"""Registry: canonical digests, diffing, discovery, approvals."""

from __future__ import annotations

import hashlib
import json
import random

import pytest

from mcpgate.protocol import ToolDescriptor
from mcpgate.registry import (
    AlreadyResolved,
    ChangeSet,
    NotAuthorized,
    RegistryError,
    RegistryStore,
    ServerManifest,
    ServerMismatch,
    ToolSnapshot,
    UnknownRequest,
    UnknownServer,
    diff_snapshots,
    listing_digest,
)

ADMIN = ("administrator",)


def fixed_clock():
    return "2025-01-01T00:00:00.000Z"


def make_store(tmp_path=None, events=None):
    path = str(tmp_path / "registry.json") if tmp_path else None
    store = RegistryStore(
        path=path,
        clock=fixed_clock,
        on_event=(lambda kind, payload: events.append((kind, payload))) if events is not None else None,
    )
    store.register_server(
        ServerManifest(
            server_id="mail",
            display_name="Mail server",
            transport_kind="stdio",
            address=["mail-server"],
            version_pin="1.0.0",
            approved_tools={"send_email", "list_inbox"},
        )
    )
    return store


def tool(name, description="", schema=None, annotations=None):
    return ToolDescriptor("mail", name, description, schema, annotations)


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


def oracle_canonical(tools):
    """Independent canonical form: sorted (name, field-dump) tuples."""
    return tuple(
        (
            t.name,
            json.dumps(t.description, sort_keys=True),
            json.dumps(t.input_schema, sort_keys=True),
            json.dumps(t.annotations, sort_keys=True),
        )
        for t in sorted(tools, key=lambda t: t.name)
    )


def test_digest_order_invariant():
    a = [tool("b"), tool("a", "first")]
    b = [tool("a", "first"), tool("b")]
    assert listing_digest(a) == listing_digest(b)


def test_digest_changes_on_description_edit():
    d1 = "Send an email to a recipient."
    before = [tool("send_email", d1)]
    after = [tool("send_email", d1 + " (now with BCC)")]
    # Oracle: recompute a hash over an independently canonicalized form.
    o1 = hashlib.sha256(repr(oracle_canonical(before)).encode()).hexdigest()
    o2 = hashlib.sha256(repr(oracle_canonical(after)).encode()).hexdigest()
    assert o1 != o2
    assert listing_digest(before) != listing_digest(after)


def test_empty_listing_digest_is_deterministic_constant():
    expected = hashlib.sha256(b"[]").hexdigest()
    assert listing_digest([]) == expected
    assert listing_digest([]) == listing_digest([])


def test_digest_equivalence_randomized():
    rng = random.Random(202)
    names = ["alpha", "beta", "gamma", "delta", "epsilon"]

    def random_listing():
        chosen = rng.sample(names, rng.randint(0, len(names)))
        return [
            tool(
                n,
                rng.choice(["", "does things", "does other things"]),
                rng.choice([None, {"type": "object"}, {"type": "object", "properties": {"x": {}}}]),
            )
            for n in chosen
        ]

    for _ in range(400):
        l1, l2 = random_listing(), random_listing()
        s1 = ToolSnapshot("mail", fixed_clock(), sorted(l1, key=lambda t: t.name), listing_digest(l1))
        s2 = ToolSnapshot("mail", fixed_clock(), sorted(l2, key=lambda t: t.name), listing_digest(l2))
        same_oracle = oracle_canonical(l1) == oracle_canonical(l2)
        assert (s1.digest == s2.digest) == same_oracle
        assert diff_snapshots(s1, s2).empty == same_oracle


# ---------------------------------------------------------------------------
# Diffing
# ---------------------------------------------------------------------------


def snap(tools):
    return ToolSnapshot("mail", fixed_clock(), sorted(tools, key=lambda t: t.name), listing_digest(tools))


def test_diff_identity_is_empty():
    s = snap([tool("send_email", "v1")])
    change = diff_snapshots(s, s)
    assert change.empty
    assert change.to_dict() == {"added": [], "removed": [], "modified": []}


def test_diff_detects_bcc_schema_addition():
    schema_v1 = {"type": "object", "properties": {"to": {}, "subject": {}, "body": {}}}
    schema_v2 = {"type": "object", "properties": {"to": {}, "subject": {}, "body": {}, "bcc": {}}}
    change = diff_snapshots(
        snap([tool("send_email", "Send an email.", schema_v1)]),
        snap([tool("send_email", "Send an email.", schema_v2)]),
    )
    assert change.modified == [("send_email", ["input_schema"])]
    assert change.added == [] and change.removed == []


def test_diff_detects_added_delete_repository():
    change = diff_snapshots(
        snap([tool("list_repos")]),
        snap([tool("list_repos"), tool("delete_repository", "Delete a repository.")]),
    )
    assert change.added == ["delete_repository"]


def test_diff_reports_multiple_changed_fields():
    change = diff_snapshots(
        snap([tool("t", "a", {"type": "object"}, None)]),
        snap([tool("t", "b", {"type": "string"}, {"hint": "x"})]),
    )
    assert change.modified == [("t", ["description", "input_schema", "annotations"])]


def test_diff_rejects_server_mismatch():
    other = ToolSnapshot("files", fixed_clock(), [], listing_digest([]))
    with pytest.raises(ServerMismatch):
        diff_snapshots(snap([]), other)


# ---------------------------------------------------------------------------
# Discovery + approvals
# ---------------------------------------------------------------------------


def test_snapshot_requires_known_server_and_unique_names():
    store = make_store()
    with pytest.raises(UnknownServer):
        store.snapshot_tools("ghost", [])
    with pytest.raises(RegistryError):
        store.snapshot_tools("mail", [tool("a"), tool("a")])


def test_discovery_of_new_tool_queues_pending_request():
    events = []
    store = make_store(events=events)
    store.snapshot_tools("mail", [tool("send_email"), tool("list_inbox"), tool("delete_repository")])
    requests = store.apply_discovery("mail", ChangeSet(added=["delete_repository"]), requested_by="alice")
    assert len(requests) == 1
    req = requests[0]
    assert req.state == "pending" and req.tool.name == "delete_repository"
    assert store.tool_state("mail", "delete_repository") == "pending"
    assert "delete_repository" not in store.effective_allowlist("mail")
    assert ("approval_requested", {"request_id": req.request_id, "server_id": "mail", "tool": "delete_repository"}) in events
    # Re-running the same discovery must not duplicate the request.
    assert store.apply_discovery("mail", ChangeSet(added=["delete_repository"])) == []


def test_empty_change_is_noop():
    store = make_store()
    before = store.effective_allowlist("mail")
    assert store.apply_discovery("mail", ChangeSet()) == []
    assert store.effective_allowlist("mail") == before
    assert store.pending_requests() == []


def test_modified_approved_tool_suspends_and_alerts():
    events = []
    store = make_store(events=events)
    store.snapshot_tools("mail", [tool("send_email", "v2 with bcc"), tool("list_inbox")])
    requests = store.apply_discovery("mail", ChangeSet(modified=[("send_email", ["description"])]))
    assert len(requests) == 1
    assert store.tool_state("mail", "send_email") == "suspended"
    assert "send_email" not in store.effective_allowlist("mail")
    assert "list_inbox" in store.effective_allowlist("mail")
    alerts = [p for k, p in events if k == "rugpull_alert"]
    assert alerts == [{"server_id": "mail", "tool": "send_email", "changed_fields": ["description"]}]


def test_removed_tool_forfeits_approval():
    store = make_store()
    store.apply_discovery("mail", ChangeSet(removed=["send_email"]))
    assert "send_email" not in store.effective_allowlist("mail")
    # Re-added later: back through the approval queue, not auto-approved.
    store.snapshot_tools("mail", [tool("send_email"), tool("list_inbox")])
    requests = store.apply_discovery("mail", ChangeSet(added=["send_email"]))
    assert len(requests) == 1
    assert store.tool_state("mail", "send_email") == "pending"


def test_resolve_approval_lifecycle():
    store = make_store()
    store.snapshot_tools("mail", [tool("send_email"), tool("list_inbox"), tool("new_tool")])
    (req,) = store.apply_discovery("mail", ChangeSet(added=["new_tool"]))
    with pytest.raises(NotAuthorized):
        store.resolve_approval(req.request_id, "approved", "mallory", admin_roles=("analyst",))
    resolved = store.resolve_approval(req.request_id, "approved", "admin", admin_roles=ADMIN)
    assert resolved.state == "approved"
    assert "new_tool" in store.effective_allowlist("mail")
    with pytest.raises(AlreadyResolved):
        store.resolve_approval(req.request_id, "denied", "admin", admin_roles=ADMIN)
    with pytest.raises(UnknownRequest):
        store.resolve_approval("ar-9999", "approved", "admin", admin_roles=ADMIN)


def test_denied_verdict_keeps_tool_out():
    store = make_store()
    (req,) = store.apply_discovery("mail", ChangeSet(added=["risky"]))
    store.resolve_approval(req.request_id, "denied", "admin", admin_roles=ADMIN)
    assert store.tool_state("mail", "risky") == "unknown"
    assert "risky" not in store.effective_allowlist("mail")


def test_discovery_disabled_suppresses_future_requests():
    store = make_store()
    (req,) = store.apply_discovery("mail", ChangeSet(added=["spy_tool"]))
    store.resolve_approval(req.request_id, "discovery_disabled", "admin", admin_roles=ADMIN)
    assert store.tool_state("mail", "spy_tool") == "discovery_disabled"
    # Second discovery cycle: no new request appears.
    assert store.apply_discovery("mail", ChangeSet(added=["spy_tool"])) == []
    assert store.pending_requests() == []


def test_suspended_tool_restored_by_reapproval():
    store = make_store()
    store.snapshot_tools("mail", [tool("send_email", "modified"), tool("list_inbox")])
    (req,) = store.apply_discovery("mail", ChangeSet(modified=[("send_email", ["description"])]))
    assert store.tool_state("mail", "send_email") == "suspended"
    store.resolve_approval(req.request_id, "approved", "admin", admin_roles=ADMIN)
    assert store.tool_state("mail", "send_email") == "approved"
    assert "send_email" in store.effective_allowlist("mail")


# ---------------------------------------------------------------------------
# Server state
# ---------------------------------------------------------------------------


def test_quarantine_empties_effective_allowlist():
    store = make_store()
    assert store.effective_allowlist("mail") == {"send_email", "list_inbox"}
    store.set_status("mail", "quarantined")
    assert store.is_quarantined("mail")
    assert store.effective_allowlist("mail") == set()


def test_approved_server_requires_version_pin():
    with pytest.raises(RegistryError):
        ServerManifest("x", "X", "stdio", ["x"], version_pin="", status="approved")
    # A pending server may not have settled on a pin yet.
    ServerManifest("x", "X", "stdio", ["x"], version_pin="", status="pending")


def test_duplicate_server_registration_rejected():
    store = make_store()
    with pytest.raises(RegistryError):
        store.register_server(
            ServerManifest("mail", "Mail 2", "stdio", ["other"], version_pin="2")
        )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def test_state_survives_reload(tmp_path):
    store = make_store(tmp_path)
    store.snapshot_tools("mail", [tool("send_email", "v1"), tool("list_inbox")])
    (req,) = store.apply_discovery("mail", ChangeSet(added=["new_tool"]))
    store.resolve_approval(req.request_id, "approved", "admin", admin_roles=ADMIN)
    store.set_status("mail", "quarantined")

    reloaded = RegistryStore(path=str(tmp_path / "registry.json"), clock=fixed_clock)
    manifest = reloaded.get_server("mail")
    assert manifest.status == "quarantined"
    assert "new_tool" in manifest.approved_tools
    assert reloaded.get_request(req.request_id).state == "approved"
    snapshot = reloaded.latest_snapshot("mail")
    assert snapshot is not None
    assert snapshot.digest == listing_digest([tool("send_email", "v1"), tool("list_inbox")])


def test_request_ids_continue_after_reload(tmp_path):
    store = make_store(tmp_path)
    (r1,) = store.apply_discovery("mail", ChangeSet(added=["t1"]))
    reloaded = RegistryStore(path=str(tmp_path / "registry.json"), clock=fixed_clock)
    reloaded.get_server("mail").status = "approved"
    (r2,) = reloaded.apply_discovery("mail", ChangeSet(added=["t2"]))
    assert r2.request_id != r1.request_id


def test_schema_guard_on_load(tmp_path):
    bad = tmp_path / "registry.json"
    bad.write_text('{"schema": 99}')
    with pytest.raises(RegistryError):
        RegistryStore(path=str(bad))


# ---------------------------------------------------------------------------
# Deny-by-default property
# ---------------------------------------------------------------------------


def test_allowlist_subset_invariant_under_random_ops():
    rng = random.Random(7)
    store = make_store()
    store.snapshot_tools("mail", [tool("send_email"), tool("list_inbox")])
    pool = ["t1", "t2", "t3", "send_email", "list_inbox"]
    for _ in range(300):
        op = rng.choice(["add", "modify", "remove", "resolve"])
        name = rng.choice(pool)
        if op == "add":
            store.apply_discovery("mail", ChangeSet(added=[name]))
        elif op == "modify":
            store.apply_discovery("mail", ChangeSet(modified=[(name, ["description"])]))
        elif op == "remove":
            store.apply_discovery("mail", ChangeSet(removed=[name]))
        else:
            pending = store.pending_requests()
            if pending:
                req = rng.choice(pending)
                verdict = rng.choice(["approved", "denied", "discovery_disabled"])
                store.resolve_approval(req.request_id, verdict, "admin", admin_roles=ADMIN)
        manifest = store.get_server("mail")
        assert store.effective_allowlist("mail") <= manifest.approved_tools
        for request in store._approvals.values():
            if request.state != "pending":
                # Approval monotonicity: resolved requests stay resolved.
                with pytest.raises(AlreadyResolved):
                    store.resolve_approval(request.request_id, "denied", "admin", admin_roles=ADMIN)
