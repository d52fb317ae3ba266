"""The enforcement pipeline every agent-to-server message crosses.

One :class:`GatewayCore` owns the registry, policy engine, rate limiter,
content scanner, signed ledger, and behavior baselines.  Sessions hold
their own downstream connections — opened with the calling user's own
credentials — so traffic from different principals never shares a
channel.  A tool call runs a fixed sequence: registry state, rate
budget, request scan, policy, forward, response scan, response policy,
ledger append, release.  Appends happen before release; if the ledger
cannot be written, the caller gets a refusal instead of tool output.
"""

from __future__ import annotations

import copy
import itertools
import json
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .. import __version__
from ..anomaly import AnomalyEngine
from ..policy import (
    ERR_PAYLOAD_BLOCKED,
    ERR_UPSTREAM_FAILURE,
    PolicyDecision,
    PolicyEngine,
    Principal,
    deny_response,
    load_policy_config,
)
from ..protocol.http import HttpEndpoint
from ..protocol.messages import RpcMessage
from ..protocol.stdio import ExecutionForbidden, StdioEndpoint, TransportError
from ..protocol.tools import parse_listing
from ..provenance import Ledger, ProvenanceRecord, StorageFailure, content_digest
from ..ratelimit import RateLimiter
from ..registry import ChangeSet, RegistryStore, UnknownServer, diff_snapshots
from ..scanner import Ruleset, default_ruleset, redact_structure, scan_structure, scan_tool_description

PROTOCOL_REVISION = "2025-06-18"

# Registry mutations land in the ledger under these event kinds.
_REGISTRY_EVENT_KINDS = {
    "rugpull_alert": "alert",
    "approval_requested": "discovery",
    "approval_resolved": "approval",
    "server_status": "admin_action",
    "discovery_suppressed": "discovery",
}


def _json_bytes(value) -> int:
    return len(json.dumps(value, separators=(",", ":"), ensure_ascii=False).encode("utf-8"))


@dataclass
class SessionContext:
    """Per-principal connection state; never shared across users."""

    session_id: str
    principal: Principal
    endpoints: dict = field(default_factory=dict)  # server_id -> endpoint
    downstream_ids: "itertools.count" = field(default_factory=lambda: itertools.count(1))
    created_at: float = field(default_factory=time.time)

    def close(self) -> None:
        for endpoint in self.endpoints.values():
            try:
                endpoint.close()
            except Exception:
                pass
        self.endpoints.clear()


class GatewayCore:
    def __init__(
        self,
        registry: RegistryStore,
        policy: PolicyEngine,
        limiter: RateLimiter,
        ledger: Ledger,
        identity,
        ruleset: Optional[Ruleset] = None,
        anomaly: Optional[AnomalyEngine] = None,
        clock: Callable[[], float] = time.time,
        endpoint_factory: Optional[Callable] = None,
        policy_doc: Optional[dict] = None,
    ):
        self.registry = registry
        self.policy = policy
        self.limiter = limiter
        self.ledger = ledger
        self.identity = identity
        self.ruleset = ruleset or default_ruleset()
        self.anomaly = anomaly if anomaly is not None else AnomalyEngine(ledger)
        self.clock = clock
        self.endpoint_factory = endpoint_factory
        self.policy_doc = copy.deepcopy(policy_doc) if policy_doc else {}
        self.metrics = {
            "calls": 0,
            "denials": 0,
            "findings": 0,
            "alerts": 0,
            "redactions": 0,
            "sessions_opened": 0,
            "audit_failures": 0,
            "upstream_failures": 0,
        }
        self._sessions: dict[str, SessionContext] = {}
        self._session_counter = 1
        self._lock = threading.RLock()
        registry.on_event = self._on_registry_event

    # -- sessions ------------------------------------------------------------

    def open_session(self, principal: Principal) -> SessionContext:
        with self._lock:
            session_id = f"gs-{self._session_counter:06d}"
            self._session_counter += 1
            ctx = SessionContext(
                session_id=session_id,
                principal=replace(principal, roles=set(principal.roles), session_id=session_id),
            )
            self._sessions[session_id] = ctx
            self.metrics["sessions_opened"] += 1
        self.ledger.begin_session(session_id)
        self.ledger.append(
            ProvenanceRecord(
                user_id=principal.user_id,
                session_id=session_id,
                event_kind="transport_event",
                payload_summary="session opened",
            )
        )
        return ctx

    def get_session(self, session_id: str) -> Optional[SessionContext]:
        return self._sessions.get(session_id)

    def close_session(self, session_id: str) -> None:
        ctx = self._sessions.pop(session_id, None)
        if ctx is None:
            return
        ctx.close()
        try:
            self.ledger.append(
                ProvenanceRecord(
                    user_id=ctx.principal.user_id,
                    session_id=session_id,
                    event_kind="transport_event",
                    payload_summary="session closed",
                )
            )
            self.ledger.end_session(session_id)
        except StorageFailure:
            pass  # closing must always succeed locally

    def close(self) -> None:
        for session_id in list(self._sessions):
            self.close_session(session_id)

    # -- dispatch ------------------------------------------------------------

    def handle_message(self, ctx: SessionContext, msg: RpcMessage) -> list:
        """Route one upstream message; responses come back in a list so
        transports can also carry queued notifications."""
        if msg.kind != "request":
            return []  # client notifications need no reply; stray responses are dropped
        if msg.method == "initialize":
            return [self._initialize_response(ctx, msg)]
        if msg.method == "ping":
            return [RpcMessage.response(msg.id, {})]
        if msg.method == "tools/list":
            return [self.handle_tools_list(ctx, msg)]
        if msg.method == "tools/call":
            return [self.handle_tool_call(ctx, msg)]
        return [
            RpcMessage.error_response(
                msg.id, -32601, f"method not brokered: {msg.method}", {"method": msg.method}
            )
        ]

    def _initialize_response(self, ctx: SessionContext, msg: RpcMessage) -> RpcMessage:
        return RpcMessage.response(
            msg.id,
            {
                "protocolVersion": PROTOCOL_REVISION,
                "capabilities": {"tools": {"listChanged": True}},
                "serverInfo": {"name": "mcpgate", "version": __version__},
            },
        )

    # -- tool calls ----------------------------------------------------------

    def handle_tool_call(self, ctx: SessionContext, msg: RpcMessage) -> RpcMessage:
        self.metrics["calls"] += 1
        try:
            return self._tool_call(ctx, msg)
        except StorageFailure:
            return self._audit_unavailable(msg.id)

    def _audit_unavailable(self, request_id) -> RpcMessage:
        self.metrics["audit_failures"] += 1
        return RpcMessage.error_response(
            request_id,
            ERR_PAYLOAD_BLOCKED,
            "audit trail unavailable; call refused",
            {"reason_code": "AUDIT_UNAVAILABLE"},
        )

    def _tool_call(self, ctx: SessionContext, msg: RpcMessage) -> RpcMessage:
        params = msg.params if isinstance(msg.params, dict) else {}
        full_name = str(params.get("name") or "")
        arguments = params.get("arguments")
        if arguments is None:
            arguments = {}
        correlation_id = f"{ctx.session_id}:{msg.id}"
        base = dict(
            user_id=ctx.principal.user_id,
            session_id=ctx.session_id,
            params_digest=content_digest(arguments),
            correlation_id=correlation_id,
            payload_bytes=_json_bytes(arguments),
        )

        server_id, dot, tool = full_name.partition(".")
        if not dot or not server_id or not tool:
            return self._deny(
                ctx,
                msg,
                base,
                "",
                full_name,
                [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="TOOL_NOT_ALLOWED",
                    detail={"error": "tool names must be qualified as server_id.tool_name"},
                ),
            )
        base.update(server_id=server_id, tool=tool)

        # 1. registry state: does this server/tool exist and may it run now?
        try:
            manifest = self.registry.get_server(server_id)
        except UnknownServer:
            return self._deny(
                ctx, msg, base, server_id, tool,
                [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="TOOL_NOT_ALLOWED",
                    detail={"error": f"unknown server {server_id!r}"},
                ),
            )
        if manifest.status == "quarantined":
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(outcome="deny", reason_code="SERVER_QUARANTINED"),
            )
        if manifest.status != "approved":
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="TOOL_NOT_ALLOWED",
                    detail={"error": f"server {server_id!r} awaits approval"},
                ),
            )
        state = self.registry.tool_state(server_id, tool)
        if state in ("suspended", "pending"):
            detail = {"tool_state": state}
            request_id = next(
                (
                    r.request_id
                    for r in self.registry.pending_requests()
                    if r.server_id == server_id and r.tool.name == tool
                ),
                None,
            )
            if request_id:
                detail["approval_request_id"] = request_id
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(outcome="deny", reason_code="TOOL_PENDING_APPROVAL", detail=detail),
            )
        if state != "approved":
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="TOOL_NOT_ALLOWED",
                    detail={"error": "tool is not on the server's allowlist"},
                ),
            )
        known = self._known_tools()
        poisoned = self._description_findings(server_id, tool, known)
        if poisoned:
            self.metrics["alerts"] += 1
            self.ledger.append(
                ProvenanceRecord(
                    user_id=ctx.principal.user_id,
                    session_id=ctx.session_id,
                    event_kind="alert",
                    server_id=server_id,
                    tool=tool,
                    findings=[f.to_dict() for f in poisoned],
                    payload_summary=json.dumps(
                        {"kind": "description_injection", "tool": tool}, sort_keys=True
                    ),
                    correlation_id=correlation_id,
                )
            )
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="INJECTION_SUSPECTED",
                    detail={"error": "tool description carries embedded instructions"},
                ),
            )

        # 2. rate budget
        roles = tuple(sorted(ctx.principal.roles))
        rate = self.limiter.check(
            ctx.principal.user_id, server_id, tool, now=self.clock(), roles=roles
        )
        if not rate.allowed:
            return self._deny(
                ctx, msg, base, server_id, tool, [],
                PolicyDecision(
                    outcome="deny",
                    reason_code="RATE_LIMITED",
                    detail={
                        "retry_after_sec": round(rate.remaining_wait, 3),
                        "limit_id": rate.limit_id,
                    },
                ),
            )

        # 3. request scan
        findings_in = scan_structure(arguments, "to_server", self.ruleset, known)
        self.metrics["findings"] += len(findings_in)

        # 4. request policy
        decision = self.policy.evaluate_call(ctx.principal, server_id, tool, findings_in)
        if decision.outcome == "deny":
            return self._deny(ctx, msg, base, server_id, tool, findings_in, decision)
        send_args = arguments
        if decision.outcome == "allow_with_redaction":
            send_args, summary = redact_structure(arguments, decision.redactions)
            self.metrics["redactions"] += len(summary.applied)
            base["params_digest"] = content_digest(send_args)

        # 5. forward on the caller's own channel
        try:
            endpoint = self._endpoint(ctx, server_id, manifest)
            downstream = RpcMessage.request(
                next(ctx.downstream_ids), "tools/call", {"name": tool, "arguments": send_args}
            )
            replies = endpoint.exchange(downstream)
        except ExecutionForbidden as exc:
            return self._deny(
                ctx, msg, base, server_id, tool, findings_in,
                PolicyDecision(
                    outcome="deny",
                    reason_code="EXECUTION_FORBIDDEN",
                    detail={"error": str(exc)},
                ),
            )
        except TransportError as exc:
            return self._upstream_failure(ctx, msg, base, server_id, tool, findings_in, exc)
        response = replies[-1]
        stray = [m for m in replies[:-1] if m.kind == "notification"]
        stray.extend(endpoint.drain_notifications())

        # 6. response scan
        if response.is_error:
            visible = {"message": response.error.message, "data": response.error.data}
        else:
            visible = response.result
        findings_out = scan_structure(visible, "to_agent", self.ruleset, known)
        self.metrics["findings"] += len(findings_out)

        # 7. response policy
        verdict = self.policy.evaluate_call(ctx.principal, server_id, tool, findings_out)
        if verdict.outcome == "deny":
            reply = self._deny(ctx, msg, base, server_id, tool, findings_in, verdict)
            self._process_notifications(ctx, server_id, stray)
            return reply

        out: RpcMessage
        released_findings = findings_out
        if response.is_error:
            # Errors pass through unredacted; block was handled above.
            out = RpcMessage.error_response(
                msg.id, response.error.code, response.error.message, response.error.data
            )
            response_digest = content_digest(
                {"code": response.error.code, "message": response.error.message}
            )
            summary_text = f"error passed through: {response.error.code}"
            released_bytes = _json_bytes(response.error.to_wire())
        else:
            result_out = response.result
            if verdict.outcome == "allow_with_redaction":
                result_out, red = redact_structure(response.result, verdict.redactions)
                self.metrics["redactions"] += len(red.applied)
                summary_text = f"result released with {len(red.applied)} redaction(s)"
            else:
                summary_text = "result released"
            out = RpcMessage.response(msg.id, result_out)
            response_digest = content_digest(result_out)
            released_bytes = _json_bytes(result_out)

        # 8. append before release — a call that cannot be recorded never returns output
        sealed_call = self.ledger.append(
            ProvenanceRecord(
                event_kind="tool_call",
                findings=[f.to_dict() for f in findings_in],
                payload_summary=f"call {server_id}.{tool}",
                data_sources=[f"{server_id}.{tool}"],
                **base,
            )
        )
        sealed_outcome = self.ledger.append(
            ProvenanceRecord(
                user_id=ctx.principal.user_id,
                session_id=ctx.session_id,
                event_kind="tool_response",
                server_id=server_id,
                tool=tool,
                params_digest=base["params_digest"],
                response_digest=response_digest,
                findings=[f.to_dict() for f in released_findings],
                decision=verdict.to_dict(),
                payload_summary=summary_text,
                data_sources=[f"{server_id}.{tool}"],
                correlation_id=correlation_id,
                payload_bytes=released_bytes,
            )
        )
        self._feed_anomaly(ctx, (sealed_call, sealed_outcome))
        self._process_notifications(ctx, server_id, stray)
        return out

    def _deny(
        self,
        ctx: SessionContext,
        msg: RpcMessage,
        base: dict,
        server_id: str,
        tool: str,
        findings: list,
        decision: PolicyDecision,
    ) -> RpcMessage:
        self.metrics["denials"] += 1
        record_base = dict(base)
        record_base.update(server_id=server_id, tool=tool)
        sealed_call = self.ledger.append(
            ProvenanceRecord(
                event_kind="tool_call",
                findings=[f.to_dict() for f in findings],
                payload_summary=f"call {server_id}.{tool}" if server_id else f"call {tool}",
                **record_base,
            )
        )
        sealed_decision = self.ledger.append(
            ProvenanceRecord(
                user_id=ctx.principal.user_id,
                session_id=ctx.session_id,
                event_kind="decision",
                server_id=server_id,
                tool=tool,
                params_digest=record_base.get("params_digest", ""),
                findings=[f.to_dict() for f in findings],
                decision=decision.to_dict(),
                payload_summary=f"denied: {decision.reason_code}",
                correlation_id=record_base.get("correlation_id", ""),
            )
        )
        self._feed_anomaly(ctx, (sealed_call, sealed_decision))
        return deny_response(msg.id, decision)

    def _upstream_failure(
        self,
        ctx: SessionContext,
        msg: RpcMessage,
        base: dict,
        server_id: str,
        tool: str,
        findings: list,
        exc: Exception,
    ) -> RpcMessage:
        self.metrics["upstream_failures"] += 1
        ctx.endpoints.pop(server_id, None)
        sealed = [
            self.ledger.append(
                ProvenanceRecord(
                    event_kind="tool_call",
                    findings=[f.to_dict() for f in findings],
                    payload_summary=f"call {server_id}.{tool}",
                    **base,
                )
            ),
            self.ledger.append(
                ProvenanceRecord(
                    user_id=ctx.principal.user_id,
                    session_id=ctx.session_id,
                    event_kind="transport_event",
                    server_id=server_id,
                    tool=tool,
                    payload_summary=f"downstream exchange failed: {exc}"[:200],
                    correlation_id=base.get("correlation_id", ""),
                )
            ),
            self.ledger.append(
                ProvenanceRecord(
                    user_id=ctx.principal.user_id,
                    session_id=ctx.session_id,
                    event_kind="decision",
                    server_id=server_id,
                    tool=tool,
                    decision={"outcome": "deny", "reason_code": "UPSTREAM_FAILURE"},
                    payload_summary="denied: UPSTREAM_FAILURE",
                    correlation_id=base.get("correlation_id", ""),
                )
            ),
        ]
        self._feed_anomaly(ctx, sealed)
        return RpcMessage.error_response(
            msg.id,
            ERR_UPSTREAM_FAILURE,
            f"upstream server {server_id!r} unavailable",
            {"reason_code": "UPSTREAM_FAILURE"},
        )

    # -- listings ------------------------------------------------------------

    def handle_tools_list(self, ctx: SessionContext, msg: RpcMessage) -> RpcMessage:
        try:
            return self._tools_list(ctx, msg)
        except StorageFailure:
            return self._audit_unavailable(msg.id)

    def _tools_list(self, ctx: SessionContext, msg: RpcMessage) -> RpcMessage:
        aggregate: list = []
        failures: dict = {}
        known = self._known_tools()
        pending_notes: list = []
        for manifest in self.registry.list_servers():
            if manifest.status != "approved":
                continue
            server_id = manifest.server_id
            try:
                endpoint = self._endpoint(ctx, server_id, manifest)
                replies = endpoint.exchange(
                    RpcMessage.request(next(ctx.downstream_ids), "tools/list", {})
                )
            except TransportError as exc:
                failures[server_id] = str(exc)
                ctx.endpoints.pop(server_id, None)
                self.ledger.append(
                    ProvenanceRecord(
                        user_id=ctx.principal.user_id,
                        session_id=ctx.session_id,
                        event_kind="transport_event",
                        server_id=server_id,
                        payload_summary=f"listing failed: {exc}"[:200],
                    )
                )
                continue
            response = replies[-1]
            pending_notes.extend(
                (server_id, m) for m in replies[:-1] if m.kind == "notification"
            )
            pending_notes.extend((server_id, m) for m in endpoint.drain_notifications())
            if response.is_error:
                failures[server_id] = f"listing error {response.error.code}"
                continue
            tools = parse_listing(server_id, response.result)
            self._refresh_snapshot(server_id, tools)
            flagged = set()
            for descriptor in tools:
                desc_findings = scan_tool_description(descriptor, self.ruleset, known)
                if any(f.klass == "injection" for f in desc_findings):
                    flagged.add(descriptor.name)
            visible = self.registry.effective_allowlist(server_id)
            visible = set(
                self.policy.filter_tools(ctx.principal, server_id, sorted(visible))
            )
            for name in sorted(flagged & visible):
                # Approved yet now carrying instructions: withhold and flag.
                self.metrics["alerts"] += 1
                self.ledger.append(
                    ProvenanceRecord(
                        user_id=ctx.principal.user_id,
                        session_id=ctx.session_id,
                        event_kind="alert",
                        server_id=server_id,
                        tool=name,
                        payload_summary=json.dumps(
                            {"kind": "description_injection", "tool": name}, sort_keys=True
                        ),
                    )
                )
            visible -= flagged
            for descriptor in tools:
                if descriptor.name not in visible:
                    continue
                wire = descriptor.to_wire()
                wire["name"] = f"{server_id}.{descriptor.name}"
                aggregate.append(wire)
        self.ledger.append(
            ProvenanceRecord(
                user_id=ctx.principal.user_id,
                session_id=ctx.session_id,
                event_kind="discovery",
                payload_summary=json.dumps(
                    {"tools_listed": len(aggregate), "failures": failures}, sort_keys=True
                ),
                correlation_id=f"{ctx.session_id}:{msg.id}",
            )
        )
        for server_id, note in pending_notes:
            self._process_notifications(ctx, server_id, [note])
        return RpcMessage.response(msg.id, {"tools": aggregate})

    def _refresh_snapshot(self, server_id: str, tools: list) -> None:
        """Store the new listing and queue approvals for anything new or changed."""
        manifest = self.registry.get_server(server_id)
        previous = self.registry.latest_snapshot(server_id)
        snapshot = self.registry.snapshot_tools(server_id, tools)
        if previous is None:
            added = [
                t.name
                for t in tools
                if t.name not in manifest.approved_tools
                and t.name not in manifest.suspended_tools
            ]
            change = ChangeSet(added=sorted(added))
        else:
            change = diff_snapshots(previous, snapshot)
            change.added = [n for n in change.added if n not in manifest.approved_tools]
        if not change.empty:
            self.registry.apply_discovery(server_id, change, requested_by="gateway")

    # -- downstream notifications -------------------------------------------

    def _process_notifications(self, ctx: SessionContext, server_id: str, notes: list) -> None:
        for note in notes:
            if note.method == "notifications/tools/list_changed":
                self.handle_list_changed(ctx, server_id)

    def handle_list_changed(self, ctx: SessionContext, server_id: str) -> None:
        """A server announced new listings: re-list and re-gate immediately."""
        try:
            manifest = self.registry.get_server(server_id)
        except UnknownServer:
            return
        self.ledger.append(
            ProvenanceRecord(
                user_id=ctx.principal.user_id,
                session_id=ctx.session_id,
                event_kind="transport_event",
                server_id=server_id,
                payload_summary="tools/list_changed received",
            )
        )
        if manifest.status != "approved":
            return  # quarantined or pending servers cannot re-enter via notifications
        try:
            endpoint = self._endpoint(ctx, server_id, manifest)
            replies = endpoint.exchange(
                RpcMessage.request(next(ctx.downstream_ids), "tools/list", {})
            )
        except TransportError:
            ctx.endpoints.pop(server_id, None)
            return
        response = replies[-1]
        endpoint.drain_notifications()
        if response.is_error:
            return
        self._refresh_snapshot(server_id, parse_listing(server_id, response.result))

    # -- wiring ---------------------------------------------------------------

    def _endpoint(self, ctx: SessionContext, server_id: str, manifest=None):
        endpoint = ctx.endpoints.get(server_id)
        if endpoint is not None:
            if endpoint.state == "ready":
                return endpoint
            ctx.endpoints.pop(server_id, None)
            try:
                endpoint.close()
            except Exception:
                pass
        if manifest is None:
            manifest = self.registry.get_server(server_id)
        credentials = self.identity.downstream_credentials(ctx.principal.user_id, server_id)
        if self.endpoint_factory is not None:
            endpoint = self.endpoint_factory(manifest, credentials)
        elif manifest.transport_kind == "streamable_http":
            endpoint = HttpEndpoint(manifest.address, headers=credentials.get("headers") or {})
        else:
            endpoint = StdioEndpoint(
                list(manifest.address),
                env_filter=manifest.env_allowlist,
                execution_mode=manifest.execution_mode,
                extra_env=credentials.get("env") or {},
            )
        if hasattr(endpoint, "on_transport_event"):
            endpoint.on_transport_event = self._transport_event_logger(ctx, server_id)
        init = RpcMessage.request(
            next(ctx.downstream_ids),
            "initialize",
            {
                "protocolVersion": PROTOCOL_REVISION,
                "capabilities": {},
                "clientInfo": {"name": "mcpgate", "version": __version__},
            },
        )
        endpoint.exchange(init)
        done = RpcMessage.notification("notifications/initialized")
        if hasattr(endpoint, "notify"):
            endpoint.notify(done)
        else:
            endpoint.send(done)
        ctx.endpoints[server_id] = endpoint
        return endpoint

    def _transport_event_logger(self, ctx: SessionContext, server_id: str):
        def log(event: str, detail: str) -> None:
            self.ledger.append(
                ProvenanceRecord(
                    user_id=ctx.principal.user_id,
                    session_id=ctx.session_id,
                    event_kind="transport_event",
                    server_id=server_id,
                    payload_summary=f"{event}: {detail}"[:200],
                )
            )

        return log

    def _description_findings(self, server_id: str, tool: str, known: tuple) -> list:
        """Injection findings for the tool's last-seen description, if any."""
        snapshot = self.registry.latest_snapshot(server_id)
        if snapshot is None:
            return []
        descriptor = next((t for t in snapshot.tools if t.name == tool), None)
        if descriptor is None:
            return []
        return [
            f
            for f in scan_tool_description(descriptor, self.ruleset, known)
            if f.klass == "injection"
        ]

    def _known_tools(self) -> tuple:
        names: set = set()
        for manifest in self.registry.list_servers():
            names.update(manifest.approved_tools)
            snapshot = self.registry.latest_snapshot(manifest.server_id)
            if snapshot is not None:
                names.update(t.name for t in snapshot.tools)
        return tuple(sorted(names))

    def _feed_anomaly(self, ctx: SessionContext, sealed_records) -> None:
        if self.anomaly is None:
            return
        roles = tuple(sorted(ctx.principal.roles))
        for sealed in sealed_records:
            self.metrics["alerts"] += len(self.anomaly.handle(sealed, roles))

    def _on_registry_event(self, kind: str, payload: dict) -> None:
        event_kind = _REGISTRY_EVENT_KINDS.get(kind)
        if event_kind is None:
            return
        if kind == "rugpull_alert":
            self.metrics["alerts"] += 1
        self.ledger.append(
            ProvenanceRecord(
                user_id=str(payload.get("admin", "system")),
                session_id="registry",
                event_kind=event_kind,
                server_id=str(payload.get("server_id", "")),
                tool=str(payload.get("tool", "")),
                payload_summary=json.dumps({"event": kind, **payload}, sort_keys=True),
            )
        )

    # -- administration -------------------------------------------------------

    def set_policy(self, doc: dict) -> None:
        """Validate and atomically swap the rule set and rate limits."""
        rules, limits, actions, overrides = load_policy_config(doc)
        engine = PolicyEngine(rules, actions, overrides)
        limiter = RateLimiter(limits)
        with self._lock:
            self.policy = engine
            self.limiter = limiter
            self.policy_doc = copy.deepcopy(doc)

    def snapshot_metrics(self) -> dict:
        doc = dict(self.metrics)
        doc["open_sessions"] = len(self._sessions)
        doc["ledger_records"] = len(self.ledger)
        doc["pending_approvals"] = len(self.registry.pending_requests())
        return doc
