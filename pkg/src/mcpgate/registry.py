"""Private server/tool catalog with snapshot diffing and approval queue.

Every tool a session may call must be on a server's effective allowlist;
dynamically discovered or modified tools drop out of that list until an
administrator resolves a pending approval.  Listing snapshots are hashed
over a canonical form so any description/schema drift — the rugpull
signature — is detectable as a digest change.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .protocol.tools import ToolDescriptor
from .util import atomic_write_json, utc_now_iso


class RegistryError(Exception):
    pass


class UnknownServer(RegistryError):
    pass


class ServerMismatch(RegistryError):
    pass


class UnknownRequest(RegistryError):
    pass


class AlreadyResolved(RegistryError):
    pass


class NotAuthorized(RegistryError):
    pass


ADMIN_ROLE = "administrator"

SERVER_STATUSES = ("approved", "quarantined", "pending")
VERDICTS = ("approved", "denied", "discovery_disabled")


@dataclass
class ServerManifest:
    server_id: str
    display_name: str
    transport_kind: str  # stdio | streamable_http
    address: object  # command vector (list) or URL (str)
    version_pin: str
    execution_mode: str = "local_allowed"
    approved_tools: set = field(default_factory=set)
    status: str = "approved"
    env_allowlist: list = field(default_factory=list)
    suspended_tools: set = field(default_factory=set)
    discovery_disabled: set = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.transport_kind not in ("stdio", "streamable_http"):
            raise RegistryError(f"unknown transport_kind {self.transport_kind!r}")
        if self.status not in SERVER_STATUSES:
            raise RegistryError(f"unknown status {self.status!r}")
        if self.status == "approved" and not self.version_pin:
            raise RegistryError(f"approved server {self.server_id!r} requires a version pin")
        self.approved_tools = set(self.approved_tools)
        self.suspended_tools = set(self.suspended_tools)
        self.discovery_disabled = set(self.discovery_disabled)

    def to_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "display_name": self.display_name,
            "transport_kind": self.transport_kind,
            "address": self.address,
            "version_pin": self.version_pin,
            "execution_mode": self.execution_mode,
            "approved_tools": sorted(self.approved_tools),
            "status": self.status,
            "env_allowlist": list(self.env_allowlist),
            "suspended_tools": sorted(self.suspended_tools),
            "discovery_disabled": sorted(self.discovery_disabled),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ServerManifest":
        return cls(
            server_id=doc["server_id"],
            display_name=doc.get("display_name", doc["server_id"]),
            transport_kind=doc["transport_kind"],
            address=doc["address"],
            version_pin=doc.get("version_pin", ""),
            execution_mode=doc.get("execution_mode", "local_allowed"),
            approved_tools=set(doc.get("approved_tools", ())),
            status=doc.get("status", "approved"),
            env_allowlist=list(doc.get("env_allowlist", ())),
            suspended_tools=set(doc.get("suspended_tools", ())),
            discovery_disabled=set(doc.get("discovery_disabled", ())),
        )


def canonical_listing(tools: list) -> list:
    """Name-sorted, fixed field order; structured values key-sorted later."""
    return [
        [t.name, t.description, t.input_schema, t.annotations]
        for t in sorted(tools, key=lambda t: t.name)
    ]


def listing_digest(tools: list) -> str:
    doc = json.dumps(canonical_listing(tools), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


@dataclass
class ToolSnapshot:
    server_id: str
    taken_at: str
    tools: list
    digest: str

    def to_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "taken_at": self.taken_at,
            "tools": [t.to_wire() for t in self.tools],
            "digest": self.digest,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ToolSnapshot":
        return cls(
            server_id=doc["server_id"],
            taken_at=doc["taken_at"],
            tools=[ToolDescriptor.from_wire(doc["server_id"], t) for t in doc["tools"]],
            digest=doc["digest"],
        )


@dataclass
class ChangeSet:
    added: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    modified: list = field(default_factory=list)  # (name, [changed fields])

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.modified)

    def to_dict(self) -> dict:
        return {
            "added": list(self.added),
            "removed": list(self.removed),
            "modified": [[name, list(fields_)] for name, fields_ in self.modified],
        }


def diff_snapshots(old: ToolSnapshot, new: ToolSnapshot) -> ChangeSet:
    """Exact name set difference plus per-field comparison on shared names."""
    if old.server_id != new.server_id:
        raise ServerMismatch(f"{old.server_id!r} vs {new.server_id!r}")
    old_by = {t.name: t for t in old.tools}
    new_by = {t.name: t for t in new.tools}
    change = ChangeSet(
        added=sorted(set(new_by) - set(old_by)),
        removed=sorted(set(old_by) - set(new_by)),
    )
    for name in sorted(set(old_by) & set(new_by)):
        a, b = old_by[name], new_by[name]
        fields_changed = []
        for fname in ("description", "input_schema", "annotations"):
            if json.dumps(getattr(a, fname), sort_keys=True) != json.dumps(getattr(b, fname), sort_keys=True):
                fields_changed.append(fname)
        if fields_changed:
            change.modified.append((name, fields_changed))
    return change


@dataclass
class ApprovalRequest:
    request_id: str
    server_id: str
    tool: ToolDescriptor
    first_seen: str
    requested_by: str
    state: str = "pending"

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "server_id": self.server_id,
            "tool": self.tool.to_wire(),
            "first_seen": self.first_seen,
            "requested_by": self.requested_by,
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ApprovalRequest":
        return cls(
            request_id=doc["request_id"],
            server_id=doc["server_id"],
            tool=ToolDescriptor.from_wire(doc["server_id"], doc["tool"]),
            first_seen=doc["first_seen"],
            requested_by=doc["requested_by"],
            state=doc.get("state", "pending"),
        )


class RegistryStore:
    """Registry state with serialized writes and atomic persistence.

    ``on_event(kind, payload)`` is invoked (outside errors) for rugpull
    alerts, new approval requests, and resolutions so the gateway can fan
    them out to provenance and the admin event stream.
    """

    def __init__(
        self,
        path: Optional[str] = None,
        clock: Callable[[], str] = utc_now_iso,
        on_event: Optional[Callable[[str, dict], None]] = None,
    ):
        self._path = path
        self._clock = clock
        self.on_event = on_event
        self._lock = threading.RLock()
        self._servers: dict[str, ServerManifest] = {}
        self._snapshots: dict[str, ToolSnapshot] = {}
        self._approvals: dict[str, ApprovalRequest] = {}
        self._next_request = 1
        if path and os.path.exists(path):
            self._load(path)

    # -- persistence --------------------------------------------------------

    def _load(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema") != 1:
            raise RegistryError(f"unsupported registry schema {doc.get('schema')!r}")
        self._servers = {sid: ServerManifest.from_dict(d) for sid, d in doc.get("servers", {}).items()}
        self._snapshots = {sid: ToolSnapshot.from_dict(d) for sid, d in doc.get("snapshots", {}).items()}
        self._approvals = {rid: ApprovalRequest.from_dict(d) for rid, d in doc.get("approvals", {}).items()}
        self._next_request = doc.get("next_request_id", len(self._approvals) + 1)

    def _persist(self) -> None:
        if not self._path:
            return
        atomic_write_json(
            self._path,
            {
                "schema": 1,
                "servers": {sid: m.to_dict() for sid, m in self._servers.items()},
                "snapshots": {sid: s.to_dict() for sid, s in self._snapshots.items()},
                "approvals": {rid: r.to_dict() for rid, r in self._approvals.items()},
                "next_request_id": self._next_request,
            },
        )

    def _emit(self, kind: str, payload: dict) -> None:
        if self.on_event is not None:
            self.on_event(kind, payload)

    # -- servers ------------------------------------------------------------

    def register_server(self, manifest: ServerManifest) -> None:
        with self._lock:
            if manifest.server_id in self._servers:
                raise RegistryError(f"server {manifest.server_id!r} already registered")
            self._servers[manifest.server_id] = manifest
            self._persist()

    def get_server(self, server_id: str) -> ServerManifest:
        try:
            return self._servers[server_id]
        except KeyError:
            raise UnknownServer(server_id) from None

    def list_servers(self) -> list:
        with self._lock:
            return sorted(self._servers.values(), key=lambda m: m.server_id)

    def set_status(self, server_id: str, status: str) -> None:
        if status not in SERVER_STATUSES:
            raise RegistryError(f"unknown status {status!r}")
        with self._lock:
            self.get_server(server_id).status = status
            self._persist()
        self._emit("server_status", {"server_id": server_id, "status": status})

    def is_quarantined(self, server_id: str) -> bool:
        return self.get_server(server_id).status == "quarantined"

    def effective_allowlist(self, server_id: str) -> set:
        """Tools callable right now: approved minus suspended, empty unless
        the server itself is in approved state."""
        manifest = self.get_server(server_id)
        if manifest.status != "approved":
            return set()
        return set(manifest.approved_tools) - set(manifest.suspended_tools)

    def tool_state(self, server_id: str, name: str) -> str:
        manifest = self.get_server(server_id)
        if name in manifest.suspended_tools:
            return "suspended"
        if name in manifest.approved_tools:
            return "approved"
        if name in manifest.discovery_disabled:
            return "discovery_disabled"
        if any(
            r.server_id == server_id and r.tool.name == name and r.state == "pending"
            for r in self._approvals.values()
        ):
            return "pending"
        return "unknown"

    # -- snapshots & discovery ----------------------------------------------

    def snapshot_tools(self, server_id: str, listing: list) -> ToolSnapshot:
        with self._lock:
            self.get_server(server_id)
            names = [t.name for t in listing]
            if len(names) != len(set(names)):
                raise RegistryError(f"duplicate tool names in listing for {server_id!r}")
            snap = ToolSnapshot(
                server_id=server_id,
                taken_at=self._clock(),
                tools=sorted(listing, key=lambda t: t.name),
                digest=listing_digest(listing),
            )
            self._snapshots[server_id] = snap
            self._persist()
            return snap

    def latest_snapshot(self, server_id: str) -> Optional[ToolSnapshot]:
        return self._snapshots.get(server_id)

    def apply_discovery(
        self, server_id: str, change: ChangeSet, requested_by: str = "system"
    ) -> list:
        """Fold a listing diff into registry state.

        New and modified tools leave the effective allowlist and queue for
        approval; a modification to an approved tool additionally raises a
        rugpull alert and suspends the tool on the spot.
        """
        with self._lock:
            manifest = self.get_server(server_id)
            if manifest.status != "approved":
                raise UnknownServer(f"server {server_id!r} is not in approved state")
            snap = self._snapshots.get(server_id)
            by_name = {t.name: t for t in snap.tools} if snap else {}
            requests: list = []

            def queue(name: str) -> None:
                if name in manifest.discovery_disabled:
                    self._emit(
                        "discovery_suppressed",
                        {"server_id": server_id, "tool": name, "reason": "discovery_disabled"},
                    )
                    return
                if any(
                    r.server_id == server_id and r.tool.name == name and r.state == "pending"
                    for r in self._approvals.values()
                ):
                    return
                descriptor = by_name.get(name) or ToolDescriptor(server_id, name)
                req = ApprovalRequest(
                    request_id=f"ar-{self._next_request:04d}",
                    server_id=server_id,
                    tool=descriptor,
                    first_seen=self._clock(),
                    requested_by=requested_by,
                )
                self._next_request += 1
                self._approvals[req.request_id] = req
                requests.append(req)
                self._emit(
                    "approval_requested",
                    {"request_id": req.request_id, "server_id": server_id, "tool": name},
                )

            for name in change.added:
                queue(name)
            for name, fields_changed in change.modified:
                if name in manifest.approved_tools:
                    manifest.suspended_tools.add(name)
                    self._emit(
                        "rugpull_alert",
                        {
                            "server_id": server_id,
                            "tool": name,
                            "changed_fields": list(fields_changed),
                        },
                    )
                queue(name)
            for name in change.removed:
                # Removal forfeits approval; re-adding later starts over.
                manifest.approved_tools.discard(name)
                manifest.suspended_tools.discard(name)
            self._persist()
            return requests

    # -- approvals -----------------------------------------------------------

    def pending_requests(self) -> list:
        with self._lock:
            return sorted(
                (r for r in self._approvals.values() if r.state == "pending"),
                key=lambda r: r.request_id,
            )

    def get_request(self, request_id: str) -> ApprovalRequest:
        try:
            return self._approvals[request_id]
        except KeyError:
            raise UnknownRequest(request_id) from None

    def resolve_approval(
        self, request_id: str, verdict: str, admin: str, admin_roles: tuple = ()
    ) -> ApprovalRequest:
        if verdict not in VERDICTS:
            raise RegistryError(f"unknown verdict {verdict!r}")
        if ADMIN_ROLE not in admin_roles:
            raise NotAuthorized(f"{admin!r} lacks the {ADMIN_ROLE} role")
        with self._lock:
            req = self.get_request(request_id)
            if req.state != "pending":
                raise AlreadyResolved(f"{request_id} already {req.state}")
            manifest = self.get_server(req.server_id)
            req.state = verdict
            if verdict == "approved":
                manifest.approved_tools.add(req.tool.name)
                manifest.suspended_tools.discard(req.tool.name)
            elif verdict == "discovery_disabled":
                manifest.discovery_disabled.add(req.tool.name)
            self._persist()
        self._emit(
            "approval_resolved",
            {
                "request_id": request_id,
                "server_id": req.server_id,
                "tool": req.tool.name,
                "verdict": verdict,
                "admin": admin,
            },
        )
        return req
