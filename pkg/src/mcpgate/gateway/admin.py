"""Administrative HTTP API: approvals, alerts, provenance, registry, policy.

Every route sits under ``/v1`` and requires a bearer token whose
principal holds the administrator role.  Responses carry permissive CORS
headers so a browser console served from another origin can call in;
the preflight ``OPTIONS`` is answered without authentication, everything
else is not.
"""

from __future__ import annotations

import io
import json
import sys
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from ..policy import PolicyConfigError
from ..provenance import ProvenanceRecord, load_export, verify_export
from ..registry import (
    ADMIN_ROLE,
    AlreadyResolved,
    NotAuthorized,
    RegistryError,
    UnknownRequest,
)
from ..util import atomic_write_json
from .core import GatewayCore
from .identity import Unauthenticated
from .server import bearer_token

_CORS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, PUT, DELETE, OPTIONS",
    "Access-Control-Allow-Headers": "Authorization, Content-Type",
}


class AdminHttpServer:
    def __init__(
        self,
        core: GatewayCore,
        identity,
        host: str = "127.0.0.1",
        port: int = 0,
        policy_path: str = "",
    ):
        self.core = core
        self.identity = identity
        self.policy_path = policy_path
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args) -> None:
                pass

            def do_OPTIONS(self) -> None:
                outer._send(self, 204, None)

            def do_GET(self) -> None:
                outer._dispatch(self, "GET")

            def do_POST(self) -> None:
                outer._dispatch(self, "POST")

            def do_PUT(self) -> None:
                outer._dispatch(self, "PUT")

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "AdminHttpServer":
        self.thread.start()
        return self

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    # -- plumbing ------------------------------------------------------------

    def _send(self, handler, status: int, doc, content_type: str = "application/json") -> None:
        if doc is None:
            payload = b""
        elif isinstance(doc, (bytes, str)):
            payload = doc if isinstance(doc, bytes) else doc.encode("utf-8")
        else:
            payload = json.dumps(doc, ensure_ascii=False).encode("utf-8")
        handler.send_response(status)
        handler.send_header("Content-Type", content_type)
        handler.send_header("Content-Length", str(len(payload)))
        for name, value in _CORS.items():
            handler.send_header(name, value)
        handler.end_headers()
        handler.wfile.write(payload)

    def _dispatch(self, handler, method: str) -> None:
        try:
            self._route(handler, method)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            traceback.print_exc(file=sys.stderr)
            try:
                self._send(handler, 500, {"error": "internal error"})
            except Exception:
                pass

    def _admin(self, handler) -> Optional[object]:
        try:
            principal = self.identity.authenticate(bearer_token(handler))
        except Unauthenticated as exc:
            self._send(handler, 401, {"error": str(exc)})
            return None
        if ADMIN_ROLE not in principal.roles:
            self._send(handler, 403, {"error": f"{principal.user_id!r} lacks the {ADMIN_ROLE} role"})
            return None
        return principal

    @staticmethod
    def _body(handler) -> bytes:
        length = int(handler.headers.get("Content-Length") or 0)
        return handler.rfile.read(length) if length else b""

    def _route(self, handler, method: str) -> None:
        parts = urlsplit(handler.path)
        path = parts.path.rstrip("/")
        query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
        principal = self._admin(handler)
        if principal is None:
            return

        if method == "GET" and path == "/v1/approvals":
            self._send(
                handler,
                200,
                {"approvals": [r.to_dict() for r in self.core.registry.pending_requests()]},
            )
        elif method == "POST" and path.startswith("/v1/approvals/"):
            self._resolve_approval(handler, principal, path.rsplit("/", 1)[1])
        elif method == "GET" and path == "/v1/alerts":
            self._query_records(handler, query, event_kind="alert", key="alerts")
        elif method == "GET" and path == "/v1/provenance":
            self._query_records(handler, query, key="records")
        elif method == "GET" and path == "/v1/provenance/export":
            self._export(handler, query)
        elif method == "POST" and path == "/v1/provenance/verify":
            self._verify(handler, query)
        elif method == "GET" and path == "/v1/registry":
            self._registry_view(handler)
        elif method == "GET" and path == "/v1/policy":
            self._send(handler, 200, {"policy": self.core.policy_doc})
        elif method == "PUT" and path == "/v1/policy":
            self._put_policy(handler, principal)
        elif method == "GET" and path == "/v1/metrics":
            doc = self.core.snapshot_metrics()
            doc["head_hash"] = self.core.ledger.head_hash
            doc["public_key"] = self.core.ledger.identity.public_key_hex
            self._send(handler, 200, doc)
        else:
            self._send(handler, 404, {"error": f"no route for {method} {path}"})

    # -- route bodies ---------------------------------------------------------

    def _resolve_approval(self, handler, principal, request_id: str) -> None:
        try:
            doc = json.loads(self._body(handler) or b"{}")
        except ValueError:
            self._send(handler, 400, {"error": "body must be JSON"})
            return
        verdict = doc.get("verdict", "")
        try:
            request = self.core.registry.resolve_approval(
                request_id, verdict, admin=principal.user_id, admin_roles=tuple(principal.roles)
            )
        except UnknownRequest:
            self._send(handler, 404, {"error": f"no approval request {request_id!r}"})
            return
        except AlreadyResolved as exc:
            self._send(handler, 409, {"error": str(exc)})
            return
        except NotAuthorized as exc:
            self._send(handler, 403, {"error": str(exc)})
            return
        except RegistryError as exc:
            self._send(handler, 422, {"error": str(exc)})
            return
        self._send(handler, 200, {"request": request.to_dict()})

    def _query_records(self, handler, query: dict, key: str = "records", **fixed) -> None:
        kwargs = dict(fixed)
        for name in ("user_id", "session_id", "server_id", "tool", "event_kind", "since", "until"):
            if name in query and name not in kwargs:
                kwargs[name] = query[name]
        try:
            after_seq = int(query.get("after_seq", -1))
            limit = min(int(query.get("limit", 200)), 1000)
        except ValueError:
            self._send(handler, 400, {"error": "after_seq and limit must be integers"})
            return
        page, next_token = self.core.ledger.query(after_seq=after_seq, limit=limit, **kwargs)
        self._send(
            handler,
            200,
            {key: [sealed.to_dict() for sealed in page], "next_after_seq": next_token},
        )

    def _export(self, handler, query: dict) -> None:
        try:
            start = int(query.get("start", 0))
            end = int(query["end"]) if "end" in query else None
        except ValueError:
            self._send(handler, 400, {"error": "start and end must be integers"})
            return
        buffer = io.StringIO()
        self.core.ledger.export_jsonl(buffer, start, end)
        self._send(handler, 200, buffer.getvalue(), content_type="application/jsonl")

    def _verify(self, handler, query: dict) -> None:
        body = self._body(handler)
        public_key = self.core.ledger.identity.public_key_hex
        if body.strip():
            try:
                records = load_export(io.StringIO(body.decode("utf-8")))
            except Exception as exc:
                self._send(handler, 400, {"error": f"unreadable export: {exc}"})
                return
            result = verify_export(
                records, public_key, expected_head=query.get("expected_head") or None
            )
            count = len(records)
        else:
            result = self.core.ledger.verify_chain()
            count = len(self.core.ledger)
        doc = result.to_dict()
        doc.update({"records": count, "public_key": public_key})
        self._send(handler, 200, doc)

    def _registry_view(self, handler) -> None:
        registry = self.core.registry
        snapshots = {}
        for manifest in registry.list_servers():
            snap = registry.latest_snapshot(manifest.server_id)
            if snap is not None:
                snapshots[manifest.server_id] = {
                    "digest": snap.digest,
                    "taken_at": snap.taken_at,
                    "tool_count": len(snap.tools),
                }
        self._send(
            handler,
            200,
            {
                "servers": [m.to_dict() for m in registry.list_servers()],
                "snapshots": snapshots,
            },
        )

    def _put_policy(self, handler, principal) -> None:
        try:
            doc = json.loads(self._body(handler) or b"")
        except ValueError:
            self._send(handler, 400, {"error": "body must be JSON"})
            return
        try:
            self.core.set_policy(doc)
        except PolicyConfigError as exc:
            self._send(handler, 422, {"error": {"path": exc.path, "message": str(exc)}})
            return
        if self.policy_path:
            atomic_write_json(self.policy_path, doc)
        self.core.ledger.append(
            ProvenanceRecord(
                user_id=principal.user_id,
                session_id="admin",
                event_kind="admin_action",
                tool="policy_update",
                payload_summary=json.dumps(
                    {"rules": len(doc.get("rules", [])), "rate_limits": len(doc.get("rate_limits", []))},
                    sort_keys=True,
                ),
            )
        )
        self._send(handler, 200, {"ok": True})
