"""Streamable HTTP listener that agent hosts connect to.

One POST per JSON-RPC message; sessions are minted on ``initialize`` and
carried in the ``Mcp-Session-Id`` header.  A session can only be used
with the bearer token that created it, which is what keeps one user's
downstream connections out of another's reach.
"""

from __future__ import annotations

import json
import sys
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from ..protocol.http import SESSION_HEADER, send_json, send_message
from ..protocol.messages import NotJson, NotUtf8, ProtocolError, decode_message
from ..provenance import StorageFailure
from .core import GatewayCore
from .identity import Unauthenticated


def bearer_token(handler) -> Optional[str]:
    auth = handler.headers.get("Authorization", "")
    if auth.startswith("Bearer "):
        return auth[7:].strip()
    return None


def _plain(handler, status: int, doc: dict) -> None:
    send_json(handler, status, json.dumps(doc).encode("utf-8"))


class GatewayHttpServer:
    """Owns the listening socket and a daemon accept thread."""

    def __init__(self, core: GatewayCore, identity, host: str = "127.0.0.1", port: int = 0):
        self.core = core
        self.identity = identity
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args) -> None:
                pass

            def do_POST(self) -> None:
                outer._post(self)

            def do_DELETE(self) -> None:
                outer._delete(self)

            def do_GET(self) -> None:
                _plain(self, 405, {"error": "server-initiated streams are not offered"})

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/mcp"

    def start(self) -> "GatewayHttpServer":
        self.thread.start()
        return self

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    # -- request handling ----------------------------------------------------

    def _authenticated(self, handler):
        try:
            return self.identity.authenticate(bearer_token(handler))
        except Unauthenticated as exc:
            _plain(handler, 401, {"error": str(exc)})
            return None

    def _post(self, handler) -> None:
        try:
            self._post_inner(handler)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            traceback.print_exc(file=sys.stderr)
            try:
                _plain(handler, 500, {"error": "internal error"})
            except Exception:
                pass

    def _post_inner(self, handler) -> None:
        if handler.path != "/mcp":
            _plain(handler, 404, {"error": "unknown path"})
            return
        principal = self._authenticated(handler)
        if principal is None:
            return
        length = int(handler.headers.get("Content-Length") or 0)
        body = handler.rfile.read(length)
        try:
            msg = decode_message(body)
        except (NotJson, NotUtf8) as exc:
            send_json(handler, 400, _rpc_error_bytes(-32700, f"unparseable frame: {exc}"))
            return
        except ProtocolError as exc:
            send_json(handler, 400, _rpc_error_bytes(-32600, f"invalid message: {exc}"))
            return

        try:
            if msg.kind == "request" and msg.method == "initialize":
                ctx = self.core.open_session(principal)
                replies = self.core.handle_message(ctx, msg)
                send_message(handler, 200, replies[0], {SESSION_HEADER: ctx.session_id})
                return
            session_id = handler.headers.get(SESSION_HEADER)
            if not session_id:
                _plain(handler, 400, {"error": f"missing {SESSION_HEADER} header"})
                return
            ctx = self.core.get_session(session_id)
            if ctx is None:
                _plain(handler, 404, {"error": "unknown or expired session"})
                return
            if ctx.principal.user_id != principal.user_id:
                _plain(handler, 403, {"error": "session belongs to a different principal"})
                return
            replies = self.core.handle_message(ctx, msg)
        except StorageFailure:
            _plain(handler, 503, {"error": "audit trail unavailable"})
            return
        if not replies:
            send_json(handler, 202, b"")
            return
        send_message(handler, 200, replies[0])

    def _delete(self, handler) -> None:
        if handler.path != "/mcp":
            _plain(handler, 404, {"error": "unknown path"})
            return
        principal = self._authenticated(handler)
        if principal is None:
            return
        session_id = handler.headers.get(SESSION_HEADER)
        ctx = self.core.get_session(session_id) if session_id else None
        if ctx is None:
            _plain(handler, 404, {"error": "unknown or expired session"})
            return
        if ctx.principal.user_id != principal.user_id:
            _plain(handler, 403, {"error": "session belongs to a different principal"})
            return
        self.core.close_session(session_id)
        send_json(handler, 204, b"")


def _rpc_error_bytes(code: int, message: str) -> bytes:
    # Hand-built because a response with a null id is only legal for
    # transport-level rejections like this one.
    doc = {"jsonrpc": "2.0", "id": None, "error": {"code": code, "message": message}}
    return json.dumps(doc, ensure_ascii=False).encode("utf-8")
