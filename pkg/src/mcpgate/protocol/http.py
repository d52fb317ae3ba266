"""Streamable HTTP transport.

Client side: JSON-RPC messages are POSTed as ``application/json``; the
server answers either with a single JSON body or with a
``text/event-stream`` whose events each carry one message.  The session
identifier travels in the ``Mcp-Session-Id`` header.

Also provides the response helpers shared by every HTTP listener in the
package (gateway front end, admin API, fixture servers).
"""

from __future__ import annotations

import http.client
import socket
from typing import Optional
from urllib.parse import urlsplit

from .messages import ProtocolError, RpcMessage, decode_message, encode_message
from .stdio import ConnectionFailed, TransportError

SESSION_HEADER = "Mcp-Session-Id"


class HttpStatusError(TransportError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"unexpected HTTP status {status}{': ' + detail if detail else ''}")
        self.status = status


class StreamCorrupted(TransportError):
    """An event stream carried a payload that does not decode."""


class HttpEndpoint:
    """Client endpoint for one downstream Streamable HTTP server.

    Keeps a persistent connection; reconnects once on a dropped socket and
    reports the reconnect through ``on_transport_event`` so it can be
    logged upstream.
    """

    transport_kind = "streamable_http"

    def __init__(self, url: str, headers: Optional[dict] = None, timeout: float = 15.0):
        parts = urlsplit(url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ConnectionFailed(f"address must be an absolute http(s) URL, got {url!r}")
        self.url = url
        self._host = parts.hostname or ""
        self._port = parts.port or (443 if parts.scheme == "https" else 80)
        self._path = parts.path or "/"
        self._scheme = parts.scheme
        self._headers = dict(headers or {})
        self._timeout = timeout
        self._conn: Optional[http.client.HTTPConnection] = None
        self.session_id: Optional[str] = None
        self.state = "connecting"
        self.on_transport_event = None
        self._pending_notifications: list[RpcMessage] = []
        self._connect()
        self.state = "ready"

    def _connect(self) -> None:
        if self._scheme == "https":
            self._conn = http.client.HTTPSConnection(self._host, self._port, timeout=self._timeout)
        else:
            self._conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)

    def _emit(self, event: str, detail: str) -> None:
        if self.on_transport_event is not None:
            self.on_transport_event(event, detail)

    def _post(self, body: bytes):
        assert self._conn is not None
        headers = {
            "Content-Type": "application/json",
            "Accept": "application/json, text/event-stream",
            **self._headers,
        }
        if self.session_id:
            headers[SESSION_HEADER] = self.session_id
        for attempt in (1, 2):
            try:
                self._conn.request("POST", self._path, body=body, headers=headers)
                return self._conn.getresponse()
            except (http.client.HTTPException, ConnectionError, socket.timeout, OSError) as exc:
                self._conn.close()
                if attempt == 2:
                    self.state = "failed"
                    raise ConnectionFailed(f"POST to {self.url} failed: {exc}") from exc
                # Keep-alive sockets drop after streamed responses; retry once
                # on a fresh connection and log the reconnect.
                self._connect()
                self._emit("transport_reconnect", str(exc))

    def exchange(self, msg: RpcMessage) -> list[RpcMessage]:
        """POST one message; return all resulting messages in arrival order."""
        if self.state != "ready":
            raise ConnectionFailed(f"endpoint is {self.state}")
        resp = self._post(encode_message(msg))
        sid = resp.getheader(SESSION_HEADER)
        if sid:
            self.session_id = sid
        if resp.status == 202:
            resp.read()
            return []
        if resp.status >= 300:
            detail = resp.read(2048).decode("utf-8", "replace")
            raise HttpStatusError(resp.status, detail.strip())
        ctype = (resp.getheader("Content-Type") or "").split(";")[0].strip()
        if ctype == "text/event-stream":
            messages = _read_event_stream(resp)
        else:
            body = resp.read()
            try:
                messages = [decode_message(body)]
            except ProtocolError as exc:
                raise StreamCorrupted(f"undecodable response body: {exc}") from exc
        if resp.will_close:
            self._conn.close()
            self._connect()
        # Stash stray notifications (e.g. tools/list_changed) for the caller.
        self._pending_notifications.extend(m for m in messages if m.kind == "notification")
        return messages

    def notify(self, msg: RpcMessage) -> None:
        resp = self._post(encode_message(msg))
        if resp.status >= 300:
            detail = resp.read(2048).decode("utf-8", "replace")
            raise HttpStatusError(resp.status, detail.strip())
        resp.read()
        if resp.will_close:
            self._conn.close()
            self._connect()

    def drain_notifications(self) -> list[RpcMessage]:
        pending, self._pending_notifications = self._pending_notifications, []
        return pending

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
        self.state = "closed"


def _read_event_stream(resp) -> list[RpcMessage]:
    """Parse a finite SSE body: each event's data field is one message."""
    messages: list[RpcMessage] = []
    data_lines: list[str] = []
    while True:
        raw = resp.readline()
        at_end = not raw
        line = raw.decode("utf-8", "replace").rstrip("\r\n") if raw else ""
        if line.startswith("data:"):
            data_lines.append(line[5:].lstrip(" "))
        elif (not line) and data_lines:
            payload = "\n".join(data_lines)
            data_lines = []
            try:
                messages.append(decode_message(payload.encode("utf-8")))
            except ProtocolError as exc:
                raise StreamCorrupted(f"undecodable event payload: {exc}") from exc
        if at_end:
            return messages


# ---------------------------------------------------------------------------
# Server-side helpers (http.server request handlers)
# ---------------------------------------------------------------------------


def send_json(handler, status: int, payload: bytes, extra_headers: Optional[dict] = None) -> None:
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(payload)))
    for name, value in (extra_headers or {}).items():
        handler.send_header(name, value)
    handler.end_headers()
    handler.wfile.write(payload)


def send_message(handler, status: int, msg: RpcMessage, extra_headers: Optional[dict] = None) -> None:
    send_json(handler, status, encode_message(msg), extra_headers)


def send_event_stream(handler, messages: list[RpcMessage], extra_headers: Optional[dict] = None) -> None:
    """Send a finite SSE response, one message per event, then close."""
    handler.send_response(200)
    handler.send_header("Content-Type", "text/event-stream")
    handler.send_header("Cache-Control", "no-store")
    handler.send_header("Connection", "close")
    for name, value in (extra_headers or {}).items():
        handler.send_header(name, value)
    handler.end_headers()
    for msg in messages:
        handler.wfile.write(b"event: message\ndata: " + encode_message(msg) + b"\n\n")
    handler.wfile.flush()
    handler.close_connection = True
