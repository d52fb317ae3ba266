"""Stdio transport: the gateway launches a server subprocess and exchanges
newline-delimited JSON-RPC frames on its stdin/stdout.

The child environment is built strictly from an allowlist so spawned
servers never inherit host credentials.
"""

from __future__ import annotations

import os
import queue
import subprocess
import threading
import uuid
from typing import Iterable, Optional

from .messages import (
    MAX_FRAME_BYTES,
    ProtocolError,
    ProtocolViolation,
    RpcMessage,
    decode_message,
    encode_message,
)


class TransportError(Exception):
    """Base class for endpoint lifecycle and exchange failures."""


class SpawnFailed(TransportError):
    pass


class ExecutionForbidden(TransportError):
    """Server is registered remote-only; local subprocess launch refused."""


class ConnectionFailed(TransportError):
    pass


class StdioEndpoint:
    """One subprocess endpoint, owned by a single session pipeline.

    Messages are strictly ordered; a background thread drains the child's
    stdout into a queue so reads can time out without blocking forever.
    """

    transport_kind = "stdio"

    def __init__(
        self,
        command: list[str],
        env_filter: Iterable[str] = (),
        execution_mode: str = "local_allowed",
        cwd: Optional[str] = None,
        extra_env: Optional[dict] = None,
    ):
        if not command:
            raise SpawnFailed("command vector must be nonempty")
        if execution_mode == "remote_only":
            raise ExecutionForbidden(f"server command {command[0]!r} is registered remote-only")
        env = {name: os.environ[name] for name in env_filter if name in os.environ}
        env.update(extra_env or {})
        self.state = "connecting"
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                env=env,
                cwd=cwd,
            )
        except OSError as exc:
            self.state = "failed"
            raise SpawnFailed(f"could not launch {command[0]!r}: {exc}") from exc
        self.session_id = uuid.uuid4().hex
        self._incoming: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.state = "ready"

    def _read_loop(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        while True:
            line = stdout.readline(MAX_FRAME_BYTES + 2)
            if not line:
                self._incoming.put(ConnectionFailed("subprocess closed its stdout"))
                return
            frame = line.rstrip(b"\r\n")
            if not frame:
                continue
            if len(frame) > MAX_FRAME_BYTES:
                self._incoming.put(ProtocolViolation(f"frame exceeds {MAX_FRAME_BYTES} bytes"))
                continue
            try:
                self._incoming.put(decode_message(frame))
            except ProtocolError as exc:
                self._incoming.put(exc)

    def send(self, msg: RpcMessage) -> None:
        if self.state != "ready":
            raise ConnectionFailed(f"endpoint is {self.state}")
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(encode_message(msg) + b"\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.state = "failed"
            raise ConnectionFailed(f"write to subprocess failed: {exc}") from exc

    def recv(self, timeout: Optional[float] = 10.0) -> RpcMessage:
        try:
            item = self._incoming.get(timeout=timeout)
        except queue.Empty:
            raise ConnectionFailed("timed out waiting for subprocess output")
        if isinstance(item, ConnectionFailed):
            self.state = "failed"
            raise item
        if isinstance(item, Exception):
            raise item
        return item

    def exchange(self, msg: RpcMessage, timeout: Optional[float] = 10.0) -> list[RpcMessage]:
        """Send a request and read until its response arrives.

        Returns every message read, notifications included, in arrival
        order with the matching response last.
        """
        self.send(msg)
        collected: list[RpcMessage] = []
        while True:
            received = self.recv(timeout=timeout)
            collected.append(received)
            if received.kind == "response" and received.id == msg.id:
                return collected

    def drain_notifications(self) -> list[RpcMessage]:
        """Non-blocking drain of any server-initiated notifications."""
        pending: list[RpcMessage] = []
        while True:
            try:
                item = self._incoming.get_nowait()
            except queue.Empty:
                return pending
            if isinstance(item, RpcMessage) and item.kind == "notification":
                pending.append(item)
            elif isinstance(item, Exception):
                # Surfaced on the next explicit recv/exchange instead.
                self._incoming.put(item)
                return pending

    def close(self) -> None:
        if self.state in ("closed", "failed"):
            return
        self.state = "closed"
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()


def stdio_connect(
    command: list[str],
    env_filter: Iterable[str] = (),
    execution_mode: str = "local_allowed",
    cwd: Optional[str] = None,
    extra_env: Optional[dict] = None,
) -> StdioEndpoint:
    """Launch a stdio server subprocess with a scrubbed environment.

    Only ``env_filter`` names survive from the parent; ``extra_env`` adds
    explicitly granted values (e.g. one caller's own credentials).
    """
    return StdioEndpoint(
        command, env_filter=env_filter, execution_mode=execution_mode, cwd=cwd, extra_env=extra_env
    )
