"""Tamper-evident audit ledger.

Every record is canonicalized, chained to its predecessor with a SHA-256
link, and signed with the gateway's Ed25519 identity key.  Storage is
append-only JSONL segments that remain readable with plain tools;
verification recomputes every link and reports the first break.

The ledger is the backbone of enforcement: the gateway withholds tool
responses that cannot be logged (fail-closed), so a dead disk degrades
to unavailability, never to unaudited traffic.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .util import atomic_write_json, utc_now_iso

EVENT_KINDS = (
    "user_prompt",
    "tool_call",
    "tool_response",
    "decision",
    "discovery",
    "approval",
    "alert",
    "transport_event",
    "admin_action",
)

GENESIS_PREV = "0" * 64
PAYLOAD_SUMMARY_LIMIT = 512
SEGMENT_SIZE = 10_000


class LedgerError(Exception):
    pass


class StorageFailure(LedgerError):
    """The ledger could not durably accept a record."""


class SessionOpen(LedgerError):
    pass


class AlreadyRolledUp(LedgerError):
    pass


def content_digest(value) -> str:
    """Hash of the canonical serialization of any JSON value."""
    doc = json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


@dataclass
class ProvenanceRecord:
    user_id: str
    session_id: str
    event_kind: str
    seq: Optional[int] = None
    timestamp: str = ""
    server_id: str = ""
    tool: str = ""
    params_digest: str = ""
    response_digest: str = ""
    data_sources: list = field(default_factory=list)
    findings: list = field(default_factory=list)  # Finding.to_dict() form
    decision: Optional[dict] = None
    payload_summary: str = ""
    correlation_id: str = ""
    payload_bytes: int = 0

    def __post_init__(self) -> None:
        if self.event_kind not in EVENT_KINDS:
            raise LedgerError(f"unknown event_kind {self.event_kind!r}")
        if len(self.payload_summary) > PAYLOAD_SUMMARY_LIMIT:
            self.payload_summary = self.payload_summary[: PAYLOAD_SUMMARY_LIMIT - 1] + "…"

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "user_id": self.user_id,
            "session_id": self.session_id,
            "event_kind": self.event_kind,
            "server_id": self.server_id,
            "tool": self.tool,
            "params_digest": self.params_digest,
            "response_digest": self.response_digest,
            "data_sources": list(self.data_sources),
            "findings": list(self.findings),
            "decision": self.decision,
            "payload_summary": self.payload_summary,
            "correlation_id": self.correlation_id,
            "payload_bytes": self.payload_bytes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProvenanceRecord":
        return cls(
            user_id=doc["user_id"],
            session_id=doc["session_id"],
            event_kind=doc["event_kind"],
            seq=doc["seq"],
            timestamp=doc["timestamp"],
            server_id=doc.get("server_id", ""),
            tool=doc.get("tool", ""),
            params_digest=doc.get("params_digest", ""),
            response_digest=doc.get("response_digest", ""),
            data_sources=list(doc.get("data_sources", ())),
            findings=list(doc.get("findings", ())),
            decision=doc.get("decision"),
            payload_summary=doc.get("payload_summary", ""),
            correlation_id=doc.get("correlation_id", ""),
            payload_bytes=doc.get("payload_bytes", 0),
        )

    def canonical(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class SealedRecord:
    record: ProvenanceRecord
    prev_hash: str
    chain_hash: str
    signature: str

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "record": self.record.to_dict(),
            "prev_hash": self.prev_hash,
            "chain_hash": self.chain_hash,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SealedRecord":
        return cls(
            record=ProvenanceRecord.from_dict(doc["record"]),
            prev_hash=doc["prev_hash"],
            chain_hash=doc["chain_hash"],
            signature=doc["signature"],
        )


def chain_hash(prev_hash: str, record: ProvenanceRecord) -> str:
    return hashlib.sha256(bytes.fromhex(prev_hash) + record.canonical()).hexdigest()


@dataclass
class RetentionPolicy:
    hot_window_days: float = 30.0
    archive_window_days: float = 365.0
    rollup_granularity: str = "session"

    def __post_init__(self) -> None:
        if self.hot_window_days > self.archive_window_days:
            raise LedgerError("hot window cannot exceed archive window")
        if self.rollup_granularity not in ("session", "day"):
            raise LedgerError(f"unknown rollup granularity {self.rollup_granularity!r}")


class SigningIdentity:
    """Gateway Ed25519 identity; signs chain hashes."""

    def __init__(self, private_key: ed25519.Ed25519PrivateKey):
        self._key = private_key
        pub = private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        self.public_key_hex = pub.hex()

    @classmethod
    def generate(cls) -> "SigningIdentity":
        return cls(ed25519.Ed25519PrivateKey.generate())

    @classmethod
    def load(cls, path: str) -> "SigningIdentity":
        with open(path, "rb") as fh:
            key = serialization.load_pem_private_key(fh.read(), password=None)
        if not isinstance(key, ed25519.Ed25519PrivateKey):
            raise LedgerError(f"{path} does not hold an Ed25519 private key")
        return cls(key)

    def save(self, path: str) -> None:
        pem = self._key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(pem)

    def sign(self, data: bytes) -> str:
        return self._key.sign(data).hex()


def verify_signature(public_key_hex: str, signature_hex: str, data: bytes) -> bool:
    try:
        key = ed25519.Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_key_hex))
        key.verify(bytes.fromhex(signature_hex), data)
        return True
    except (InvalidSignature, ValueError):
        return False


@dataclass
class VerifyResult:
    ok: bool
    broken_at: Optional[int] = None
    cause: Optional[str] = None  # hash | signature | gap

    EXIT_CODES = {None: 0, "hash": 3, "signature": 4, "gap": 5}

    def exit_code(self) -> int:
        return 0 if self.ok else self.EXIT_CODES[self.cause]

    def to_dict(self) -> dict:
        doc: dict = {"ok": self.ok}
        if not self.ok:
            doc["broken_at"] = self.broken_at
            doc["cause"] = self.cause
        return doc


_SIG_CACHE_LIMIT = 200_000


def verify_records(
    sealed: Iterable[SealedRecord],
    public_key_hex: str,
    expected_prev: str = GENESIS_PREV,
    expected_seq: Optional[int] = None,
    cache: Optional[dict] = None,
) -> VerifyResult:
    """Walk a contiguous run of sealed records and report the first break.

    ``cache`` memoizes signatures already proven valid.  Validity is a pure
    function of (key, message, signature), so a hit is exactly as strong as
    a fresh check; repeated verification of overlapping ranges gets cheap.
    """
    try:
        key = ed25519.Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_key_hex))
    except ValueError:
        key = None
    prev = expected_prev
    for item in sealed:
        seq = item.record.seq
        if expected_seq is None:
            expected_seq = seq  # an export is anchored at its first record
        if seq != expected_seq:
            bad = expected_seq if seq is None else min(expected_seq, seq)
            return VerifyResult(False, broken_at=bad, cause="gap")
        recomputed = chain_hash(prev, item.record)
        if recomputed != item.chain_hash or item.prev_hash != prev:
            return VerifyResult(False, broken_at=seq, cause="hash")
        token = (public_key_hex, item.chain_hash, item.signature)
        if cache is None or token not in cache:
            try:
                if key is None:
                    raise InvalidSignature
                key.verify(bytes.fromhex(item.signature), bytes.fromhex(item.chain_hash))
            except (InvalidSignature, ValueError):
                return VerifyResult(False, broken_at=seq, cause="signature")
            if cache is not None:
                if len(cache) >= _SIG_CACHE_LIMIT:
                    cache.clear()
                cache[token] = True
        prev = item.chain_hash
        expected_seq = seq + 1
    return VerifyResult(True)


def verify_export(
    sealed: list,
    public_key_hex: str,
    cache: Optional[dict] = None,
    expected_head: Optional[str] = None,
) -> VerifyResult:
    """Verify a parsed export as a chain segment anchored at its first record.

    A file that starts at seq 0 must anchor to the genesis value; later
    slices are checked for internal consistency from their claimed start.

    ``expected_head`` pins the export as the *complete* log: it must then
    start at seq 0 and end on exactly that chain hash.  Without it, a
    truncated tail or a dropped first record is indistinguishable from an
    honest partial export — hash chains only bind what lies between their
    endpoints, so auditors should record the published head out of band.
    """
    if expected_head is not None and (not sealed or sealed[0].record.seq != 0):
        return VerifyResult(False, broken_at=0, cause="gap")
    if not sealed:
        return VerifyResult(True)
    first = sealed[0]
    prev = GENESIS_PREV if first.record.seq == 0 else first.prev_hash
    result = verify_records(
        sealed, public_key_hex, expected_prev=prev, expected_seq=first.record.seq, cache=cache
    )
    if result.ok and expected_head is not None and sealed[-1].chain_hash != expected_head:
        return VerifyResult(False, broken_at=len(sealed) - 1, cause="hash")
    return result


class Ledger:
    """Append-only segmented store with a single serialized writer."""

    def __init__(
        self,
        directory: str,
        identity: SigningIdentity,
        clock: Callable[[], str] = utc_now_iso,
        segment_size: int = SEGMENT_SIZE,
        retention: Optional[RetentionPolicy] = None,
    ):
        self.directory = directory
        self.identity = identity
        self._clock = clock
        self._segment_size = segment_size
        self.retention = retention or RetentionPolicy()
        self._lock = threading.RLock()
        self._sig_cache: dict = {}
        self._session_index: dict[str, list] = {}
        self._open_sessions: set = set()
        self._rolled_up: set = set()
        self._next_seq = 0
        self._head = GENESIS_PREV
        self._fh: Optional[io.TextIOBase] = None
        self._fh_path = ""
        os.makedirs(directory, exist_ok=True)
        os.makedirs(os.path.join(directory, "archive"), exist_ok=True)
        self._load_state()
        self._rebuild()

    # -- storage layout ------------------------------------------------------

    def _segment_name(self, first_seq: int) -> str:
        return f"segment-{first_seq:08d}.jsonl"

    def _segment_paths(self) -> list:
        """All segment files, hot then archived, in seq order."""
        found = []
        for sub in ("", "archive"):
            base = os.path.join(self.directory, sub)
            if not os.path.isdir(base):
                continue
            for name in os.listdir(base):
                if name.startswith("segment-") and name.endswith(".jsonl"):
                    found.append((int(name[8:16]), os.path.join(base, name)))
        return [path for _, path in sorted(found)]

    def _state_path(self) -> str:
        return os.path.join(self.directory, "state.json")

    def _load_state(self) -> None:
        path = self._state_path()
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            self._open_sessions = set(doc.get("open_sessions", ()))
            self._rolled_up = set(doc.get("rolled_up", ()))

    def _save_state(self) -> None:
        atomic_write_json(
            self._state_path(),
            {"schema": 1, "open_sessions": sorted(self._open_sessions), "rolled_up": sorted(self._rolled_up)},
        )

    def _rebuild(self) -> None:
        for path in self._segment_paths():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    sealed = SealedRecord.from_dict(json.loads(line))
                    seq = sealed.record.seq
                    self._session_index.setdefault(sealed.record.session_id, []).append(seq)
                    self._next_seq = seq + 1
                    self._head = sealed.chain_hash

    # -- append --------------------------------------------------------------

    def append(self, record: ProvenanceRecord) -> SealedRecord:
        """Seal and persist one record; returns only after the write."""
        with self._lock:
            record.seq = self._next_seq
            if not record.timestamp:
                record.timestamp = self._clock()
            sealed = SealedRecord(
                record=record,
                prev_hash=self._head,
                chain_hash=chain_hash(self._head, record),
                signature="",
            )
            sealed.signature = self.identity.sign(bytes.fromhex(sealed.chain_hash))
            line = json.dumps(sealed.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            self._write_line(record.seq, line)
            self._next_seq = record.seq + 1
            self._head = sealed.chain_hash
            self._session_index.setdefault(record.session_id, []).append(record.seq)
            return sealed

    def _write_line(self, seq: int, line: str) -> None:
        try:
            if self._fh is None or seq % self._segment_size == 0:
                if self._fh is not None:
                    self._fh.close()
                first = seq - (seq % self._segment_size)
                self._fh_path = os.path.join(self.directory, self._segment_name(first))
                self._fh = open(self._fh_path, "a", encoding="utf-8")
            self._fh.write(line + "\n")
            self._fh.flush()
        except OSError as exc:
            raise StorageFailure(f"ledger write failed: {exc}") from exc

    # -- reads ---------------------------------------------------------------

    def __len__(self) -> int:
        return self._next_seq

    @property
    def head_hash(self) -> str:
        return self._head

    def records(self, start: int = 0, end: Optional[int] = None) -> Iterable[SealedRecord]:
        """Sealed records with start ≤ seq < end, in seq order."""
        for path in self._segment_paths():
            first = int(os.path.basename(path)[8:16])
            if end is not None and first >= end:
                break
            if first + self._segment_size <= start:
                continue
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    sealed = SealedRecord.from_dict(json.loads(line))
                    seq = sealed.record.seq
                    if seq < start:
                        continue
                    if end is not None and seq >= end:
                        return
                    yield sealed

    def get(self, seq: int) -> SealedRecord:
        for sealed in self.records(seq, seq + 1):
            return sealed
        raise LedgerError(f"no record with seq {seq}")

    def query(
        self,
        user_id: Optional[str] = None,
        session_id: Optional[str] = None,
        server_id: Optional[str] = None,
        tool: Optional[str] = None,
        event_kind: Optional[str] = None,
        since: Optional[str] = None,
        until: Optional[str] = None,
        after_seq: int = -1,
        limit: int = 500,
    ):
        """Filtered scan in seq order; returns (page, next_after_seq | None)."""
        matched: list = []
        next_token = None
        for sealed in self.records(after_seq + 1):
            r = sealed.record
            if user_id is not None and r.user_id != user_id:
                continue
            if session_id is not None and r.session_id != session_id:
                continue
            if server_id is not None and r.server_id != server_id:
                continue
            if tool is not None and r.tool != tool:
                continue
            if event_kind is not None and r.event_kind != event_kind:
                continue
            if since is not None and r.timestamp < since:
                continue
            if until is not None and r.timestamp > until:
                continue
            if len(matched) == limit:
                next_token = matched[-1].record.seq
                break
            matched.append(sealed)
        return matched, next_token

    # -- verification --------------------------------------------------------

    def verify_chain(self, start: int = 0, end: Optional[int] = None,
                     public_key_hex: Optional[str] = None) -> VerifyResult:
        key = public_key_hex or self.identity.public_key_hex
        if start == 0:
            prev = GENESIS_PREV
        else:
            try:
                prev = self.get(start - 1).chain_hash
            except LedgerError:
                return VerifyResult(False, broken_at=start - 1, cause="gap")
        with self._lock:
            sealed_n, sealed_head = self._next_seq, self._head
        anchor_tail = end is None
        if anchor_tail:
            # bound the walk at the head we sealed, then demand storage
            # still reaches it: a silently dropped tail must not verify
            end = sealed_n
        walked = {"count": 0, "last": prev}

        def counted():
            for item in self.records(start, end):
                walked["count"] += 1
                walked["last"] = item.chain_hash
                yield item

        result = verify_records(
            counted(), key, expected_prev=prev, expected_seq=start, cache=self._sig_cache
        )
        if result.ok and anchor_tail:
            if start + walked["count"] != sealed_n or walked["last"] != (
                sealed_head if sealed_n > 0 else prev
            ):
                return VerifyResult(False, broken_at=max(sealed_n - 1, start), cause="gap")
        return result

    # -- export --------------------------------------------------------------

    def export_jsonl(self, stream, start: int = 0, end: Optional[int] = None) -> int:
        count = 0
        for sealed in self.records(start, end):
            line = json.dumps(sealed.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            stream.write(line + "\n")
            count += 1
        return count

    # -- sessions, rollup, retention ----------------------------------------

    def begin_session(self, session_id: str) -> None:
        with self._lock:
            self._open_sessions.add(session_id)
            self._save_state()

    def end_session(self, session_id: str) -> None:
        with self._lock:
            self._open_sessions.discard(session_id)
            self._save_state()

    def rollup(self, session_id: str) -> SealedRecord:
        """Append a per-session summary record; once per session."""
        with self._lock:
            if session_id in self._open_sessions:
                raise SessionOpen(f"session {session_id!r} is still open")
            if session_id in self._rolled_up:
                raise AlreadyRolledUp(f"session {session_id!r} was already rolled up")
            counts: dict[str, int] = {}
            tools: set = set()
            finding_classes: dict[str, int] = {}
            first_ts = last_ts = ""
            user_id = ""
            for seq in self._session_index.get(session_id, []):
                rec = self.get(seq).record
                counts[rec.event_kind] = counts.get(rec.event_kind, 0) + 1
                if rec.tool:
                    tools.add(rec.tool)
                for f in rec.findings:
                    klass = f.get("class", "?")
                    finding_classes[klass] = finding_classes.get(klass, 0) + 1
                if not first_ts:
                    first_ts = rec.timestamp
                last_ts = rec.timestamp
                user_id = user_id or rec.user_id
            summary = {
                "session_id": session_id,
                "counts": dict(sorted(counts.items())),
                "tools": sorted(tools),
                "findings_by_class": dict(sorted(finding_classes.items())),
                "first_timestamp": first_ts,
                "last_timestamp": last_ts,
            }
            sealed = self.append(
                ProvenanceRecord(
                    user_id=user_id or "system",
                    session_id=session_id,
                    event_kind="admin_action",
                    tool="session_rollup",
                    payload_summary=json.dumps(summary, sort_keys=True),
                )
            )
            self._rolled_up.add(session_id)
            self._save_state()
            return sealed

    def archive_segments(self, before_seq: int) -> list:
        """Move whole segments ending before ``before_seq`` into archive/.

        Archived segments stay readable; seq ranges remain contiguous.
        """
        moved = []
        with self._lock:
            for path in self._segment_paths():
                if os.sep + "archive" + os.sep in path:
                    continue
                first = int(os.path.basename(path)[8:16])
                if first + self._segment_size <= before_seq and path != self._fh_path:
                    target = os.path.join(self.directory, "archive", os.path.basename(path))
                    os.replace(path, target)
                    moved.append(os.path.basename(path))
        return moved

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def load_export(stream) -> list:
    """Parse a JSONL export back into sealed records."""
    sealed = []
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        doc = json.loads(line)
        if doc.get("schema") != 1:
            raise LedgerError(f"unsupported export schema {doc.get('schema')!r}")
        sealed.append(SealedRecord.from_dict(doc))
    return sealed
