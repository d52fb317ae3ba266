"""Per-principal behavioral baselines and deviation alerts.

Baselines learn from the sealed audit stream: tool usage rates and volume
fold into exponentially weighted daily means, active hours fill a 24-bucket
histogram, and tool-to-tool transitions build a bigram table.  All windows
run on record timestamps (stream time), never the wall clock, so replaying
a stream reproduces the exact same alerts.

A configurable warmup period suppresses everything except repeated-denial
alerts; cold baselines would otherwise flag every first sighting.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .provenance import ProvenanceRecord

ALERT_KINDS = ("novel_tool", "volume_spike", "off_hours", "repeated_denials", "sequence_outlier")

SEVERITY = {
    "novel_tool": "warn",
    "volume_spike": "critical",
    "off_hours": "warn",
    "repeated_denials": "warn",
    "sequence_outlier": "info",
}

_EVIDENCE_CAP = 20


class SubjectMismatch(Exception):
    pass


@dataclass
class AnomalyConfig:
    decay_per_day: float = 0.1
    warmup_days: float = 7.0
    volume_spike_factor: float = 5.0
    denial_threshold: int = 5
    denial_window_sec: float = 60.0


DEFAULT_CONFIG = AnomalyConfig()


@dataclass
class AnomalyAlert:
    alert_id: str
    subject: str
    kind: str
    evidence: list
    severity: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ALERT_KINDS:
            raise ValueError(f"unknown alert kind {self.kind!r}")
        if not self.evidence:
            raise ValueError("alert without evidence")

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "subject": self.subject,
            "kind": self.kind,
            "evidence": list(self.evidence),
            "severity": self.severity,
            "detail": dict(self.detail),
        }


@dataclass
class Baseline:
    """Everything the detector knows about one subject.

    The day_* fields accumulate the in-progress stream day; they fold into
    the EW means when an event crosses a day boundary.
    """

    subject: str
    tool_usage: dict = field(default_factory=dict)  # tool -> EW calls/day
    active_hours: list = field(default_factory=lambda: [0] * 24)
    volume_mean: float = 0.0
    volume_dev: float = 0.0
    sequence_bigrams: dict = field(default_factory=dict)  # tool -> {next: count}
    observations: int = 0
    first_seen: float = 0.0
    last_event: float = 0.0
    current_day: int = -1
    day_volume: float = 0.0
    day_tool_counts: dict = field(default_factory=dict)
    day_seqs: list = field(default_factory=list)
    day_spike_fired: bool = False
    last_tool: str = ""
    denial_times: list = field(default_factory=list)  # [ts, seq] pairs

    def knows_tool(self, tool: str) -> bool:
        return tool in self.tool_usage or tool in self.day_tool_counts

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "tool_usage": dict(self.tool_usage),
            "active_hours": list(self.active_hours),
            "volume_mean": self.volume_mean,
            "volume_dev": self.volume_dev,
            "sequence_bigrams": {k: dict(v) for k, v in self.sequence_bigrams.items()},
            "observations": self.observations,
            "first_seen": self.first_seen,
            "last_event": self.last_event,
            "current_day": self.current_day,
            "day_volume": self.day_volume,
            "day_tool_counts": dict(self.day_tool_counts),
            "day_seqs": list(self.day_seqs),
            "day_spike_fired": self.day_spike_fired,
            "last_tool": self.last_tool,
            "denial_times": [list(p) for p in self.denial_times],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Baseline":
        return cls(
            subject=doc["subject"],
            tool_usage=dict(doc.get("tool_usage", {})),
            active_hours=list(doc.get("active_hours", [0] * 24)),
            volume_mean=doc.get("volume_mean", 0.0),
            volume_dev=doc.get("volume_dev", 0.0),
            sequence_bigrams={k: dict(v) for k, v in doc.get("sequence_bigrams", {}).items()},
            observations=doc.get("observations", 0),
            first_seen=doc.get("first_seen", 0.0),
            last_event=doc.get("last_event", 0.0),
            current_day=doc.get("current_day", -1),
            day_volume=doc.get("day_volume", 0.0),
            day_tool_counts=dict(doc.get("day_tool_counts", {})),
            day_seqs=list(doc.get("day_seqs", ())),
            day_spike_fired=doc.get("day_spike_fired", False),
            last_tool=doc.get("last_tool", ""),
            denial_times=[list(p) for p in doc.get("denial_times", ())],
        )


def parse_ts(stamp: str) -> float:
    return datetime.fromisoformat(stamp.replace("Z", "+00:00")).timestamp()


def _alert_id(subject: str, kind: str, evidence: list, nonce: int) -> str:
    seed = f"{subject}|{kind}|{evidence[0]}|{evidence[-1]}|{nonce}"
    return "aa-" + hashlib.sha256(seed.encode("utf-8")).hexdigest()[:10]


def _fold_day(baseline: Baseline, cfg: AnomalyConfig) -> None:
    """Close out the accumulated day into the EW means."""
    lam = cfg.decay_per_day
    baseline.volume_dev = (1 - lam) * baseline.volume_dev + lam * abs(
        baseline.day_volume - baseline.volume_mean
    )
    baseline.volume_mean = (1 - lam) * baseline.volume_mean + lam * baseline.day_volume
    for tool in set(baseline.tool_usage) | set(baseline.day_tool_counts):
        prior = baseline.tool_usage.get(tool, 0.0)
        baseline.tool_usage[tool] = (1 - lam) * prior + lam * baseline.day_tool_counts.get(tool, 0)
    baseline.day_volume = 0.0
    baseline.day_tool_counts = {}
    baseline.day_seqs = []
    baseline.day_spike_fired = False


def observe(event, baseline: Baseline, config: Optional[AnomalyConfig] = None):
    """Advance one baseline by one sealed record.

    Returns (baseline, alerts).  The transition depends only on the inputs;
    the caller supplies stream order.
    """
    cfg = config or DEFAULT_CONFIG
    rec = event.record
    if not baseline.subject.startswith("role:") and rec.user_id != baseline.subject:
        raise SubjectMismatch(f"record for {rec.user_id!r} fed to baseline {baseline.subject!r}")

    ts = parse_ts(rec.timestamp)
    day = int(ts // 86400)
    if baseline.observations == 0 and baseline.first_seen == 0.0:
        baseline.first_seen = ts
        baseline.current_day = day
    while baseline.current_day < day:
        _fold_day(baseline, cfg)
        baseline.current_day += 1

    warm = (ts - baseline.first_seen) < cfg.warmup_days * 86400
    alerts = []
    baseline.day_seqs.append(rec.seq)
    if len(baseline.day_seqs) > _EVIDENCE_CAP:
        del baseline.day_seqs[0]

    # denial persistence: exempt from warmup suppression
    if rec.event_kind == "decision" and (rec.decision or {}).get("outcome") == "deny":
        cutoff = ts - cfg.denial_window_sec
        baseline.denial_times = [p for p in baseline.denial_times if p[0] >= cutoff]
        baseline.denial_times.append([ts, rec.seq])
        if len(baseline.denial_times) >= cfg.denial_threshold:
            evidence = [seq for _, seq in baseline.denial_times]
            alerts.append(
                AnomalyAlert(
                    _alert_id(baseline.subject, "repeated_denials", evidence, baseline.observations),
                    baseline.subject,
                    "repeated_denials",
                    evidence,
                    SEVERITY["repeated_denials"],
                    {"window_sec": cfg.denial_window_sec, "count": len(evidence)},
                )
            )
            baseline.denial_times = []

    if rec.event_kind == "tool_call" and rec.tool:
        if not warm and not baseline.knows_tool(rec.tool):
            alerts.append(
                AnomalyAlert(
                    _alert_id(baseline.subject, "novel_tool", [rec.seq], baseline.observations),
                    baseline.subject,
                    "novel_tool",
                    [rec.seq],
                    SEVERITY["novel_tool"],
                    {"tool": rec.tool},
                )
            )
        elif not warm and baseline.last_tool:
            seen = baseline.sequence_bigrams.get(baseline.last_tool, {})
            if rec.tool not in seen:
                alerts.append(
                    AnomalyAlert(
                        _alert_id(baseline.subject, "sequence_outlier", [rec.seq], baseline.observations),
                        baseline.subject,
                        "sequence_outlier",
                        [rec.seq],
                        SEVERITY["sequence_outlier"],
                        {"transition": [baseline.last_tool, rec.tool]},
                    )
                )
        baseline.day_tool_counts[rec.tool] = baseline.day_tool_counts.get(rec.tool, 0) + 1
        if baseline.last_tool:
            slot = baseline.sequence_bigrams.setdefault(baseline.last_tool, {})
            slot[rec.tool] = slot.get(rec.tool, 0) + 1
        baseline.last_tool = rec.tool

    baseline.day_volume += rec.payload_bytes
    if (
        not warm
        and not baseline.day_spike_fired
        and baseline.volume_mean > 0
        and baseline.day_volume > cfg.volume_spike_factor * baseline.volume_mean
    ):
        evidence = list(baseline.day_seqs)
        alerts.append(
            AnomalyAlert(
                _alert_id(baseline.subject, "volume_spike", evidence, baseline.observations),
                baseline.subject,
                "volume_spike",
                evidence,
                SEVERITY["volume_spike"],
                {"day_volume": baseline.day_volume, "mean": baseline.volume_mean},
            )
        )
        baseline.day_spike_fired = True

    hour = int((ts % 86400) // 3600)
    if not warm and baseline.active_hours[hour] == 0:
        alerts.append(
            AnomalyAlert(
                _alert_id(baseline.subject, "off_hours", [rec.seq], baseline.observations),
                baseline.subject,
                "off_hours",
                [rec.seq],
                SEVERITY["off_hours"],
                {"hour": hour},
            )
        )
    baseline.active_hours[hour] += 1
    baseline.observations += 1
    baseline.last_event = ts
    return baseline, alerts


def repeated_denial_monitor(window, config: Optional[AnomalyConfig] = None) -> Optional[AnomalyAlert]:
    """Scan a batch of decision records for a denial burst."""
    cfg = config or DEFAULT_CONFIG
    denials = sorted(
        (parse_ts(r.record.timestamp), r.record.seq, r.record.user_id)
        for r in window
        if r.record.event_kind == "decision" and (r.record.decision or {}).get("outcome") == "deny"
    )
    k = cfg.denial_threshold
    for i in range(len(denials) - k + 1):
        if denials[i + k - 1][0] - denials[i][0] <= cfg.denial_window_sec:
            run = denials[i : i + k]
            evidence = [seq for _, seq, _ in run]
            subject = run[0][2]
            return AnomalyAlert(
                _alert_id(subject, "repeated_denials", evidence, i),
                subject,
                "repeated_denials",
                evidence,
                SEVERITY["repeated_denials"],
                {"window_sec": cfg.denial_window_sec, "count": k},
            )
    return None


class AnomalyEngine:
    """Keeps baselines per user plus per role and logs alerts to the ledger.

    Role baselines serve as shared knowledge: a tool the role already uses
    is not novel for a new member, and a fresh user inherits the role's
    warmup start instead of seven more quiet days.
    """

    def __init__(self, ledger=None, config: Optional[AnomalyConfig] = None):
        self.ledger = ledger
        self.config = config or DEFAULT_CONFIG
        self.users: dict[str, Baseline] = {}
        self.roles: dict[str, Baseline] = {}
        self.alert_log: list[AnomalyAlert] = []

    def _user_baseline(self, user_id: str, roles) -> Baseline:
        baseline = self.users.get(user_id)
        if baseline is None:
            baseline = Baseline(subject=user_id)
            for role in roles:
                mature = self.roles.get(f"role:{role}")
                if mature is not None and mature.first_seen:
                    baseline.first_seen = mature.first_seen
                    break
            self.users[user_id] = baseline
        return baseline

    def handle(self, sealed, roles=()) -> list:
        rec = sealed.record
        if rec.event_kind == "alert":
            return []  # never learn from our own output
        baseline = self._user_baseline(rec.user_id, roles)
        role_knows = any(
            self.roles.get(f"role:{r}", Baseline(subject="role:_")).knows_tool(rec.tool)
            for r in roles
        )
        _, alerts = observe(sealed, baseline, self.config)
        if role_knows:
            alerts = [a for a in alerts if a.kind != "novel_tool"]
        for role in roles:
            role_baseline = self.roles.setdefault(f"role:{role}", Baseline(subject=f"role:{role}"))
            observe(sealed, role_baseline, self.config)
        for alert in alerts:
            self.alert_log.append(alert)
            if self.ledger is not None:
                self.ledger.append(
                    ProvenanceRecord(
                        user_id=rec.user_id,
                        session_id=rec.session_id,
                        event_kind="alert",
                        server_id=rec.server_id,
                        tool=rec.tool,
                        payload_summary=json.dumps(alert.to_dict(), sort_keys=True),
                        correlation_id=alert.alert_id,
                    )
                )
        return alerts

    def export_state(self) -> dict:
        return {
            "schema": 1,
            "users": {k: v.to_dict() for k, v in self.users.items()},
            "roles": {k: v.to_dict() for k, v in self.roles.items()},
        }

    def restore_state(self, doc: dict) -> None:
        if doc.get("schema") != 1:
            raise ValueError(f"unsupported baseline state schema {doc.get('schema')!r}")
        self.users = {k: Baseline.from_dict(v) for k, v in doc.get("users", {}).items()}
        self.roles = {k: Baseline.from_dict(v) for k, v in doc.get("roles", {}).items()}


def utc_hour(stamp: str) -> int:
    return datetime.fromisoformat(stamp.replace("Z", "+00:00")).astimezone(timezone.utc).hour
