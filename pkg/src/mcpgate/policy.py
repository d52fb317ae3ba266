"""Per-principal, per-tool decision engine.

Rules are prioritized allow/deny patterns over (subject, server, tool);
no match means deny.  Scanner findings then tighten an allow into a
redaction, an alert, or a block depending on configured per-class
actions.  Every deny maps to a structured JSON-RPC error so the agent
hears "tool unavailable", never silence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Optional

from .protocol.messages import RpcMessage
from .ratelimit import RateLimit

REASON_CODES = (
    "TOOL_NOT_ALLOWED",
    "TOOL_PENDING_APPROVAL",
    "SERVER_QUARANTINED",
    "RATE_LIMITED",
    "SECRET_IN_PAYLOAD",
    "PII_BLOCKED",
    "INJECTION_SUSPECTED",
    "EXECUTION_FORBIDDEN",
)

# JSON-RPC error codes carried on denied calls.
ERR_TOOL_NOT_ALLOWED = -32010
ERR_TOOL_PENDING_APPROVAL = -32011
ERR_RATE_LIMITED = -32012
ERR_SERVER_QUARANTINED = -32013
ERR_PAYLOAD_BLOCKED = -32014
ERR_UPSTREAM_FAILURE = -32015

_REASON_TO_CODE = {
    "TOOL_NOT_ALLOWED": ERR_TOOL_NOT_ALLOWED,
    "TOOL_PENDING_APPROVAL": ERR_TOOL_PENDING_APPROVAL,
    "RATE_LIMITED": ERR_RATE_LIMITED,
    "SERVER_QUARANTINED": ERR_SERVER_QUARANTINED,
    # Refusing to launch a remote-only server is a server-level refusal,
    # same family as quarantine.
    "EXECUTION_FORBIDDEN": ERR_SERVER_QUARANTINED,
    "SECRET_IN_PAYLOAD": ERR_PAYLOAD_BLOCKED,
    "PII_BLOCKED": ERR_PAYLOAD_BLOCKED,
    "INJECTION_SUSPECTED": ERR_PAYLOAD_BLOCKED,
}

_CLASS_BLOCK_REASON = {
    "secret": "SECRET_IN_PAYLOAD",
    "pii": "PII_BLOCKED",
    "injection": "INJECTION_SUSPECTED",
}

DEFAULT_FINDING_ACTIONS = {
    "secret": "block",
    "pii": "redact",
    "injection": {"to_agent": "block", "to_server": "alert"},
}


class PolicyConfigError(Exception):
    """Configuration rejected at load time, with the offending path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Principal:
    user_id: str
    roles: set
    auth_method: str = "static_token"
    session_id: str = ""

    def __post_init__(self) -> None:
        if not self.user_id:
            raise ValueError("user_id must be nonempty")
        self.roles = set(self.roles)


@dataclass
class PolicyRule:
    rule_id: str
    subject: str = "*"
    server_id: str = "*"
    tool: str = "*"
    effect: str = "deny"
    priority: int = 0

    def matches(self, principal: Principal, server_id: str, tool: str) -> bool:
        subject_ok = fnmatchcase(principal.user_id, self.subject) or any(
            fnmatchcase(role, self.subject) for role in sorted(principal.roles)
        )
        return subject_ok and fnmatchcase(server_id, self.server_id) and fnmatchcase(tool, self.tool)


@dataclass
class FindingOverride:
    klass: str
    server_id: str = "*"
    tool: str = "*"
    action: str = "block"  # block | redact | alert


@dataclass
class PolicyDecision:
    outcome: str  # allow | allow_with_redaction | deny | pending_approval
    reason_code: str = ""
    redactions: list = field(default_factory=list)
    rule_id: Optional[str] = None
    alerts: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.outcome == "allow_with_redaction" and not self.redactions:
            raise ValueError("allow_with_redaction requires redactions")
        if self.outcome == "deny" and not self.reason_code:
            raise ValueError("deny requires a reason_code")

    def to_dict(self) -> dict:
        doc = {"outcome": self.outcome, "reason_code": self.reason_code}
        if self.rule_id:
            doc["rule_id"] = self.rule_id
        if self.redactions:
            doc["redactions"] = [f.finding_id for f in self.redactions]
        if self.detail:
            doc["detail"] = dict(self.detail)
        return doc


class PolicyEngine:
    """Immutable rule set + finding actions; pure decisions."""

    def __init__(
        self,
        rules: list,
        finding_actions: Optional[dict] = None,
        overrides: Optional[list] = None,
    ):
        self.rules = list(rules)
        self.finding_actions = dict(DEFAULT_FINDING_ACTIONS)
        if finding_actions:
            self.finding_actions.update(finding_actions)
        self.overrides = list(overrides or [])

    def _action_for(self, finding, server_id: str, tool: str) -> str:
        for ov in self.overrides:
            if ov.klass == finding.klass and fnmatchcase(server_id, ov.server_id) and fnmatchcase(tool, ov.tool):
                return ov.action
        action = self.finding_actions.get(finding.klass, "alert")
        if isinstance(action, dict):
            action = action.get(finding.direction, "alert")
        return action

    def rule_outcome(self, principal: Principal, server_id: str, tool: str):
        """(effect, rule) for the best-matching rule, deny-by-default."""
        best = None
        for rule in self.rules:
            if not rule.matches(principal, server_id, tool):
                continue
            if best is None:
                best = rule
                continue
            if (rule.priority, rule.effect == "deny") > (best.priority, best.effect == "deny"):
                best = rule
        if best is None:
            return "deny", None
        return best.effect, best

    def evaluate_call(
        self, principal: Principal, server_id: str, tool: str, findings: list
    ) -> PolicyDecision:
        effect, rule = self.rule_outcome(principal, server_id, tool)
        if effect == "deny":
            return PolicyDecision(
                outcome="deny",
                reason_code="TOOL_NOT_ALLOWED",
                rule_id=rule.rule_id if rule else None,
            )
        to_block: list = []
        to_redact: list = []
        to_alert: list = []
        for finding in findings:
            action = self._action_for(finding, server_id, tool)
            if action == "block":
                to_block.append(finding)
            elif action == "redact":
                to_redact.append(finding)
            else:
                to_alert.append(finding)
        if to_block:
            first = to_block[0]
            return PolicyDecision(
                outcome="deny",
                reason_code=_CLASS_BLOCK_REASON.get(first.klass, "INJECTION_SUSPECTED"),
                rule_id=rule.rule_id if rule else None,
                alerts=to_alert + to_block,
                detail={"findings": [f.finding_id for f in to_block]},
            )
        if to_redact:
            return PolicyDecision(
                outcome="allow_with_redaction",
                redactions=to_redact,
                rule_id=rule.rule_id if rule else None,
                alerts=to_alert,
            )
        return PolicyDecision(outcome="allow", rule_id=rule.rule_id if rule else None, alerts=to_alert)

    def filter_tools(self, principal: Principal, server_id: str, tool_names: list) -> list:
        return [t for t in tool_names if self.rule_outcome(principal, server_id, t)[0] == "allow"]


def deny_response(request_id, decision: PolicyDecision) -> RpcMessage:
    """Structured "tool unavailable" error for a denied or pending call."""
    if decision.outcome not in ("deny", "pending_approval"):
        raise ValueError(f"deny_response on outcome {decision.outcome!r}")
    reason = decision.reason_code or "TOOL_PENDING_APPROVAL"
    code = _REASON_TO_CODE.get(reason, ERR_PAYLOAD_BLOCKED)
    data = {"reason_code": reason}
    if decision.rule_id:
        data["rule_id"] = decision.rule_id
    data.update(decision.detail)
    return RpcMessage.error_response(request_id, code, f"tool unavailable: {reason}", data)


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, types, path: str):
    if key not in doc:
        raise PolicyConfigError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise PolicyConfigError(f"{path}.{key}", f"expected {types}, got {type(value).__name__}")
    return value


def load_policy_config(doc: dict):
    """Validate a policy document; returns (rules, rate_limits, actions, overrides).

    Raises :class:`PolicyConfigError` naming the exact offending path.
    """
    if not isinstance(doc, dict):
        raise PolicyConfigError("$", "policy config must be an object")
    rules = []
    seen_ids = set()
    for i, entry in enumerate(doc.get("rules", [])):
        path = f"rules[{i}]"
        if not isinstance(entry, dict):
            raise PolicyConfigError(path, "must be an object")
        rule_id = _require(entry, "rule_id", str, path)
        if rule_id in seen_ids:
            raise PolicyConfigError(f"{path}.rule_id", f"duplicate rule_id {rule_id!r}")
        seen_ids.add(rule_id)
        effect = _require(entry, "effect", str, path)
        if effect not in ("allow", "deny"):
            raise PolicyConfigError(f"{path}.effect", f"must be 'allow' or 'deny', got {effect!r}")
        priority = entry.get("priority", 0)
        if not isinstance(priority, int) or isinstance(priority, bool):
            raise PolicyConfigError(f"{path}.priority", "must be an integer")
        rules.append(
            PolicyRule(
                rule_id=rule_id,
                subject=str(entry.get("subject", "*")),
                server_id=str(entry.get("server_id", "*")),
                tool=str(entry.get("tool", "*")),
                effect=effect,
                priority=priority,
            )
        )
    limits = []
    for i, entry in enumerate(doc.get("rate_limits", [])):
        path = f"rate_limits[{i}]"
        if not isinstance(entry, dict):
            raise PolicyConfigError(path, "must be an object")
        capacity = _require(entry, "capacity", int, path)
        if capacity < 1:
            raise PolicyConfigError(f"{path}.capacity", "must be >= 1")
        refill = _require(entry, "refill_per_sec", (int, float), path)
        if refill < 0:
            raise PolicyConfigError(f"{path}.refill_per_sec", "must be >= 0")
        limits.append(
            RateLimit(
                limit_id=str(entry.get("limit_id", f"rl-{i}")),
                subject=str(entry.get("subject", "*")),
                server_id=str(entry.get("server_id", "*")),
                tool=str(entry.get("tool", "*")),
                capacity=capacity,
                refill_per_sec=float(refill),
            )
        )
    actions = {}
    for klass, action in doc.get("finding_actions", {}).items():
        path = f"finding_actions.{klass}"
        if klass not in ("pii", "secret", "injection"):
            raise PolicyConfigError(path, f"unknown finding class {klass!r}")
        if isinstance(action, str):
            if action not in ("block", "redact", "alert"):
                raise PolicyConfigError(path, f"unknown action {action!r}")
        elif isinstance(action, dict):
            for direction, sub in action.items():
                if direction not in ("to_agent", "to_server"):
                    raise PolicyConfigError(f"{path}.{direction}", "unknown direction")
                if sub not in ("block", "redact", "alert"):
                    raise PolicyConfigError(f"{path}.{direction}", f"unknown action {sub!r}")
        else:
            raise PolicyConfigError(path, "must be an action string or direction map")
        actions[klass] = action
    overrides = []
    for i, entry in enumerate(doc.get("finding_overrides", [])):
        path = f"finding_overrides[{i}]"
        if not isinstance(entry, dict):
            raise PolicyConfigError(path, "must be an object")
        klass = _require(entry, "class", str, path)
        if klass not in ("pii", "secret", "injection"):
            raise PolicyConfigError(f"{path}.class", f"unknown finding class {klass!r}")
        action = _require(entry, "action", str, path)
        if action not in ("block", "redact", "alert"):
            raise PolicyConfigError(f"{path}.action", f"unknown action {action!r}")
        overrides.append(
            FindingOverride(
                klass=klass,
                server_id=str(entry.get("server_id", "*")),
                tool=str(entry.get("tool", "*")),
                action=action,
            )
        )
    return rules, limits, actions, overrides
