"""Detector ruleset: lexicons, egress allowlist, and extension patterns.

The built-in exact detectors (email, SSN, card numbers, AWS keys, PEM
headers, bearer tokens, labeled high-entropy strings) live in
``detect.py``; this module holds everything an operator can tune without
touching code, serialized as a JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

IMPERATIVE_VERBS = [
    "send", "read", "collect", "upload", "use", "complete", "include",
    "pull", "encode", "execute", "run", "provide", "submit", "verify",
    "fetch", "gather", "forward", "copy", "paste", "retrieve", "exfiltrate",
    "call", "invoke",
]

# Nouns that make an imperative actionable against tools or credentials.
IMPERATIVE_NOUNS = [
    "tool", "tools", "credential", "credentials", "secret", "secrets",
    "password", "passwords", "token", "tokens", "key", "keys", "log",
    "logs", "environment", "configuration", "configurations", "config",
    "configs", "setting", "settings", "file", "files", "database",
    "databases", "connection", "connections", "feedback", "flag", "flags",
]

AUTHORITY_PHRASES = [
    "*important*",
    "important:",
    "required step",
    "cannot be skipped",
    "as required by",
    "is required by",
    "you must",
    "do not skip",
    "mandatory step",
    "requires this information",
    "enterprise settings",
    "enterprise it team",
]

SENSITIVE_PATHS = [
    "~/.aws/credentials",
    ".aws/credentials",
    ".env",
    ".ssh/id_rsa",
    "id_rsa",
    ".ssh/authorized_keys",
    "/etc/passwd",
    "/etc/shadow",
    ".netrc",
    ".git-credentials",
    "credentials.json",
    "secrets.yaml",
    "secrets.yml",
    ".pgpass",
    ".npmrc",
    ".kube/config",
]

EGRESS_ALLOWLIST = [
    "localhost",
    "127.0.0.1",
    "::1",
    "example.com",
    "*.example.com",
    "example.org",
    "*.example.org",
]


@dataclass
class ExtraPattern:
    """Operator-supplied regex detector added on top of the built-ins."""

    subclass: str
    klass: str
    regex: str
    confidence: str = "exact"


@dataclass
class Ruleset:
    imperative_verbs: list = field(default_factory=lambda: list(IMPERATIVE_VERBS))
    imperative_nouns: list = field(default_factory=lambda: list(IMPERATIVE_NOUNS))
    authority_phrases: list = field(default_factory=lambda: list(AUTHORITY_PHRASES))
    sensitive_paths: list = field(default_factory=lambda: list(SENSITIVE_PATHS))
    egress_allowlist: list = field(default_factory=lambda: list(EGRESS_ALLOWLIST))
    extra_patterns: list = field(default_factory=list)

    def host_allowed(self, host: str) -> bool:
        host = host.lower().rstrip(".")
        for entry in self.egress_allowlist:
            entry = entry.lower()
            if entry.startswith("*."):
                if host == entry[2:] or host.endswith(entry[1:]):
                    return True
            elif host == entry:
                return True
        return False

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "imperative_verbs": list(self.imperative_verbs),
            "imperative_nouns": list(self.imperative_nouns),
            "authority_phrases": list(self.authority_phrases),
            "sensitive_paths": list(self.sensitive_paths),
            "egress_allowlist": list(self.egress_allowlist),
            "extra_patterns": [
                {"subclass": p.subclass, "class": p.klass, "regex": p.regex, "confidence": p.confidence}
                for p in self.extra_patterns
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Ruleset":
        extras = [
            ExtraPattern(
                subclass=p["subclass"],
                klass=p["class"],
                regex=p["regex"],
                confidence=p.get("confidence", "exact"),
            )
            for p in doc.get("extra_patterns", [])
        ]
        rs = cls(extra_patterns=extras)
        for key in ("imperative_verbs", "imperative_nouns", "authority_phrases",
                    "sensitive_paths", "egress_allowlist"):
            if key in doc:
                setattr(rs, key, list(doc[key]))
        return rs

    @classmethod
    def load(cls, path: str) -> "Ruleset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_default: Optional[Ruleset] = None


def default_ruleset() -> Ruleset:
    global _default
    if _default is None:
        _default = Ruleset()
    return _default
