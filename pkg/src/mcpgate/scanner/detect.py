"""Deterministic content detectors.

Exact detectors match secrets and PII by pattern (plus checksum where one
exists); heuristic detectors flag injection-shaped language.  All spans
are byte offsets into the UTF-8 encoding of the scanned text, and all
detectors are pure functions of (text, direction, ruleset) so repeated
scans are byte-identical.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..protocol.tools import ToolDescriptor
from .rules import Ruleset, default_ruleset

DIRECTIONS = ("to_agent", "to_server")

# Placeholders emitted by redact(); spans inside them are never re-flagged,
# which is what makes redaction idempotent.
PLACEHOLDER_RE = re.compile(r"⟦[A-Z_]+:[A-Z_]+:f[0-9a-f]{10}⟧")

_EMAIL_RE = re.compile(r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9](?:[A-Za-z0-9.-]*[A-Za-z0-9])?\.[A-Za-z]{2,}\b")
_SSN_RE = re.compile(r"(?<!\d)(\d{3})-(\d{2})-(\d{4})(?!\d)")
_CARD_RE = re.compile(r"(?<!\d)\d{13,19}(?!\d)")
_AWS_KEY_RE = re.compile(r"\bAKIA[A-Z0-9]{16}\b")
_PEM_RE = re.compile(r"-----BEGIN [A-Z ]*PRIVATE KEY-----")
_BEARER_RE = re.compile(r"\bBearer\s+[A-Za-z0-9._~+/=-]{20,}")
_LABELED_RE = re.compile(
    r"(?i)\b(?:api[_-]?key|apikey|secret|token|passwd|password|credential|access[_-]?key)s?\b"
    r"\s*[:=]\s*[\"']?([A-Za-z0-9+/_.=-]{32,})"
)
_URL_RE = re.compile(r"https?://([A-Za-z0-9][A-Za-z0-9.-]*)(?::\d+)?(?:/[^\s\"'<>)\]]*)?")
_SELF_REF_RE = re.compile(r"(?i)\b(?:using|use|call|invoke|via)\s+(?:the\s+)?([A-Za-z][\w.-]*)\s+tool\b")


@dataclass
class Finding:
    """One detection: what was matched, where, and how confidently.

    The raw matched text is never stored — only the span and a masked
    preview — so findings are safe to log and export.
    """

    finding_id: str
    klass: str
    subclass: str
    span: tuple
    confidence: str
    direction: str
    redacted_preview: str
    path: tuple = ()

    def to_dict(self) -> dict:
        doc = {
            "finding_id": self.finding_id,
            "class": self.klass,
            "subclass": self.subclass,
            "span": [self.span[0], self.span[1]],
            "confidence": self.confidence,
            "direction": self.direction,
            "redacted_preview": self.redacted_preview,
        }
        if self.path:
            doc["path"] = list(self.path)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Finding":
        return cls(
            finding_id=doc["finding_id"],
            klass=doc["class"],
            subclass=doc["subclass"],
            span=(doc["span"][0], doc["span"][1]),
            confidence=doc["confidence"],
            direction=doc["direction"],
            redacted_preview=doc["redacted_preview"],
            path=tuple(doc.get("path", ())),
        )


def luhn_valid(digits: str) -> bool:
    """Checksum over a contiguous digit string, rightmost digit is the check."""
    total = 0
    for pos, ch in enumerate(reversed(digits)):
        d = int(ch)
        if pos % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def _entropy(value: str) -> float:
    counts: dict = {}
    for ch in value:
        counts[ch] = counts.get(ch, 0) + 1
    n = len(value)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def _mask(raw: str) -> str:
    if len(raw) <= 6:
        return "*" * len(raw)
    return raw[:2] + "*" * min(len(raw) - 4, 12) + raw[-2:]


@dataclass
class _Candidate:
    klass: str
    subclass: str
    start: int  # character offsets until finalization
    end: int
    confidence: str
    raw: str


class _Scanner:
    def __init__(self, text: str, direction: str, ruleset: Ruleset, known_tools: Sequence[str]):
        self.text = text
        self.direction = direction
        self.rules = ruleset
        self.known_tools = set(known_tools)
        self.masked = [(m.start(), m.end()) for m in PLACEHOLDER_RE.finditer(text)]
        self.candidates: list[_Candidate] = []

    def _in_placeholder(self, start: int, end: int) -> bool:
        return any(start < pe and ps < end for ps, pe in self.masked)

    def add(self, klass: str, subclass: str, start: int, end: int, confidence: str) -> None:
        if self._in_placeholder(start, end):
            return
        self.candidates.append(_Candidate(klass, subclass, start, end, confidence, self.text[start:end]))

    def run(self) -> list[Finding]:
        self._exact()
        self._heuristic()
        return self._finalize()

    def _exact(self) -> None:
        for m in _EMAIL_RE.finditer(self.text):
            self.add("pii", "email", m.start(), m.end(), "exact")
        for m in _SSN_RE.finditer(self.text):
            if m.group(1) != "000":
                self.add("pii", "ssn", m.start(), m.end(), "exact")
        for m in _CARD_RE.finditer(self.text):
            if luhn_valid(m.group(0)):
                self.add("pii", "credit_card", m.start(), m.end(), "exact")
        for m in _AWS_KEY_RE.finditer(self.text):
            self.add("secret", "aws_access_key", m.start(), m.end(), "exact")
        for m in _PEM_RE.finditer(self.text):
            self.add("secret", "private_key_block", m.start(), m.end(), "exact")
        for m in _BEARER_RE.finditer(self.text):
            self.add("secret", "bearer_token", m.start(), m.end(), "exact")
        for m in _LABELED_RE.finditer(self.text):
            if _entropy(m.group(1)) >= 3.0:
                self.add("secret", "labeled_secret", m.start(1), m.end(1), "exact")
        for pat in self.rules.extra_patterns:
            for m in re.finditer(pat.regex, self.text):
                self.add(pat.klass, pat.subclass, m.start(), m.end(), pat.confidence)

    def _heuristic(self) -> None:
        verbs = "|".join(re.escape(v) for v in self.rules.imperative_verbs)
        nouns = "|".join(re.escape(n) for n in self.rules.imperative_nouns)
        if verbs and nouns:
            # Window stops at sentence breaks (". " or newline) but may cross
            # dots inside paths like ~/.aws/credentials.
            imperative = re.compile(
                rf"(?i)\b(?:{verbs})(?:e?s|ed|ing)?\b(?:(?!\.\s)[^\n]){{0,80}}?\b(?:{nouns})\b"
            )
            for m in imperative.finditer(self.text):
                self.add("injection", "imperative_instruction", m.start(), m.end(), "heuristic")
        lower = self.text.lower()
        for phrase in self.rules.authority_phrases:
            start = 0
            while True:
                idx = lower.find(phrase.lower(), start)
                if idx < 0:
                    break
                self.add("injection", "authority_framing", idx, idx + len(phrase), "heuristic")
                start = idx + len(phrase)
        for m in _SELF_REF_RE.finditer(self.text):
            name = m.group(1)
            if name in self.known_tools or "_" in name:
                self.add("injection", "tool_self_reference", m.start(), m.end(), "heuristic")
        for m in _URL_RE.finditer(self.text):
            if not self.rules.host_allowed(m.group(1)):
                self.add("injection", "exfil_url", m.start(), m.end(), "heuristic")
        taken: list[tuple] = []
        for literal in sorted(self.rules.sensitive_paths, key=len, reverse=True):
            pat = re.compile(r"(?<![A-Za-z0-9_])" + re.escape(literal) + r"(?![A-Za-z0-9_])", re.I)
            for m in pat.finditer(self.text):
                if any(m.start() < e and s < m.end() for s, e in taken):
                    continue
                taken.append((m.start(), m.end()))
                self.add("injection", "sensitive_path", m.start(), m.end(), "heuristic")

    def _finalize(self) -> list[Finding]:
        # Character offsets -> byte offsets (identity for pure-ASCII text).
        if self.text.isascii():
            to_bytes = None
        else:
            to_bytes = [0] * (len(self.text) + 1)
            pos = 0
            for i, ch in enumerate(self.text):
                to_bytes[i] = pos
                pos += len(ch.encode("utf-8"))
            to_bytes[len(self.text)] = pos

        digest = hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:8]
        kept: dict[str, list[tuple]] = {}
        findings = []
        order = sorted(self.candidates, key=lambda c: (c.start, -(c.end - c.start), c.subclass))
        for cand in order:
            spans = kept.setdefault(cand.subclass, [])
            # Within one subclass overlapping spans collapse to the first.
            if any(cand.start < e and s < cand.end for s, e in spans):
                continue
            spans.append((cand.start, cand.end))
            b_start = cand.start if to_bytes is None else to_bytes[cand.start]
            b_end = cand.end if to_bytes is None else to_bytes[cand.end]
            fid = "f" + hashlib.sha256(
                f"{cand.subclass}|{b_start}|{b_end}|{digest}".encode()
            ).hexdigest()[:10]
            findings.append(
                Finding(
                    finding_id=fid,
                    klass=cand.klass,
                    subclass=cand.subclass,
                    span=(b_start, b_end),
                    confidence=cand.confidence,
                    direction=self.direction,
                    redacted_preview=_mask(cand.raw),
                )
            )
        findings.sort(key=lambda f: (f.span[0], -(f.span[1] - f.span[0]), f.subclass))
        return findings


def scan_text(
    text: str,
    direction: str,
    ruleset: Optional[Ruleset] = None,
    known_tools: Sequence[str] = (),
) -> list[Finding]:
    """Run every detector over one string; findings sorted by span start."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    return _Scanner(text, direction, ruleset or default_ruleset(), known_tools).run()


def scan_tool_description(
    tool: ToolDescriptor,
    ruleset: Optional[Ruleset] = None,
    known_tools: Sequence[str] = (),
) -> list[Finding]:
    """Scan a tool's description and annotation strings (injection surface)."""
    findings = []
    for f in scan_text(tool.description or "", "to_agent", ruleset, known_tools):
        f.path = ("description",)
        findings.append(f)
    for key, value in sorted((tool.annotations or {}).items()):
        if isinstance(value, str):
            for f in scan_text(value, "to_agent", ruleset, known_tools):
                f.path = ("annotations", key)
                findings.append(f)
    return findings


def scan_structure(
    value,
    direction: str,
    ruleset: Optional[Ruleset] = None,
    known_tools: Sequence[str] = (),
) -> list[Finding]:
    """Scan every string inside a decoded JSON value, tagging each finding
    with its path.  Works on values, not wire bytes, so JSON escaping
    cannot hide content from the detectors.
    """
    findings: list[Finding] = []

    def walk(node, path: tuple) -> None:
        if isinstance(node, str):
            for f in scan_text(node, direction, ruleset, known_tools):
                f.path = path
                findings.append(f)
        elif isinstance(node, dict):
            for key in node:
                walk(node[key], path + (key,))
        elif isinstance(node, list):
            for idx, item in enumerate(node):
                walk(item, path + (idx,))

    walk(value, ())
    return findings
