"""Span replacement with stable placeholders.

Each redacted region becomes `⟦CLASS:SUBCLASS:finding_id⟧`; overlapping
findings collapse into one placeholder taken from the widest span, so a
card number inside a URL is masked exactly once.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .detect import Finding


class SpanMismatch(Exception):
    """Finding offsets do not fit the text being redacted."""


@dataclass
class RedactionResult:
    text: str
    applied: list = field(default_factory=list)
    placeholder_map: dict = field(default_factory=dict)

    @property
    def changed(self) -> bool:
        return bool(self.applied)


def placeholder_for(finding: Finding) -> str:
    return f"⟦{finding.klass.upper()}:{finding.subclass.upper()}:{finding.finding_id}⟧"


def redact(text: str, findings: list) -> RedactionResult:
    """Replace every finding span; bytes outside the spans are untouched."""
    data = text.encode("utf-8")
    for f in findings:
        start, end = f.span
        if not (0 <= start < end <= len(data)):
            raise SpanMismatch(f"finding {f.finding_id} span {f.span} exceeds text of {len(data)} bytes")
    if not findings:
        return RedactionResult(text=text)

    groups: list[list] = []
    for f in sorted(findings, key=lambda f: (f.span[0], -(f.span[1] - f.span[0]))):
        if groups and f.span[0] < max(m.span[1] for m in groups[-1]):
            groups[-1].append(f)
        else:
            groups.append([f])

    out = bytearray()
    cursor = 0
    applied: list = []
    placeholder_map: dict = {}
    for group in groups:
        start = min(f.span[0] for f in group)
        end = max(f.span[1] for f in group)
        rep = max(group, key=lambda f: (f.span[1] - f.span[0], -f.span[0]))
        token = placeholder_for(rep)
        out += data[cursor:start]
        out += token.encode("utf-8")
        cursor = end
        for f in group:
            applied.append(f)
            placeholder_map[f.finding_id] = token
    out += data[cursor:]
    return RedactionResult(text=out.decode("utf-8"), applied=applied, placeholder_map=placeholder_map)


def redact_structure(value, findings: list):
    """Apply path-tagged findings to a decoded JSON value.

    Returns (new_value, RedactionResult) where the result's text field is
    unused and its applied/placeholder_map aggregate all paths.
    """
    by_path: dict[tuple, list] = {}
    for f in findings:
        by_path.setdefault(tuple(f.path), []).append(f)

    new_value = copy.deepcopy(value)
    summary = RedactionResult(text="")
    for path, group in by_path.items():
        if not path and isinstance(new_value, str):
            res = redact(new_value, group)
            new_value = res.text
        else:
            parent = new_value
            for key in path[:-1]:
                parent = parent[key]
            leaf = parent[path[-1]]
            if not isinstance(leaf, str):
                raise SpanMismatch(f"path {path!r} does not point at a string")
            res = redact(leaf, group)
            parent[path[-1]] = res.text
        summary.applied.extend(res.applied)
        summary.placeholder_map.update(res.placeholder_map)
    return new_value, summary
