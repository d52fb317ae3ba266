"""Inline DLP and injection scanning."""

from .rules import ExtraPattern, Ruleset, default_ruleset
from .detect import (
    DIRECTIONS,
    Finding,
    luhn_valid,
    scan_structure,
    scan_text,
    scan_tool_description,
)
from .redact import RedactionResult, SpanMismatch, placeholder_for, redact, redact_structure

__all__ = [
    "Ruleset",
    "ExtraPattern",
    "default_ruleset",
    "DIRECTIONS",
    "Finding",
    "luhn_valid",
    "scan_text",
    "scan_tool_description",
    "scan_structure",
    "RedactionResult",
    "SpanMismatch",
    "placeholder_for",
    "redact",
    "redact_structure",
]
