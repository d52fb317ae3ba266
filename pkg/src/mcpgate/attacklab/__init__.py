"""Fixture MCP servers and scenario replay for attack reproduction."""

from . import corpus
from .fixtures import (
    FIXTURE_IDS,
    TOOL_TABLES,
    FixtureCore,
    FixtureError,
    HttpFixture,
    PortInUse,
    serve,
    serve_http,
    stdio_command,
)
from .replay import load_scenario, replay, transcript_jsonl

__all__ = [
    "corpus",
    "FIXTURE_IDS",
    "TOOL_TABLES",
    "FixtureCore",
    "FixtureError",
    "HttpFixture",
    "PortInUse",
    "serve",
    "serve_http",
    "stdio_command",
    "load_scenario",
    "replay",
    "transcript_jsonl",
]
