"""Scripted message replay against a gateway or bare fixture.

A scenario is a JSON list of {delay_ms, message} entries; the replay
drives them through a connected endpoint in order and records every
message sent and received as a transcript suitable for golden-file
comparison.  With test-mode fixtures the transcript is fully
deterministic.
"""

from __future__ import annotations

import json
import time

from ..protocol import RpcMessage, decode_message, encode_message
from ..protocol.stdio import ConnectionFailed


def load_scenario(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError("scenario must be a JSON list")
    return doc


def _wire(msg: RpcMessage) -> dict:
    return json.loads(encode_message(msg).decode("utf-8"))


def replay(scenario: list, endpoint, counters=None, honor_delays: bool = True) -> list:
    """Run a scenario; returns the transcript as a list of dicts."""
    transcript = []
    for entry in scenario:
        delay_ms = entry.get("delay_ms", 0)
        if honor_delays and delay_ms:
            time.sleep(delay_ms / 1000.0)
        msg = decode_message(json.dumps(entry["message"]).encode("utf-8"))
        transcript.append({"dir": "send", "message": _wire(msg)})
        try:
            if msg.kind == "request":
                replies = endpoint.exchange(msg)
            else:
                notify = getattr(endpoint, "notify", None) or endpoint.send
                notify(msg)
                replies = []
        except OSError as exc:
            raise ConnectionFailed(f"endpoint unreachable: {exc}") from exc
        for reply in replies:
            transcript.append({"dir": "recv", "message": _wire(reply)})
    if counters is not None:
        transcript.append({"counters": counters()})
    return transcript


def transcript_jsonl(transcript: list) -> str:
    return "".join(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n" for entry in transcript)
