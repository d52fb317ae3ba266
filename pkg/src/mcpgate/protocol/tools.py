"""Tool metadata as exchanged in tools/list results."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .messages import ProtocolViolation


@dataclass
class ToolDescriptor:
    """One tool as advertised by a downstream server.

    ``input_schema`` is kept as the server provided it (normally a JSON
    Schema object); ``annotations`` is an optional string map.
    """

    server_id: str
    name: str
    description: str = ""
    input_schema: Any = None
    annotations: Optional[dict] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("tool name must be nonempty")

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"name": self.name, "description": self.description}
        if self.input_schema is not None:
            wire["inputSchema"] = self.input_schema
        if self.annotations:
            wire["annotations"] = self.annotations
        return wire

    @classmethod
    def from_wire(cls, server_id: str, obj: dict) -> "ToolDescriptor":
        name = obj.get("name", "")
        if not isinstance(name, str) or not name:
            raise ProtocolViolation("tool entry is missing a name")
        return cls(
            server_id=server_id,
            name=name,
            description=obj.get("description", ""),
            input_schema=obj.get("inputSchema"),
            annotations=obj.get("annotations"),
        )


def parse_listing(server_id: str, result: dict) -> list[ToolDescriptor]:
    """Parse a tools/list result body into descriptors."""
    tools = result.get("tools", []) if isinstance(result, dict) else None
    if not isinstance(tools, list):
        raise ProtocolViolation("tools/list result must carry a tools array")
    return [ToolDescriptor.from_wire(server_id, t) for t in tools if isinstance(t, dict)]
