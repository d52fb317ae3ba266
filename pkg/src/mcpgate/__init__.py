"""mcpgate: an identity-aware security gateway for MCP traffic."""

__version__ = "0.1.0"
