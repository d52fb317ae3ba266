"""Token-based principal resolution and the downstream credential vault.

Hosts authenticate to the gateway with per-user bearer tokens; the
gateway then selects that user's own downstream credentials per server,
so no shared organizational token ever crosses the proxy.  The map is a
JSON file; an external verifier can be plugged in for anything fancier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..policy import Principal


class Unauthenticated(Exception):
    pass


@dataclass
class IdentityEntry:
    user_id: str
    roles: list
    downstream: dict = field(default_factory=dict)  # server_id (or "*") -> {"headers": .., "env": ..}


class IdentityMap:
    def __init__(self, tokens: dict, verifier: Optional[Callable[[str], Optional[Principal]]] = None):
        self._tokens = tokens
        self._verifier = verifier
        self._by_user = {entry.user_id: entry for entry in tokens.values()}

    @classmethod
    def from_dict(cls, doc: dict) -> "IdentityMap":
        if doc.get("schema") != 1:
            raise ValueError(f"unsupported identity map schema {doc.get('schema')!r}")
        tokens = {}
        for token, body in doc.get("tokens", {}).items():
            if not body.get("user_id"):
                raise ValueError(f"identity entry for token {token!r} lacks user_id")
            tokens[token] = IdentityEntry(
                user_id=body["user_id"],
                roles=list(body.get("roles", ())),
                downstream=dict(body.get("downstream", {})),
            )
        return cls(tokens)

    @classmethod
    def load(cls, path: str) -> "IdentityMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def authenticate(self, token: Optional[str]) -> Principal:
        if not token:
            raise Unauthenticated("missing bearer token")
        entry = self._tokens.get(token)
        if entry is not None:
            return Principal(user_id=entry.user_id, roles=set(entry.roles))
        if self._verifier is not None:
            principal = self._verifier(token)
            if principal is not None:
                return principal
        raise Unauthenticated("unknown token")

    def downstream_credentials(self, user_id: str, server_id: str) -> dict:
        """Per-user credentials for one server; exact id beats the wildcard."""
        entry = self._by_user.get(user_id)
        if entry is None:
            return {}
        return dict(entry.downstream.get(server_id) or entry.downstream.get("*") or {})
