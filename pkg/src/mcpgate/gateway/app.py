"""Assemble a running gateway from one config file."""

from __future__ import annotations

import json
import os

from ..anomaly import AnomalyEngine
from ..policy import PolicyEngine
from ..provenance import Ledger, SigningIdentity
from ..ratelimit import RateLimiter
from ..registry import RegistryStore
from ..scanner import Ruleset, default_ruleset
from .admin import AdminHttpServer
from .config import GatewayConfig, load_config
from .core import GatewayCore
from .identity import IdentityMap
from .server import GatewayHttpServer
from ..policy import load_policy_config


def signing_identity_for(path: str) -> SigningIdentity:
    """Load the gateway's signing key, minting one on first start."""
    if os.path.exists(path):
        return SigningIdentity.load(path)
    identity = SigningIdentity.generate()
    identity.save(path)
    return identity


class GatewayApp:
    """Everything one deployment runs: the core plus both HTTP listeners."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.identity_map = IdentityMap.load(config.identity_path)
        with open(config.policy_path, encoding="utf-8") as fh:
            policy_doc = json.load(fh)
        rules, limits, actions, overrides = load_policy_config(policy_doc)
        registry = RegistryStore(config.registry_path)
        ledger = Ledger(config.ledger_dir, signing_identity_for(config.signing_key_path))
        ruleset = Ruleset.load(config.ruleset_path) if config.ruleset_path else default_ruleset()
        self.core = GatewayCore(
            registry=registry,
            policy=PolicyEngine(rules, actions, overrides),
            limiter=RateLimiter(limits),
            ledger=ledger,
            identity=self.identity_map,
            ruleset=ruleset,
            anomaly=AnomalyEngine(ledger),
            policy_doc=policy_doc,
        )
        self.upstream = GatewayHttpServer(
            self.core, self.identity_map, config.listen_host, config.listen_port
        )
        self.admin = AdminHttpServer(
            self.core,
            self.identity_map,
            config.admin_host,
            config.admin_port,
            policy_path=config.policy_path,
        )

    @classmethod
    def from_path(cls, path: str) -> "GatewayApp":
        return cls(load_config(path))

    def start(self) -> "GatewayApp":
        self.upstream.start()
        self.admin.start()
        return self

    def close(self) -> None:
        self.core.close()
        self.upstream.close()
        self.admin.close()
        self.core.ledger.close()
