"""Gateway configuration file: listen addresses plus paths to state files.

Everything the gateway touches on disk is named here so a single JSON
file describes a deployment.  Missing required files fail startup with
the offending path in the message rather than surfacing later as a
half-initialized proxy.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass
class GatewayConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8800
    admin_host: str = "127.0.0.1"
    admin_port: int = 8801
    registry_path: str = "registry.json"
    policy_path: str = "policy.json"
    identity_path: str = "identity.json"
    ledger_dir: str = "ledger"
    signing_key_path: str = "signing-key.pem"
    ruleset_path: str = ""          # empty -> built-in detector set
    failure_mode: str = "fail_closed"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        # Losing the audit trail must never silently degrade to best-effort.
        if self.failure_mode != "fail_closed":
            raise ConfigError("failure_mode", "only fail_closed is supported")


def load_config(path: str) -> GatewayConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(path, f"unreadable config: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(path, f"invalid JSON: {exc}") from exc
    if doc.get("schema") != 1:
        raise ConfigError("schema", f"unsupported config schema {doc.get('schema')!r}")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    listen = doc.get("listen", {})
    admin = doc.get("admin", {})
    paths = doc.get("paths", {})
    for key in ("registry", "policy", "identity"):
        if key not in paths:
            raise ConfigError(f"paths.{key}", "required path missing")
    cfg = GatewayConfig(
        listen_host=listen.get("host", "127.0.0.1"),
        listen_port=int(listen.get("port", 8800)),
        admin_host=admin.get("host", "127.0.0.1"),
        admin_port=int(admin.get("port", 8801)),
        registry_path=resolve(paths["registry"]),
        policy_path=resolve(paths["policy"]),
        identity_path=resolve(paths["identity"]),
        ledger_dir=resolve(paths.get("ledger", "ledger")),
        signing_key_path=resolve(paths.get("signing_key", "signing-key.pem")),
        ruleset_path=resolve(paths["ruleset"]) if paths.get("ruleset") else "",
        failure_mode=doc.get("failure_mode", "fail_closed"),
        extra=doc.get("extra", {}),
    )
    for label, p in (
        ("paths.registry", cfg.registry_path),
        ("paths.policy", cfg.policy_path),
        ("paths.identity", cfg.identity_path),
    ):
        if not os.path.isfile(p):
            raise ConfigError(label, f"file not found: {p}")
    if cfg.ruleset_path and not os.path.isfile(cfg.ruleset_path):
        raise ConfigError("paths.ruleset", f"file not found: {cfg.ruleset_path}")
    os.makedirs(cfg.ledger_dir, exist_ok=True)
    return cfg
