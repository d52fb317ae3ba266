"""Gateway proper: session pipeline, upstream listener, admin API."""

from .admin import AdminHttpServer
from .app import GatewayApp, signing_identity_for
from .config import ConfigError, GatewayConfig, load_config
from .core import GatewayCore, SessionContext
from .identity import IdentityEntry, IdentityMap, Unauthenticated
from .server import GatewayHttpServer

__all__ = [
    "AdminHttpServer",
    "ConfigError",
    "GatewayApp",
    "GatewayConfig",
    "GatewayCore",
    "GatewayHttpServer",
    "IdentityEntry",
    "IdentityMap",
    "SessionContext",
    "Unauthenticated",
    "load_config",
    "signing_identity_for",
]
