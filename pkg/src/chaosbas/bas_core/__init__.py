"""Simulated breach-attack-simulation C2 core: state machine plus HTTP API."""

from .state import (
    Agent,
    ClockMode,
    CoreState,
    Link,
    LinkResult,
    LinkStatus,
    Operation,
    OperationState,
    ServerConfig,
)
from .server import BasServer, start_server

__all__ = [
    "Agent",
    "BasServer",
    "ClockMode",
    "CoreState",
    "Link",
    "LinkResult",
    "LinkStatus",
    "Operation",
    "OperationState",
    "ServerConfig",
    "start_server",
]
