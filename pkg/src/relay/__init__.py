"""Rendezvous relay: room registry, metadata store and the forwarding server."""

from src.relay.config import RelayConfig
from src.relay.registry import RoomRecord, RoomRegistry, RoomState
from src.relay.server import DirectionStats, RelayServer, RelaySession, observe_address
from src.relay.store import MetadataStore, RelayStats

__all__ = [
    "RelayConfig",
    "RoomRecord",
    "RoomRegistry",
    "RoomState",
    "RelayServer",
    "RelaySession",
    "DirectionStats",
    "observe_address",
    "MetadataStore",
    "RelayStats",
]
