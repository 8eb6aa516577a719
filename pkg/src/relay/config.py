"""Relay server configuration dataclasses."""

from dataclasses import dataclass
from pathlib import Path


@dataclass
class RelayConfig:
    """Configuration for the rendezvous relay.

    Attributes:
        host: Interface to listen on
        port: TCP port to listen on (0 picks a free port)
        db_path: Metadata store file; None keeps it in memory
        room_ttl: Seconds a waiting room survives without a partner
        join_rate_limit: JOINs accepted per source address per rate window
        rate_window: Length of the rate-limit window in seconds
        frames_in_flight: Frames buffered per direction before reading pauses
        drain_timeout: Seconds glued sessions may finish after shutdown starts
        sweep_interval: Seconds between expiry sweeps

    Example:
        >>> config = RelayConfig(host="0.0.0.0", port=4455, db_path=Path("relay.duckdb"))
    """

    host: str = "127.0.0.1"
    port: int = 4455
    db_path: Path | None = None

    # Rendezvous
    room_ttl: float = 600.0
    join_rate_limit: int = 10
    rate_window: float = 60.0

    # Glue
    frames_in_flight: int = 4
    drain_timeout: float = 30.0
    sweep_interval: float = 5.0

    def __post_init__(self) -> None:
        if not (0 <= self.port <= 65535):
            raise ValueError(f"port must be in [0, 65535], got {self.port}")
        if self.room_ttl <= 0:
            raise ValueError("room_ttl must be positive")
        if self.join_rate_limit < 1:
            raise ValueError("join_rate_limit must be at least 1")
        if self.frames_in_flight < 1:
            raise ValueError("frames_in_flight must be at least 1")
        if self.db_path is not None:
            self.db_path = Path(self.db_path)
