"""
Rendezvous bookkeeping for the relay.

The :class:`RoomRegistry` is the only shared mutable structure on the relay:
it pairs a sender and a receiver presenting the same room identifier, expires
rooms nobody joined, and rate-limits JOINs per source address.
"""

import logging
import threading
import time
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

from src.errors import ProtocolError
from src.pake.spake2 import Role
from src.protocol.channel import FrameChannel
from src.protocol.wire import (
    ERROR_RATE_LIMITED,
    ERROR_ROLE_TAKEN,
    ERROR_ROOM_EXPIRED,
    ERROR_ROOM_FULL,
    ERROR_VERSION,
    PROTOCOL_VERSION,
    JoinPayload,
)
from src.relay.config import RelayConfig
from src.relay.store import MetadataStore

logger = logging.getLogger(__name__)


class RoomState(Enum):
    WAITING = "waiting"
    GLUED = "glued"
    CLOSED = "closed"


class JoinOutcome(Enum):
    WAITING = "waiting"
    GLUED = "glued"


class JoinRejectedError(ProtocolError):
    """Raised when a JOIN cannot be honoured; reason goes into the ERROR frame."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"JOIN rejected: {reason}")
        self.reason = reason


@dataclass
class PeerConnection:
    """One client connection as seen by the relay.

    Attributes:
        channel: Frame channel for the client socket
        role: Role announced in JOIN
        address: Transport-observed remote address, "ip:port"
        host: IP part of the address (rate-limit key)
    """

    channel: FrameChannel
    role: Role
    address: str
    host: str


@dataclass
class RoomRecord:
    """Rendezvous entry keyed by room identifier."""

    room_id: bytes
    first_peer: PeerConnection
    created_at: float
    state: RoomState = RoomState.WAITING
    second_peer: PeerConnection | None = None
    finished: threading.Event = field(default_factory=threading.Event, repr=False)

    @property
    def prefix(self) -> str:
        """Short identifier safe for logs."""
        return self.room_id.hex()[:8]

    def peer_for(self, role: Role) -> PeerConnection:
        if self.first_peer.role is role:
            return self.first_peer
        if self.second_peer is None:
            raise LookupError(f"No {role.name.lower()} in room {self.prefix}")
        return self.second_peer


class JoinRateLimiter:
    """Sliding-window counter of JOINs per source address.

    Hosts whose window has emptied are forgotten, so the table only holds
    addresses seen within the last ``window`` seconds.
    """

    def __init__(self, limit: int, window: float, clock: Callable[[], float] = time.monotonic):
        self.limit = limit
        self.window = window
        self._clock = clock
        self._hits: dict[str, deque[float]] = {}

    def __len__(self) -> int:
        return len(self._hits)

    def allow(self, host: str) -> bool:
        now = self._clock()
        hits = self._hits.setdefault(host, deque())
        self._drop_stale(hits, now)
        if len(hits) >= self.limit:
            return False
        hits.append(now)
        return True

    def prune(self, now: float | None = None) -> int:
        """Forget hosts with no JOIN inside the window.

        Returns:
            Number of hosts removed
        """
        now = self._clock() if now is None else now
        idle = [host for host, hits in self._hits.items() if not self._drop_stale(hits, now)]
        for host in idle:
            del self._hits[host]
        return len(idle)

    def _drop_stale(self, hits: deque[float], now: float) -> int:
        while hits and hits[0] <= now - self.window:
            hits.popleft()
        return len(hits)


class RoomRegistry:
    """Synchronized map of room identifiers to rendezvous records.

    Example:
        >>> registry = RoomRegistry(RelayConfig(), MetadataStore())
        >>> outcome, room = registry.handle_join(peer, JoinPayload(room_id, Role.SENDER))
        >>> outcome
        <JoinOutcome.WAITING: 'waiting'>
    """

    def __init__(
        self,
        config: RelayConfig,
        store: MetadataStore,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config
        self.store = store
        self._clock = clock
        self._lock = threading.Lock()
        self._rooms: dict[bytes, RoomRecord] = {}
        self._limiter = JoinRateLimiter(config.join_rate_limit, config.rate_window, clock)

    def handle_join(
        self, peer: PeerConnection, payload: JoinPayload
    ) -> tuple[JoinOutcome, RoomRecord]:
        """Register a JOIN.

        The first arrival leaves a waiting room; a second arrival with the
        complementary role glues it. Replying ROOM_READY is the caller's job,
        so no socket I/O happens under the registry lock.

        Raises:
            JoinRejectedError: For version mismatch, rate limit, taken role or full room
        """
        if payload.protocol_version != PROTOCOL_VERSION:
            raise JoinRejectedError(ERROR_VERSION)

        with self._lock:
            if not self._limiter.allow(peer.host):
                logger.warning(f"Rate limit hit for {peer.host}")
                raise JoinRejectedError(ERROR_RATE_LIMITED)

            expired = self._collect_expired(self._clock())
            rejection = None
            room = self._rooms.get(payload.room_id)
            if room is None:
                room = RoomRecord(
                    room_id=payload.room_id, first_peer=peer, created_at=self._clock()
                )
                self._rooms[payload.room_id] = room
                outcome = JoinOutcome.WAITING
            elif room.state is RoomState.GLUED:
                rejection = ERROR_ROOM_FULL
            elif room.first_peer.role is payload.role:
                rejection = ERROR_ROLE_TAKEN
            else:
                room.second_peer = peer
                room.state = RoomState.GLUED
                outcome = JoinOutcome.GLUED

        self._close_expired(expired)
        if rejection is not None:
            raise JoinRejectedError(rejection)
        self.store.record_room(room.room_id.hex(), peer.role.name.lower(), peer.address, "waiting")
        if outcome is JoinOutcome.GLUED:
            self.store.update_room_state(room.room_id.hex(), RoomState.GLUED.value)
            logger.info(f"Room {room.prefix} glued")
        else:
            role = peer.role.name.lower()
            logger.info(f"Room {room.prefix} waiting for a partner ({role} joined)")
        return outcome, room

    def _collect_expired(self, now: float) -> list[RoomRecord]:
        """Remove stale waiting rooms from the map. Caller holds the lock."""
        stale = [
            room
            for room in self._rooms.values()
            if room.state is RoomState.WAITING and now - room.created_at >= self.config.room_ttl
        ]
        for room in stale:
            room.state = RoomState.CLOSED
            del self._rooms[room.room_id]
        return stale

    def _close_expired(self, rooms: list[RoomRecord]) -> None:
        for room in rooms:
            room.first_peer.channel.send_error(ERROR_ROOM_EXPIRED)
            room.first_peer.channel.close()
            room.finished.set()
            self.store.update_room_state(room.room_id.hex(), RoomState.CLOSED.value)
        if rooms:
            logger.warning(f"Expired {len(rooms)} waiting room(s)")

    def expire_rooms(self, now: float | None = None) -> int:
        """Close waiting rooms older than the room TTL; glued rooms are untouched.

        Also forgets rate-limit history for hosts idle longer than the window.

        Args:
            now: Monotonic timestamp; defaults to the registry clock

        Returns:
            Number of rooms expired
        """
        now = self._clock() if now is None else now
        with self._lock:
            expired = self._collect_expired(now)
            self._limiter.prune(now)
        self._close_expired(expired)
        return len(expired)

    def abandon(self, room: RoomRecord) -> bool:
        """Drop a waiting room whose only peer disconnected.

        Returns:
            True if the room was still waiting and has been removed
        """
        with self._lock:
            if room.state is not RoomState.WAITING:
                return False
            room.state = RoomState.CLOSED
            self._rooms.pop(room.room_id, None)
        room.finished.set()
        self.store.update_room_state(room.room_id.hex(), RoomState.CLOSED.value)
        logger.info(f"Room {room.prefix} abandoned by its waiting peer")
        return True

    def close_room(self, room: RoomRecord) -> None:
        """Mark a room closed and release anyone waiting on it."""
        with self._lock:
            room.state = RoomState.CLOSED
            if self._rooms.get(room.room_id) is room:
                del self._rooms[room.room_id]
        room.finished.set()
        self.store.update_room_state(room.room_id.hex(), RoomState.CLOSED.value)

    def waiting_rooms(self) -> list[RoomRecord]:
        with self._lock:
            return [r for r in self._rooms.values() if r.state is RoomState.WAITING]

    @property
    def rooms_active(self) -> int:
        with self._lock:
            return len(self._rooms)
