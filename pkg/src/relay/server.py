"""
Relay server: rendezvous by room identifier, then verbatim frame forwarding.

Each accepted connection gets its own handler thread. The first frame must be
a JOIN; the registry either parks the connection in a waiting room or glues it
to the partner already waiting there. A glued pair is serviced by a
:class:`RelaySession`, which pumps each direction through a reader thread and a
writer thread with at most ``frames_in_flight`` frames between them.

Nothing the clients send after ROOM_READY is interpreted or persisted; the
relay only counts frames and bytes.
"""

import logging
import queue
import select
import socket
import threading
import time
import uuid
from collections import Counter, deque
from collections.abc import Callable
from dataclasses import dataclass, field

from src.errors import ProtocolError, TransportError
from src.pake.spake2 import Role
from src.protocol.channel import FrameChannel
from src.protocol.wire import (
    ERROR_PEER_GONE,
    ERROR_PROTOCOL,
    Frame,
    FrameKind,
    JoinPayload,
    format_address,
)
from src.relay.config import RelayConfig
from src.relay.registry import (
    JoinOutcome,
    JoinRejectedError,
    PeerConnection,
    RoomRecord,
    RoomRegistry,
)
from src.relay.store import (
    OUTCOME_COMPLETED,
    OUTCOME_PEER_GONE,
    OUTCOME_SHUTDOWN,
    MetadataStore,
    RelayStats,
)

logger = logging.getLogger(__name__)

JOIN_TIMEOUT = 30.0
POLL_INTERVAL = 0.5
ERROR_SEND_TIMEOUT = 2.0

# Frames sealed under the session key; only these count toward bytes_relayed
SEALED_KINDS = frozenset({FrameKind.PEER_INFO, FrameKind.MANIFEST, FrameKind.CHUNK})

# Queue markers
_SOURCE_CLOSED = object()
_STOP = object()

FrameHook = Callable[["RelaySession", Role, Frame], Frame]


def observe_address(sock: socket.socket) -> str:
    """Return the transport-observed remote address of a connection as 'ip:port'."""
    host, port = sock.getpeername()[:2]
    return format_address(host, port)


@dataclass
class DirectionStats:
    """Counters for one forwarding direction of a session.

    Attributes:
        source: Role whose frames this direction carries
        frames: Frames delivered to the destination
        payload_bytes: Sealed payload bytes delivered (PEER_INFO, MANIFEST, CHUNK)
        peak_in_flight: Most frames read but not yet delivered at any instant
        peak_buffered_bytes: Most wire bytes held by the relay at any instant
        kinds: Delivered frame count per kind
    """

    source: Role
    frames: int = 0
    payload_bytes: int = 0
    in_flight: int = 0
    buffered_bytes: int = 0
    peak_in_flight: int = 0
    peak_buffered_bytes: int = 0
    kinds: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def enqueued(self, frame: Frame) -> None:
        with self._lock:
            self.in_flight += 1
            self.buffered_bytes += frame.wire_size
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
            self.peak_buffered_bytes = max(self.peak_buffered_bytes, self.buffered_bytes)

    def dequeued(self, frame: Frame, delivered: bool) -> None:
        with self._lock:
            self.in_flight -= 1
            self.buffered_bytes -= frame.wire_size
            if delivered:
                self.frames += 1
                if frame.kind in SEALED_KINDS:
                    self.payload_bytes += len(frame.payload)
                self.kinds[frame.kind] += 1


class RelaySession:
    """Bidirectional glue between the two peers of one room.

    The session ends when a FIN has been forwarded (outcome "completed"), when
    either side disconnects (the other side receives ERROR "peer gone"), or
    when the server forces it during shutdown.

    Example:
        >>> session = RelaySession(room, store)
        >>> session.run()
        'completed'
    """

    def __init__(
        self,
        room: RoomRecord,
        store: MetadataStore,
        frames_in_flight: int = 4,
        frame_hook: FrameHook | None = None,
    ) -> None:
        self.session_id = uuid.uuid4().hex
        self.room = room
        self.store = store
        self.frame_hook = frame_hook
        self.outcome: str | None = None
        self.started_at = time.monotonic()
        self.ended_at: float | None = None

        self._channels = {role: room.peer_for(role).channel for role in Role}
        self.stats = {role: DirectionStats(role) for role in Role}
        self._slots = {role: threading.BoundedSemaphore(frames_in_flight) for role in Role}
        self._queues: dict[Role, queue.Queue] = {role: queue.Queue() for role in Role}
        self._done = threading.Event()
        self._outcome_lock = threading.Lock()

    @property
    def bytes_relayed(self) -> int:
        return sum(s.payload_bytes for s in self.stats.values())

    @property
    def frames_relayed(self) -> int:
        return sum(s.frames for s in self.stats.values())

    def finish(self, outcome: str) -> None:
        """Record the outcome (first caller wins) and wake run()."""
        with self._outcome_lock:
            if self.outcome is None:
                self.outcome = outcome
        self._done.set()

    def run(self) -> str:
        """Forward frames until the session ends, then close both connections.

        Returns:
            Session outcome
        """
        self.store.open_session(self.session_id, self.room.prefix)
        workers = []
        for role in Role:
            workers.append(threading.Thread(target=self._read_loop, args=(role,), daemon=True))
            workers.append(threading.Thread(target=self._write_loop, args=(role,), daemon=True))
        for worker in workers:
            worker.start()

        self._done.wait()
        if self.outcome == OUTCOME_PEER_GONE:
            for channel in self._channels.values():
                channel.settimeout(ERROR_SEND_TIMEOUT)
                channel.send_error(ERROR_PEER_GONE)
        for channel in self._channels.values():
            channel.close()
        for q in self._queues.values():
            q.put(_STOP)
        for worker in workers:
            worker.join(timeout=ERROR_SEND_TIMEOUT)

        self.ended_at = time.monotonic()
        self.store.close_session(
            self.session_id, self.bytes_relayed, self.frames_relayed, self.outcome
        )
        logger.info(
            f"Session {self.session_id[:8]} (room {self.room.prefix}) ended: {self.outcome}, "
            f"{self.bytes_relayed} bytes in {self.frames_relayed} frames"
        )
        return self.outcome

    def _read_loop(self, source: Role) -> None:
        channel = self._channels[source]
        slots = self._slots[source]
        pending = self._queues[source]
        direction = self.stats[source]
        while not self._done.is_set():
            # Blocks while frames_in_flight frames are still undelivered
            if not slots.acquire(timeout=POLL_INTERVAL):
                continue
            try:
                frame = channel.recv()
            except TransportError as e:
                slots.release()
                if not self._done.is_set():
                    logger.debug(f"Room {self.room.prefix}: {source.name.lower()} closed ({e})")
                pending.put(_SOURCE_CLOSED)
                return
            if self.frame_hook is not None:
                frame = self.frame_hook(self, source, frame)
            direction.enqueued(frame)
            pending.put(frame)
            if frame.kind is FrameKind.FIN:
                return

    def _write_loop(self, source: Role) -> None:
        destination = self._channels[source.peer]
        slots = self._slots[source]
        pending = self._queues[source]
        direction = self.stats[source]
        while True:
            item = pending.get()
            if item is _STOP:
                return
            if item is _SOURCE_CLOSED:
                self.finish(OUTCOME_PEER_GONE)
                return
            delivered = False
            try:
                destination.send(item)
                delivered = True
            except TransportError:
                self.finish(OUTCOME_PEER_GONE)
                return
            finally:
                direction.dequeued(item, delivered)
                slots.release()
            if item.kind is FrameKind.FIN:
                self.finish(OUTCOME_COMPLETED)
                return


class RelayServer:
    """TCP rendezvous relay.

    Attributes:
        config: Listen address and rendezvous limits
        store: Connection metadata store
        registry: Room registry shared by all handler threads
        sessions: Most recent finished sessions, newest last

    Example:
        >>> with RelayServer(RelayConfig(port=0)) as server:
        ...     host, port = server.address
    """

    def __init__(
        self,
        config: RelayConfig | None = None,
        store: MetadataStore | None = None,
        clock: Callable[[], float] = time.monotonic,
        frame_hook: FrameHook | None = None,
    ) -> None:
        self.config = config or RelayConfig()
        self._owns_store = store is None
        self.store = store or MetadataStore(self.config.db_path)
        self.registry = RoomRegistry(self.config, self.store, clock)
        self.frame_hook = frame_hook
        self.sessions: deque[RelaySession] = deque(maxlen=100)

        self._listener: socket.socket | None = None
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self._active: set[RelaySession] = set()
        self._active_lock = threading.Lock()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("Relay server is not listening")
        host, port = self._listener.getsockname()[:2]
        return host, port

    def start(self) -> tuple[str, int]:
        """Bind the listener and start the accept and sweeper threads.

        Returns:
            Bound (host, port)

        Raises:
            TransportError: If the listen address cannot be bound
        """
        try:
            self._listener = socket.create_server((self.config.host, self.config.port))
        except OSError as e:
            raise TransportError(
                f"Cannot listen on {self.config.host}:{self.config.port}: {e}"
            ) from e
        self._listener.settimeout(POLL_INTERVAL)
        for target in (self._accept_loop, self._sweep_loop):
            thread = threading.Thread(target=target, daemon=True)
            thread.start()
            self._threads.append(thread)
        host, port = self.address
        logger.info(f"Relay listening on {format_address(host, port)}")
        return host, port

    def serve_forever(self) -> None:
        """Start (if needed) and block until shutdown() is called."""
        if self._listener is None:
            self.start()
        self._stopping.wait()

    def shutdown(self) -> None:
        """Stop accepting, release waiting peers, drain glued sessions, close the store."""
        if self._stopping.is_set():
            return
        self._stopping.set()
        if self._listener is not None:
            self._listener.close()
        for thread in self._threads:
            thread.join(timeout=POLL_INTERVAL * 2)

        for room in self.registry.waiting_rooms():
            if self.registry.abandon(room):
                room.first_peer.channel.close()

        deadline = time.monotonic() + self.config.drain_timeout
        while self.active_sessions and time.monotonic() < deadline:
            time.sleep(0.05)
        with self._active_lock:
            remaining = list(self._active)
        if remaining:
            logger.warning(f"Forcing {len(remaining)} session(s) closed after drain timeout")
        for session in remaining:
            session.finish(OUTCOME_SHUTDOWN)
        deadline = time.monotonic() + ERROR_SEND_TIMEOUT * 2
        while self.active_sessions and time.monotonic() < deadline:
            time.sleep(0.05)
        if self._owns_store:
            self.store.close()
        logger.info("Relay stopped")

    @property
    def active_sessions(self) -> int:
        with self._active_lock:
            return len(self._active)

    def stats(self) -> RelayStats:
        return self.store.stats()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except TimeoutError:
                continue
            except OSError:
                if not self._stopping.is_set():
                    logger.exception("Accept failed")
                return
            conn.settimeout(None)
            handler = threading.Thread(target=self._handle_connection, args=(conn,), daemon=True)
            handler.start()

    def _sweep_loop(self) -> None:
        while not self._stopping.wait(self.config.sweep_interval):
            try:
                self.registry.expire_rooms()
                self.store.sweep(self.config.room_ttl)
            except Exception:
                logger.exception("Room sweep failed")

    def _handle_connection(self, conn: socket.socket) -> None:
        try:
            address = observe_address(conn)
        except OSError:
            conn.close()
            return
        channel = FrameChannel(conn)
        channel.settimeout(JOIN_TIMEOUT)
        try:
            frame = channel.recv()
            if frame.kind is not FrameKind.JOIN:
                raise ProtocolError(f"First frame was {frame.kind.name}, expected JOIN")
            payload = JoinPayload.from_bytes(frame.payload)
        except ProtocolError as e:
            logger.warning(f"Rejecting {address}: {e}")
            channel.send_error(ERROR_PROTOCOL)
            channel.close()
            return
        except TransportError as e:
            logger.debug(f"Connection from {address} dropped before JOIN: {e}")
            channel.close()
            return
        channel.settimeout(None)

        host = address.rpartition(":")[0].strip("[]")
        peer = PeerConnection(channel=channel, role=payload.role, address=address, host=host)
        try:
            outcome, room = self.registry.handle_join(peer, payload)
        except JoinRejectedError as e:
            logger.info(f"JOIN from {address} rejected: {e.reason}")
            channel.send_error(e.reason)
            channel.close()
            return

        if outcome is JoinOutcome.WAITING:
            self._wait_for_partner(room, peer)
        else:
            self._glue(room)

    def _wait_for_partner(self, room: RoomRecord, peer: PeerConnection) -> None:
        """Park the first peer's thread; drop the room if the peer hangs up while waiting."""
        while not room.finished.wait(POLL_INTERVAL):
            if room.second_peer is None and _hung_up(peer.channel.sock):
                if self.registry.abandon(room):
                    peer.channel.close()
                return

    def _glue(self, room: RoomRecord) -> None:
        peers = (room.first_peer, room.second_peer)
        try:
            for peer in peers:
                peer.channel.send(Frame(FrameKind.ROOM_READY, peer.address.encode("utf-8")))
        except TransportError:
            for peer in peers:
                peer.channel.send_error(ERROR_PEER_GONE)
                peer.channel.close()
            self.registry.close_room(room)
            return

        session = RelaySession(room, self.store, self.config.frames_in_flight, self.frame_hook)
        with self._active_lock:
            self._active.add(session)
        try:
            session.run()
        finally:
            self.registry.close_room(room)
            self.sessions.append(session)
            with self._active_lock:
                self._active.discard(session)

    def __enter__(self) -> "RelayServer":
        self.start()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.shutdown()


def _hung_up(sock: socket.socket) -> bool:
    """True if the peer closed its end (readable with nothing to read)."""
    try:
        readable, _, _ = select.select([sock], [], [], 0)
        if not readable:
            return False
        return sock.recv(1, socket.MSG_PEEK) == b""
    except OSError:
        return True
