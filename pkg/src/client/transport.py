"""
Connection establishment for clients.

The flow is always the same:

1. **rendezvous**: connect to the relay, JOIN the room derived from the
   passphrase's leading words, wait for ROOM_READY (which echoes our
   observed address);
2. **PAKE**: exchange shares and confirmation MACs over the glued relay
   stream; nothing else is sent until both MACs verify;
3. **PEER_INFO**: each side sends its observed address and direct listen port,
   sealed under Ke;
4. **direct attempt**: the sender dials the receiver's advertised address and
   both sides prove knowledge of the session over the new socket. The sender
   then tells the receiver over the relay which channel won: FIN for direct,
   the MANIFEST itself for relayed.
"""

import hashlib
import json
import logging
import socket
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, hmac

from src.client.config import ClientConfig
from src.client.transfer import ChunkCipher, Direction, EncryptedChunk
from src.errors import (
    ConfirmationFailedError,
    PeerGoneError,
    ProtocolError,
    RelayUnavailableError,
    RendezvousError,
    RendezvousTimeoutError,
    TransportError,
)
from src.pake.group import Ed25519Group, Group
from src.pake.spake2 import (
    ConfirmationTag,
    Role,
    SessionKeys,
    confirm_tag,
    finish,
    hash_password,
    start,
    verify_peer_tag,
)
from src.protocol.channel import ChannelMode, FrameChannel
from src.protocol.wire import Frame, FrameKind, JoinPayload, parse_address

logger = logging.getLogger(__name__)

ROOM_LABEL = b"relaywire room"
ROOM_WORDS = 2
BIND_LABEL = b"direct-bind"
ACCEPT_POLL = 0.2


def derive_room_id(passphrase: str) -> bytes:
    """Room identifier sent to the relay in place of the passphrase.

    Only the first ROOM_WORDS words select the room; the rest reach the peer
    solely through the PAKE. A mistyped trailing word therefore ends in a
    failed key confirmation rather than a rendezvous timeout.
    """
    room_words = "-".join(passphrase.split("-")[:ROOM_WORDS])
    return hashlib.sha256(ROOM_LABEL + room_words.encode("utf-8")).digest()


@dataclass
class ChannelChoice:
    """The channel a session will carry the file over.

    Attributes:
        mode: DIRECT after a successful authenticated binding, RELAYED otherwise
        channel: The single active frame channel
        peer_addr: Direct peer address when mode is DIRECT
    """

    mode: ChannelMode
    channel: FrameChannel
    peer_addr: str | None = None


@dataclass
class EstablishedSession:
    """Result of establish(): confirmed keys plus the chosen channel.

    Attributes:
        choice: Channel to run the transfer on
        keys: Session keys from the confirmed PAKE
        manifest_frame: MANIFEST already consumed from the relay as the
            "stay relayed" signal (receiver only)
    """

    choice: ChannelChoice
    keys: SessionKeys
    manifest_frame: Frame | None = None


@dataclass(frozen=True)
class PeerInfo:
    """What a peer tells the other side about reaching it directly."""

    observed_address: str
    listen_port: int = 0

    def to_bytes(self) -> bytes:
        return json.dumps(
            {"observed_address": self.observed_address, "listen_port": self.listen_port}
        ).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "PeerInfo":
        try:
            fields = json.loads(data)
            info = cls(str(fields["observed_address"]), int(fields["listen_port"]))
            parse_address(info.observed_address)
        except (ValueError, KeyError, TypeError) as e:
            raise ProtocolError(f"Malformed PEER_INFO: {e}") from e
        if not (0 <= info.listen_port <= 65535):
            raise ProtocolError(f"PEER_INFO port out of range: {info.listen_port}")
        return info


def connect_relay(relay_addr: str, timeout: float) -> FrameChannel:
    """Open a TCP connection to the relay.

    Raises:
        RelayUnavailableError: If the relay refuses or cannot be resolved
        RendezvousTimeoutError: If the connection attempt times out
    """
    host, port = parse_address(relay_addr)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except TimeoutError as e:
        raise RendezvousTimeoutError(f"Timed out connecting to relay {relay_addr}") from e
    except OSError as e:
        raise RelayUnavailableError(f"Cannot reach relay {relay_addr}: {e}") from e
    sock.settimeout(None)
    return FrameChannel(sock, ChannelMode.RELAYED)


def rendezvous(
    relay_addr: str, room_id: bytes, role: Role, timeout: float = 30.0
) -> tuple[FrameChannel, str]:
    """JOIN a room and wait until the peer arrives.

    Args:
        relay_addr: Relay host:port
        room_id: 32-byte room identifier
        role: Side this client plays
        timeout: Seconds to wait for ROOM_READY

    Returns:
        Tuple of (glued relay channel, our address as observed by the relay)

    Raises:
        RendezvousTimeoutError: If the peer does not join in time
        RendezvousError: If the relay answers with an ERROR frame
        RelayUnavailableError: If the relay cannot be reached
    """
    channel = connect_relay(relay_addr, timeout)
    try:
        channel.send(Frame(FrameKind.JOIN, JoinPayload(room_id, role).to_bytes()))
        channel.settimeout(timeout)
        try:
            frame = channel.recv()
        except TransportError as e:
            if isinstance(e.__cause__, TimeoutError):
                raise RendezvousTimeoutError(
                    f"No peer joined the room within {timeout:.0f}s"
                ) from e
            raise
        if frame.kind is FrameKind.ERROR:
            raise RendezvousError(frame.payload.decode("utf-8", "replace"))
        if frame.kind is not FrameKind.ROOM_READY:
            raise ProtocolError(f"Expected ROOM_READY, got {frame.kind.name}")
        channel.settimeout(None)
    except BaseException:
        channel.close()
        raise
    observed = frame.payload.decode("utf-8", "replace")
    logger.info(f"Joined room {room_id.hex()[:8]} as {role.name.lower()}; peer is present")
    return channel, observed


def run_pake(
    channel: FrameChannel,
    passphrase: str,
    role: Role,
    room_id: bytes,
    config: ClientConfig,
    group: Group | None = None,
) -> SessionKeys:
    """Run the key exchange and key confirmation over the relay channel.

    Raises:
        ConfirmationFailedError: If the peer's confirmation MAC does not verify
        ProtocolError: If a PAKE_SHARE or CONFIRM frame is malformed
    """
    group = group or Ed25519Group()
    w = hash_password(group, passphrase, room_id, config.pake)
    state, share = start(group, role, w, aad=config.pake.aad)
    channel.send(Frame(FrameKind.PAKE_SHARE, group.encode(share)))
    peer_share = group.decode(channel.expect(FrameKind.PAKE_SHARE).payload)
    keys = finish(state, peer_share)

    channel.send(Frame(FrameKind.CONFIRM, confirm_tag(keys, role).mac))
    peer_mac = channel.expect(FrameKind.CONFIRM).payload
    if not verify_peer_tag(keys, role, ConfirmationTag(peer_mac, role.peer)):
        raise ConfirmationFailedError()
    logger.info("Key confirmation succeeded")
    return keys


def exchange_peer_info(
    channel: FrameChannel, keys: SessionKeys, role: Role, own: PeerInfo
) -> PeerInfo:
    """Send our PEER_INFO and read the peer's, both sealed under Ke."""
    own_direction, peer_direction = (
        (Direction.SENDER_INFO, Direction.RECEIVER_INFO)
        if role is Role.SENDER
        else (Direction.RECEIVER_INFO, Direction.SENDER_INFO)
    )
    cipher = ChunkCipher(keys)
    sealed = cipher.seal(own_direction, 0, own.to_bytes())
    channel.send(Frame(FrameKind.PEER_INFO, sealed.to_payload()))
    frame = channel.expect(FrameKind.PEER_INFO)
    received = EncryptedChunk.from_payload(frame.payload)
    return PeerInfo.from_bytes(cipher.open(peer_direction, received, 0))


def binding_mac(keys: SessionKeys, role: Role) -> bytes:
    """MAC(Ke, "direct-bind" || transcript_hash || role byte)."""
    h = hmac.HMAC(keys.ke, hashes.SHA256())
    h.update(BIND_LABEL + keys.transcript_hash + bytes([role]))
    return h.finalize()


def bind_direct(channel: FrameChannel, keys: SessionKeys, role: Role, timeout: float) -> bool:
    """Exchange binding MACs over a fresh direct socket.

    Returns:
        True if the peer proved it holds this session's keys
    """
    channel.settimeout(timeout)
    try:
        channel.send(Frame(FrameKind.CONFIRM, binding_mac(keys, role)))
        frame = channel.recv()
    except TransportError as e:
        logger.debug(f"Direct binding did not complete: {e}")
        return False
    if frame.kind is not FrameKind.CONFIRM:
        logger.warning(f"Direct peer sent {frame.kind.name} instead of a binding MAC")
        return False
    h = hmac.HMAC(keys.ke, hashes.SHA256())
    h.update(BIND_LABEL + keys.transcript_hash + bytes([role.peer]))
    try:
        h.verify(frame.payload)
    except InvalidSignature:
        logger.warning("Direct binding MAC mismatch; possible hijack attempt, staying on relay")
        return False
    channel.settimeout(None)
    return True


def attempt_direct(
    peer_addr: tuple[str, int], keys: SessionKeys, role: Role, timeout: float = 3.0
) -> FrameChannel | None:
    """Dial the peer and bind the connection to the session.

    Returns:
        An authenticated direct channel, or None if the peer is unreachable
        or fails the binding check
    """
    try:
        sock = socket.create_connection(peer_addr, timeout=timeout)
    except OSError as e:
        logger.info(f"Direct connection to {peer_addr[0]}:{peer_addr[1]} unavailable: {e}")
        return None
    channel = FrameChannel(sock, ChannelMode.DIRECT)
    if bind_direct(channel, keys, role, timeout):
        logger.info(f"Direct channel to {peer_addr[0]}:{peer_addr[1]} established")
        return channel
    channel.close()
    return None


class DirectListener:
    """Receiver-side listener for the sender's direct dial.

    The first connection that passes the binding check wins; anything else
    is closed. close() is idempotent and also discards an unclaimed winner.
    """

    def __init__(self, host: str, timeout: float) -> None:
        self.timeout = timeout
        self._sock = socket.create_server((host, 0))
        self._sock.settimeout(ACCEPT_POLL)
        self.port = self._sock.getsockname()[1]
        self._winner: FrameChannel | None = None
        self._claimed = False
        self._bound = threading.Event()
        self._closed = threading.Event()
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def start(self, keys: SessionKeys, role: Role) -> None:
        self._thread = threading.Thread(target=self._accept_loop, args=(keys, role), daemon=True)
        self._thread.start()

    def _accept_loop(self, keys: SessionKeys, role: Role) -> None:
        while not self._closed.is_set() and not self._bound.is_set():
            try:
                conn, addr = self._sock.accept()
            except TimeoutError:
                continue
            except OSError:
                return
            conn.settimeout(None)
            channel = FrameChannel(conn, ChannelMode.DIRECT)
            if not bind_direct(channel, keys, role, self.timeout):
                channel.close()
                continue
            with self._lock:
                if self._closed.is_set():
                    channel.close()
                    return
                self._winner = channel
            self._bound.set()

    def wait(self, timeout: float) -> FrameChannel | None:
        """Claim the bound direct channel, waiting up to ``timeout`` seconds."""
        self._bound.wait(timeout)
        with self._lock:
            winner = self._winner
            if winner is not None:
                self._claimed = True
        return winner

    def close(self) -> None:
        with self._lock:
            if self._closed.is_set():
                return
            self._closed.set()
            winner = None if self._claimed else self._winner
        self._sock.close()
        if winner is not None:
            winner.close()
        if self._thread is not None:
            self._thread.join(timeout=self.timeout + ACCEPT_POLL)


def _choose_as_sender(
    relay: FrameChannel, keys: SessionKeys, peer: PeerInfo, config: ClientConfig
) -> ChannelChoice:
    if config.allow_direct and peer.listen_port:
        host = parse_address(peer.observed_address)[0]
        direct = attempt_direct((host, peer.listen_port), keys, Role.SENDER, config.direct_timeout)
        if direct is not None:
            relay.send(Frame(FrameKind.FIN))
            relay.close()
            return ChannelChoice(ChannelMode.DIRECT, direct, f"{host}:{peer.listen_port}")
    logger.info("Using the relayed channel")
    return ChannelChoice(ChannelMode.RELAYED, relay)


def _choose_as_receiver(
    relay: FrameChannel, keys: SessionKeys, listener: DirectListener | None, timeout: float
) -> tuple[ChannelChoice, Frame | None]:
    try:
        signal = relay.expect(FrameKind.FIN, FrameKind.MANIFEST)
        if signal.kind is FrameKind.MANIFEST:
            logger.info("Sender stayed on the relayed channel")
            return ChannelChoice(ChannelMode.RELAYED, relay), signal
        direct = listener.wait(timeout) if listener is not None else None
        if direct is None:
            raise PeerGoneError("Sender switched to a direct channel this side never bound")
        relay.close()
        host, port = direct.peer_address()
        return ChannelChoice(ChannelMode.DIRECT, direct, f"{host}:{port}"), None
    finally:
        if listener is not None:
            listener.close()


def establish(
    config: ClientConfig,
    passphrase: str,
    role: Role,
    group: Group | None = None,
) -> EstablishedSession:
    """Rendezvous, authenticate, and pick the channel for the transfer.

    Args:
        config: Client settings (relay address, timeouts, direct-path switches)
        passphrase: Shared passphrase; only a hash of it leaves this process
        role: SENDER or RECEIVER
        group: Group for the PAKE (Ed25519 unless a test supplies another)

    Returns:
        EstablishedSession with confirmed keys and the chosen channel

    Raises:
        ConfirmationFailedError: If the passphrases differ or the exchange was tampered with
        TransportError: On rendezvous or connection failures
    """
    room_id = derive_room_id(passphrase)
    relay, observed = rendezvous(config.relay_addr, room_id, role, config.rendezvous_timeout)
    listener: DirectListener | None = None
    try:
        keys = run_pake(relay, passphrase, role, room_id, config, group)
        if role is Role.RECEIVER and config.allow_direct:
            try:
                listener = DirectListener(config.direct_listen_host, config.direct_timeout)
            except OSError as e:
                logger.info(f"Not listening for a direct connection: {e}")
        own = PeerInfo(observed, listener.port if listener else 0)
        if listener is not None:
            listener.start(keys, role)
        peer = exchange_peer_info(relay, keys, role, own)

        if role is Role.SENDER:
            choice = _choose_as_sender(relay, keys, peer, config)
            manifest_frame = None
        else:
            choice, manifest_frame = _choose_as_receiver(
                relay, keys, listener, config.direct_timeout
            )
    except BaseException:
        if listener is not None:
            listener.close()
        relay.close()
        raise
    logger.info(f"Transfer channel: {choice.mode.value}")
    return EstablishedSession(choice=choice, keys=keys, manifest_frame=manifest_frame)
