"""
Frame channel over a connected stream socket.

A :class:`FrameChannel` owns one socket: a buffered reader for decoding and a
lock-protected ``sendall`` for encoding. ``close()`` is idempotent so that
racing code paths (relay glue, direct-channel election) can all call it.
"""

import logging
import socket
import threading
from enum import Enum

from src.errors import PeerGoneError, ProtocolError, TransportError
from src.protocol.wire import Frame, FrameKind, StreamClosedError, decode_frame, encode_frame

logger = logging.getLogger(__name__)


class ChannelMode(Enum):
    DIRECT = "direct"
    RELAYED = "relayed"


class FrameChannel:
    """Reliable ordered frame transport over a socket.

    Attributes:
        mode: Whether this channel runs through the relay or peer-to-peer
        frames_sent: Count of frames written
        bytes_sent: Count of wire bytes written

    Example:
        >>> left, right = socket.socketpair()
        >>> a, b = FrameChannel(left), FrameChannel(right)
        >>> a.send(Frame(FrameKind.FIN))
        >>> b.recv().kind
        <FrameKind.FIN: 8>
    """

    def __init__(self, sock: socket.socket, mode: ChannelMode = ChannelMode.RELAYED) -> None:
        self.sock = sock
        self.mode = mode
        self._reader = sock.makefile("rb")
        self._send_lock = threading.Lock()
        self._close_lock = threading.Lock()
        self._closed = False
        self.frames_sent = 0
        self.bytes_sent = 0

    @property
    def closed(self) -> bool:
        return self._closed

    def peer_address(self) -> tuple[str, int]:
        host, port = self.sock.getpeername()[:2]
        return host, port

    def settimeout(self, seconds: float | None) -> None:
        self.sock.settimeout(seconds)

    def send(self, frame: Frame) -> None:
        """Write one frame.

        Raises:
            PeerGoneError: If the connection is closed or reset
        """
        data = encode_frame(frame)
        with self._send_lock:
            try:
                self.sock.sendall(data)
            except OSError as e:
                raise PeerGoneError(f"Connection lost while sending {frame.kind.name}: {e}") from e
            self.frames_sent += 1
            self.bytes_sent += len(data)

    def recv(self) -> Frame:
        """Read one frame, blocking until it is complete.

        Raises:
            StreamClosedError: If the peer closed the connection between frames
            TransportError: On timeout or socket failure
            ProtocolError: On malformed frames
        """
        try:
            return decode_frame(self._reader)
        except TimeoutError as e:
            raise TransportError("Timed out waiting for a frame") from e
        except (StreamClosedError, TransportError):
            raise
        except (OSError, ValueError) as e:
            # ValueError: the reader was closed under us by close()
            raise PeerGoneError(f"Connection lost while receiving: {e}") from e

    def expect(self, *kinds: FrameKind) -> Frame:
        """Receive a frame and check its kind.

        An ERROR frame is surfaced as PeerGoneError carrying the peer's reason.
        """
        frame = self.recv()
        if frame.kind in kinds:
            return frame
        if frame.kind is FrameKind.ERROR:
            raise PeerGoneError(f"Peer reported: {frame.payload.decode('utf-8', 'replace')}")
        expected = ", ".join(k.name for k in kinds)
        raise ProtocolError(f"Expected {expected}, got {frame.kind.name}")

    def send_error(self, reason: str) -> None:
        """Best-effort ERROR frame; failures are ignored because the link is going away."""
        try:
            self.send(Frame(FrameKind.ERROR, reason.encode("utf-8")))
        except TransportError:
            pass

    def close(self) -> None:
        """Close the socket once; later calls are no-ops."""
        with self._close_lock:
            if self._closed:
                return
            self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._reader.close()
        self.sock.close()

    def __enter__(self) -> "FrameChannel":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
