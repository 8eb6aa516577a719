"""
Binary framing shared by clients and the relay.

A frame on the wire is::

    +----------------+--------+------------------+
    | length (4, BE) | kind 1 | payload (length) |
    +----------------+--------+------------------+

The payload is capped at 64 KiB and the cap is enforced from the header alone,
before any payload byte is buffered.
"""

import logging
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Protocol

from src.errors import ProtocolError, TransportError
from src.pake.spake2 import Role

logger = logging.getLogger(__name__)

MAX_PAYLOAD = 65536
HEADER = struct.Struct(">IB")
HEADER_SIZE = HEADER.size
PROTOCOL_VERSION = 1
ROOM_ID_BYTES = 32
JOIN = struct.Struct(">32sBH")


class FrameKind(IntEnum):
    JOIN = 1
    ROOM_READY = 2
    PAKE_SHARE = 3
    CONFIRM = 4
    PEER_INFO = 5
    MANIFEST = 6
    CHUNK = 7
    FIN = 8
    ERROR = 9


class FrameTooLargeError(ProtocolError):
    """Raised when a payload exceeds MAX_PAYLOAD (encode or decode side)."""

    pass


class UnknownFrameKindError(ProtocolError):
    """Raised for a kind byte outside the FrameKind range."""

    pass


class StreamClosedError(TransportError, EOFError):
    """Raised when the stream ends cleanly between frames."""

    pass


class TruncatedFrameError(ProtocolError):
    """Raised when the stream ends in the middle of a frame."""

    pass


class ByteSource(Protocol):
    """Anything with a blocking file-like read(n), e.g. socket.makefile('rb')."""

    def read(self, n: int, /) -> bytes: ...


@dataclass(frozen=True)
class Frame:
    """A typed, length-prefixed protocol unit."""

    kind: FrameKind
    payload: bytes = b""

    def __repr__(self) -> str:
        return f"Frame({self.kind.name}, {len(self.payload)} bytes)"

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


# Error reasons sent by the relay in ERROR frames
ERROR_ROLE_TAKEN = "role taken"
ERROR_ROOM_FULL = "room full"
ERROR_PEER_GONE = "peer gone"
ERROR_VERSION = "version"
ERROR_RATE_LIMITED = "rate limited"
ERROR_ROOM_EXPIRED = "room expired"
ERROR_PROTOCOL = "protocol"


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame.

    Raises:
        FrameTooLargeError: If the payload exceeds MAX_PAYLOAD
    """
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameTooLargeError(
            f"Payload of {len(frame.payload)} bytes exceeds the {MAX_PAYLOAD}-byte limit"
        )
    return HEADER.pack(len(frame.payload), frame.kind) + frame.payload


def _read_exact(stream: ByteSource, n: int) -> bytes:
    """Read exactly n bytes; b'' only if the stream is already at EOF and n > 0."""
    parts = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        parts.append(chunk)
        remaining -= len(chunk)
    return b"".join(parts)


def decode_frame(stream: ByteSource) -> Frame:
    """Block until one full frame has been read from the stream.

    Raises:
        StreamClosedError: If the stream ends cleanly before a new frame starts
        TruncatedFrameError: If the stream ends mid-frame
        FrameTooLargeError: If the declared length exceeds MAX_PAYLOAD
        UnknownFrameKindError: If the kind byte is not a FrameKind
    """
    header = _read_exact(stream, HEADER_SIZE)
    if not header:
        raise StreamClosedError("Stream closed")
    if len(header) < HEADER_SIZE:
        raise TruncatedFrameError(f"Stream ended after {len(header)} header bytes")
    length, kind_code = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise FrameTooLargeError(f"Declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    try:
        kind = FrameKind(kind_code)
    except ValueError as e:
        raise UnknownFrameKindError(f"Unknown frame kind {kind_code:#04x}") from e
    payload = _read_exact(stream, length)
    if len(payload) < length:
        raise TruncatedFrameError(f"Stream ended after {len(payload)} of {length} payload bytes")
    return Frame(kind, payload)


@dataclass(frozen=True)
class JoinPayload:
    """First frame on a relay connection: which room and which side.

    Attributes:
        room_id: 32-byte identifier derived from the passphrase (never the passphrase)
        role: Side the client plays
        protocol_version: Wire protocol version, currently 1
    """

    room_id: bytes
    role: Role
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if len(self.room_id) != ROOM_ID_BYTES:
            raise ValueError(f"room_id must be {ROOM_ID_BYTES} bytes")
        if not (0 <= self.protocol_version <= 0xFFFF):
            raise ValueError("protocol_version must fit in 16 bits")

    def to_bytes(self) -> bytes:
        return JOIN.pack(self.room_id, self.role, self.protocol_version)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "JoinPayload":
        if len(payload) != JOIN.size:
            raise ProtocolError(f"JOIN payload must be {JOIN.size} bytes, got {len(payload)}")
        room_id, role_code, version = JOIN.unpack(payload)
        try:
            role = Role(role_code)
        except ValueError as e:
            raise ProtocolError(f"Unknown role {role_code}") from e
        return cls(room_id=room_id, role=role, protocol_version=version)


def format_address(host: str, port: int) -> str:
    """Render an address as 'ip:port' ('[ip]:port' for IPv6)."""
    if ":" in host:
        return f"[{host}]:{port}"
    return f"{host}:{port}"


def parse_address(text: str) -> tuple[str, int]:
    """Parse 'host:port' or '[ipv6]:port'.

    Raises:
        ValueError: If the text is not a host and a port
    """
    host, sep, port_text = text.rpartition(":")
    if not sep or not host or not port_text.isdigit():
        raise ValueError(f"Expected host:port, got {text!r}")
    host = host.strip("[]")
    port = int(port_text)
    if not (0 <= port <= 65535):
        raise ValueError(f"Port out of range in {text!r}")
    return host, port
