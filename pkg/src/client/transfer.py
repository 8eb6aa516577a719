"""
File transfer pipeline.

The sender announces the file with an encrypted MANIFEST, streams it as
16384-byte chunks sealed with SecretBox under Ke, and ends with FIN. The
receiver checks each chunk's authenticator and position as it arrives, writes
to a temporary file in the destination directory, and only publishes the file
under its final name once the whole-file digest matches the manifest.

Nonces are deterministic and never repeat within a session::

    15 zero bytes | direction byte | 8-byte big-endian index
"""

import hashlib
import json
import logging
import os
import queue
import tempfile
import threading
import time
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO

from nacl.exceptions import CryptoError
from nacl.secret import SecretBox

from src.errors import (
    IntegrityError,
    NameCollisionError,
    PeerGoneError,
    ProtocolError,
    ReplayError,
    SizeMismatchError,
    TransferIOError,
    TransportError,
)
from src.pake.spake2 import InvalidInputError, SessionKeys
from src.protocol.channel import ChannelMode, FrameChannel
from src.protocol.wire import Frame, FrameKind, StreamClosedError

logger = logging.getLogger(__name__)

CHUNK_SIZE = 16384
MAC_BYTES = SecretBox.MACBYTES
NONCE_BYTES = SecretBox.NONCE_SIZE
NONCE_PREFIX = bytes(15)
MAX_INDEX = 2**64 - 1
DIGEST_BYTES = 32
MAX_FILE_NAME_BYTES = 255
# Per-stage queue depth. Two queues plus one chunk held by each of the three
# stages keeps at most 7 chunks in memory ahead of the channel.
QUEUE_DEPTH = 2
STAGE_POLL = 0.1

ProgressCallback = Callable[[int, int, str], None]


class Direction(IntEnum):
    """Nonce direction byte; each message family has its own nonce space."""

    CHUNK = 0x01
    MANIFEST = 0x02
    SENDER_INFO = 0x03
    RECEIVER_INFO = 0x04


class TransferInterruptedError(PeerGoneError):
    """Raised when the channel fails mid-send.

    Attributes:
        bytes_sent: File bytes handed to the channel before the failure
    """

    def __init__(self, message: str, bytes_sent: int) -> None:
        super().__init__(message)
        self.bytes_sent = bytes_sent


def make_nonce(direction: Direction, index: int) -> bytes:
    if not (0 <= index <= MAX_INDEX):
        raise InvalidInputError(f"Chunk index {index} does not fit in 64 bits")
    return NONCE_PREFIX + bytes([direction]) + index.to_bytes(8, "big")


def sanitize_file_name(name: str) -> str:
    """Reduce a peer-supplied file name to a safe basename.

    Path components and parent references are stripped ("../../etc/x" -> "x").

    Raises:
        ProtocolError: If nothing usable remains
    """
    base = name.replace("\\", "/").rsplit("/", 1)[-1]
    base = "".join(ch for ch in base if ch.isprintable()).strip()
    if base in ("", ".", "..") or len(base.encode("utf-8")) > MAX_FILE_NAME_BYTES:
        raise ProtocolError(f"Unusable file name in manifest: {name!r}")
    return base


@dataclass(frozen=True)
class FileManifest:
    """Metadata announced before the chunks.

    Attributes:
        file_name: Sanitized basename
        file_size: Size in bytes
        file_digest: SHA-256 of the plaintext
        chunk_size: Plaintext bytes per chunk
    """

    file_name: str
    file_size: int
    file_digest: bytes
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self) -> None:
        if sanitize_file_name(self.file_name) != self.file_name:
            raise ProtocolError(f"Manifest file name must be a plain basename: {self.file_name!r}")
        if not (0 <= self.file_size <= MAX_INDEX):
            raise ProtocolError(f"Invalid file size {self.file_size}")
        if self.chunk_size != CHUNK_SIZE:
            raise ProtocolError(f"Unsupported chunk size {self.chunk_size}")
        if len(self.file_digest) != DIGEST_BYTES:
            raise ProtocolError("Manifest digest must be 32 bytes")

    @property
    def chunk_count(self) -> int:
        return -(-self.file_size // self.chunk_size)

    def chunk_length(self, index: int) -> int:
        """Expected plaintext length of chunk ``index``."""
        if index < self.chunk_count - 1:
            return self.chunk_size
        return self.file_size - (self.chunk_count - 1) * self.chunk_size

    def to_bytes(self) -> bytes:
        return json.dumps(
            {
                "file_name": self.file_name,
                "file_size": self.file_size,
                "chunk_size": self.chunk_size,
                "chunk_count": self.chunk_count,
                "file_digest": self.file_digest.hex(),
            }
        ).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "FileManifest":
        """Parse a decrypted manifest; the file name is sanitized on the way in.

        Raises:
            ProtocolError: If the manifest is malformed or inconsistent
        """
        try:
            fields = json.loads(data)
            manifest = cls(
                file_name=sanitize_file_name(str(fields["file_name"])),
                file_size=int(fields["file_size"]),
                chunk_size=int(fields["chunk_size"]),
                file_digest=bytes.fromhex(fields["file_digest"]),
            )
            announced = int(fields["chunk_count"])
        except (ValueError, KeyError, TypeError) as e:
            raise ProtocolError(f"Malformed manifest: {e}") from e
        if announced != manifest.chunk_count:
            raise ProtocolError(
                f"Manifest announces {announced} chunks for {manifest.file_size} bytes"
            )
        return manifest


@dataclass(frozen=True)
class EncryptedChunk:
    """A sealed message as carried in a frame payload (nonce then ciphertext)."""

    index: int
    nonce: bytes
    ciphertext: bytes

    @property
    def plaintext_length(self) -> int:
        return len(self.ciphertext) - MAC_BYTES

    def to_payload(self) -> bytes:
        return self.nonce + self.ciphertext

    @classmethod
    def from_payload(cls, payload: bytes) -> "EncryptedChunk":
        """Split a frame payload; the index is read back out of the nonce.

        Raises:
            ProtocolError: If the payload cannot hold a nonce and an authenticator
        """
        if len(payload) < NONCE_BYTES + MAC_BYTES:
            raise ProtocolError(f"Sealed payload of {len(payload)} bytes is too short")
        nonce, ciphertext = payload[:NONCE_BYTES], payload[NONCE_BYTES:]
        return cls(index=int.from_bytes(nonce[-8:], "big"), nonce=nonce, ciphertext=ciphertext)


@dataclass(frozen=True)
class TransferReport:
    """Outcome of one send or receive.

    Attributes:
        bytes_sent: File bytes moved (sent or received)
        elapsed: Wall-clock seconds from first frame to FIN
        mode: Channel the file travelled over
        verified: Digest of the moved bytes equals the manifest digest
        file_name: Name announced in the manifest
        destination: Where the receiver stored the file (None on the sender)
    """

    bytes_sent: int
    elapsed: float
    mode: ChannelMode
    verified: bool
    file_name: str = ""
    destination: Path | None = None

    @property
    def throughput_mbps(self) -> float:
        return self.bytes_sent / 1e6 / self.elapsed if self.elapsed > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "file_name": self.file_name,
            "bytes_sent": self.bytes_sent,
            "elapsed": round(self.elapsed, 6),
            "throughput_MBps": round(self.throughput_mbps, 3),
            "mode": self.mode.value,
            "verified": self.verified,
            "destination": str(self.destination) if self.destination else None,
        }


class ChunkCipher:
    """SecretBox under Ke with the session's deterministic nonces."""

    def __init__(self, keys: SessionKeys) -> None:
        self._box = SecretBox(keys.ke)

    def seal(self, direction: Direction, index: int, plaintext: bytes) -> EncryptedChunk:
        nonce = make_nonce(direction, index)
        sealed = self._box.encrypt(plaintext, nonce)
        return EncryptedChunk(index=index, nonce=nonce, ciphertext=sealed.ciphertext)

    def open(self, direction: Direction, chunk: EncryptedChunk, expected_index: int) -> bytes:
        """Authenticate and decrypt; a genuine message at the wrong position is a replay.

        Raises:
            IntegrityError: If the nonce family is wrong or the authenticator fails
            ReplayError: If an authentic message carries an unexpected index
        """
        if chunk.nonce[: len(NONCE_PREFIX)] != NONCE_PREFIX or chunk.nonce[15] != direction:
            raise IntegrityError(f"Message {expected_index} has a foreign nonce", expected_index)
        try:
            plaintext = self._box.decrypt(chunk.ciphertext, chunk.nonce)
        except CryptoError as e:
            raise IntegrityError(
                f"Chunk {expected_index} failed authentication", expected_index
            ) from e
        if chunk.index != expected_index:
            raise ReplayError(expected_index, chunk.index)
        return plaintext


def seal_chunk(keys: SessionKeys, index: int, plaintext: bytes) -> EncryptedChunk:
    """Encrypt one file chunk.

    Raises:
        InvalidInputError: If the plaintext exceeds CHUNK_SIZE or the index 64 bits
    """
    if len(plaintext) > CHUNK_SIZE:
        raise InvalidInputError(f"Chunk of {len(plaintext)} bytes exceeds {CHUNK_SIZE}")
    return ChunkCipher(keys).seal(Direction.CHUNK, index, plaintext)


def open_chunk(keys: SessionKeys, chunk: EncryptedChunk, expected_index: int) -> bytes:
    """Decrypt one file chunk that must sit at ``expected_index``."""
    if len(chunk.ciphertext) > CHUNK_SIZE + MAC_BYTES:
        raise IntegrityError(f"Chunk {expected_index} is oversized", expected_index)
    return ChunkCipher(keys).open(Direction.CHUNK, chunk, expected_index)


def _read_full(source: BinaryIO, n: int) -> bytes:
    parts = []
    while n:
        data = source.read(n)
        if not data:
            break
        parts.append(data)
        n -= len(data)
    return b"".join(parts)


def chunk_file(source: BinaryIO, size: int) -> Iterator[tuple[int, bytes]]:
    """Split a stream of known size into (index, plaintext) chunks.

    Raises:
        SizeMismatchError: If the stream ends early or holds more than ``size`` bytes
    """
    remaining = size
    index = 0
    while remaining > 0:
        data = _read_full(source, min(CHUNK_SIZE, remaining))
        if len(data) < min(CHUNK_SIZE, remaining):
            raise SizeMismatchError(
                f"Source ended after {size - remaining + len(data)} of {size} bytes"
            )
        yield index, data
        remaining -= len(data)
        index += 1
    if source.read(1):
        raise SizeMismatchError(f"Source grew beyond the announced {size} bytes")


def file_digest(path: Path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while block := f.read(1 << 20):
            h.update(block)
    return h.digest()


def build_manifest(path: Path) -> FileManifest:
    """Describe a local file for sending.

    Raises:
        TransferIOError: If the path is not a readable regular file
    """
    path = Path(path)
    try:
        if not path.is_file():
            raise TransferIOError(f"Not a readable file: {path}")
        size = path.stat().st_size
        digest = file_digest(path)
    except OSError as e:
        raise TransferIOError(f"Cannot read {path}: {e}") from e
    try:
        name = sanitize_file_name(path.name)
    except ProtocolError as e:
        raise TransferIOError(str(e)) from e
    return FileManifest(file_name=name, file_size=size, file_digest=digest)


def seal_manifest(keys: SessionKeys, manifest: FileManifest) -> Frame:
    sealed = ChunkCipher(keys).seal(Direction.MANIFEST, 0, manifest.to_bytes())
    return Frame(FrameKind.MANIFEST, sealed.to_payload())


def open_manifest(keys: SessionKeys, frame: Frame) -> FileManifest:
    """Decrypt and parse a MANIFEST frame.

    Raises:
        IntegrityError: If the manifest fails authentication
        ProtocolError: If it is malformed
    """
    chunk = EncryptedChunk.from_payload(frame.payload)
    return FileManifest.from_bytes(ChunkCipher(keys).open(Direction.MANIFEST, chunk, 0))


class _Cancelled(Exception):
    pass


_END = object()


def _put(q: queue.Queue, item: object, stop: threading.Event) -> None:
    while True:
        if stop.is_set():
            raise _Cancelled
        try:
            q.put(item, timeout=STAGE_POLL)
            return
        except queue.Full:
            continue


def _get(q: queue.Queue, stop: threading.Event) -> object:
    while True:
        if stop.is_set():
            raise _Cancelled
        try:
            return q.get(timeout=STAGE_POLL)
        except queue.Empty:
            continue


def _read_stage(
    path: Path, size: int, streamed: "hashlib._Hash", out: queue.Queue, stop: threading.Event
) -> None:
    try:
        with open(path, "rb") as source:
            for index, data in chunk_file(source, size):
                streamed.update(data)
                _put(out, (index, data), stop)
        _put(out, _END, stop)
    except _Cancelled:
        return
    except SizeMismatchError as e:
        _put_error(out, e, stop)
    except OSError as e:
        _put_error(out, TransferIOError(f"Reading {path} failed: {e}"), stop)
    except Exception as e:
        _put_error(out, e, stop)


def _seal_stage(
    cipher: ChunkCipher, source: queue.Queue, out: queue.Queue, stop: threading.Event
) -> None:
    try:
        while True:
            item = _get(source, stop)
            if item is _END or isinstance(item, BaseException):
                _put(out, item, stop)
                return
            index, data = item
            _put(out, cipher.seal(Direction.CHUNK, index, data), stop)
    except _Cancelled:
        return
    except Exception as e:
        _put_error(out, e, stop)


def _put_error(out: queue.Queue, error: BaseException, stop: threading.Event) -> None:
    try:
        _put(out, error, stop)
    except _Cancelled:
        pass


def send_file(
    channel: FrameChannel,
    keys: SessionKeys,
    path: Path,
    manifest: FileManifest | None = None,
    progress_callback: ProgressCallback | None = None,
) -> TransferReport:
    """Stream a file: MANIFEST, CHUNK frames in index order, then FIN.

    Reading, sealing and writing run as separate stages joined by bounded
    queues, so memory use does not grow with the file size.

    Args:
        channel: Confirmed channel to the receiver
        keys: Session keys from the PAKE
        path: File to send
        manifest: Precomputed manifest (built from the file if omitted)
        progress_callback: Optional callback(bytes_done, total_bytes, message)

    Returns:
        TransferReport; verified means the streamed bytes match the manifest digest

    Raises:
        TransferInterruptedError: If the channel fails, carrying bytes_sent so far
        SizeMismatchError: If the file changes size while being sent
        TransferIOError: If the file cannot be read
    """
    path = Path(path)
    manifest = manifest or build_manifest(path)
    cipher = ChunkCipher(keys)
    streamed = hashlib.sha256()
    stop = threading.Event()
    plain: queue.Queue = queue.Queue(maxsize=QUEUE_DEPTH)
    sealed: queue.Queue = queue.Queue(maxsize=QUEUE_DEPTH)
    bytes_sent = 0
    started = time.monotonic()
    logger.info(
        f"Sending {manifest.file_name} ({manifest.file_size} bytes, "
        f"{manifest.chunk_count} chunks) over {channel.mode.value} channel"
    )

    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="relaywire-send") as pool:
        pool.submit(_read_stage, path, manifest.file_size, streamed, plain, stop)
        pool.submit(_seal_stage, cipher, plain, sealed, stop)
        try:
            channel.send(seal_manifest(keys, manifest))
            while True:
                item = sealed.get()
                if item is _END:
                    break
                if isinstance(item, BaseException):
                    raise item
                channel.send(Frame(FrameKind.CHUNK, item.to_payload()))
                bytes_sent += item.plaintext_length
                if progress_callback:
                    progress_callback(bytes_sent, manifest.file_size, manifest.file_name)
            channel.send(Frame(FrameKind.FIN))
        except TransportError as e:
            stop.set()
            raise TransferInterruptedError(
                f"Transfer interrupted after {bytes_sent} bytes: {e}", bytes_sent
            ) from e
        except BaseException:
            stop.set()
            channel.send_error("sender aborted")
            raise

    elapsed = time.monotonic() - started
    verified = streamed.digest() == manifest.file_digest
    if not verified:
        logger.warning(f"{path} changed while it was being sent")
    logger.info(f"Sent {bytes_sent} bytes in {elapsed:.2f}s")
    return TransferReport(
        bytes_sent=bytes_sent,
        elapsed=elapsed,
        mode=channel.mode,
        verified=verified,
        file_name=manifest.file_name,
    )


def _next_frame(channel: FrameChannel) -> Frame:
    try:
        frame = channel.recv()
    except StreamClosedError as e:
        raise PeerGoneError("Sender disconnected mid-transfer") from e
    if frame.kind is FrameKind.ERROR:
        raise PeerGoneError(f"Peer reported: {frame.payload.decode('utf-8', 'replace')}")
    return frame


def _publish(temp_path: Path, target: Path) -> None:
    """Move the verified temp file to its final name without ever overwriting."""
    try:
        os.link(temp_path, target)
    except FileExistsError as e:
        raise NameCollisionError(f"{target} appeared during the transfer") from e
    except OSError:
        # Filesystems without hard links
        if target.exists():
            raise NameCollisionError(f"{target} appeared during the transfer") from None
        os.replace(temp_path, target)
        return
    temp_path.unlink()


def receive_file(
    channel: FrameChannel,
    keys: SessionKeys,
    output_dir: Path,
    manifest_frame: Frame | None = None,
    progress_callback: ProgressCallback | None = None,
) -> TransferReport:
    """Receive, verify and store one file.

    Args:
        channel: Confirmed channel from the sender
        keys: Session keys from the PAKE
        output_dir: Destination directory
        manifest_frame: MANIFEST frame already read by the caller, if any
        progress_callback: Optional callback(bytes_done, total_bytes, message)

    Returns:
        TransferReport with the destination path

    Raises:
        NameCollisionError: If the target exists (checked before anything is written)
        IntegrityError: On a bad chunk, a short stream or a digest mismatch
        ReplayError: On a chunk at the wrong position
        TransferIOError: If the destination cannot be written
        PeerGoneError: If the sender disconnects
    """
    started = time.monotonic()
    if manifest_frame is None:
        manifest_frame = channel.expect(FrameKind.MANIFEST)
    manifest = open_manifest(keys, manifest_frame)
    output_dir = Path(output_dir)
    target = output_dir / manifest.file_name
    if target.exists():
        raise NameCollisionError(f"Refusing to overwrite {target}")
    logger.info(f"Receiving {manifest.file_name} ({manifest.file_size} bytes)")

    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        fd, temp_name = tempfile.mkstemp(prefix=".relaywire-", suffix=".part", dir=output_dir)
    except OSError as e:
        raise TransferIOError(f"Cannot write to {output_dir}: {e}") from e
    temp_path = Path(temp_name)

    cipher = ChunkCipher(keys)
    received = hashlib.sha256()
    bytes_received = 0
    try:
        with os.fdopen(fd, "wb") as out:
            for index in range(manifest.chunk_count):
                frame = _next_frame(channel)
                if frame.kind is FrameKind.FIN:
                    raise IntegrityError(
                        f"Stream ended after {index} of {manifest.chunk_count} chunks", index
                    )
                if frame.kind is not FrameKind.CHUNK:
                    raise ProtocolError(f"Expected CHUNK, got {frame.kind.name}")
                chunk = EncryptedChunk.from_payload(frame.payload)
                if chunk.plaintext_length > CHUNK_SIZE:
                    raise IntegrityError(f"Chunk {index} is oversized", index)
                data = cipher.open(Direction.CHUNK, chunk, index)
                if len(data) != manifest.chunk_length(index):
                    raise IntegrityError(f"Chunk {index} has the wrong length", index)
                try:
                    out.write(data)
                except OSError as e:
                    raise TransferIOError(f"Writing {temp_path} failed: {e}") from e
                received.update(data)
                bytes_received += len(data)
                if progress_callback:
                    progress_callback(bytes_received, manifest.file_size, manifest.file_name)

            frame = _next_frame(channel)
            if frame.kind is FrameKind.CHUNK:
                raise IntegrityError(
                    f"Sender sent more than {manifest.chunk_count} chunks", manifest.chunk_count
                )
            if frame.kind is not FrameKind.FIN:
                raise ProtocolError(f"Expected FIN, got {frame.kind.name}")
            if received.digest() != manifest.file_digest:
                raise IntegrityError("Reassembled file does not match the manifest digest")
            try:
                out.flush()
                os.fsync(out.fileno())
            except OSError as e:
                raise TransferIOError(f"Writing {temp_path} failed: {e}") from e
        try:
            _publish(temp_path, target)
        except OSError as e:
            raise TransferIOError(f"Cannot store {target}: {e}") from e
    except BaseException:
        temp_path.unlink(missing_ok=True)
        raise

    elapsed = time.monotonic() - started
    logger.info(f"Received {bytes_received} bytes in {elapsed:.2f}s, stored at {target}")
    return TransferReport(
        bytes_sent=bytes_received,
        elapsed=elapsed,
        mode=channel.mode,
        verified=True,
        file_name=manifest.file_name,
        destination=target,
    )
