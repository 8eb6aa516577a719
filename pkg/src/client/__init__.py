"""Client side: passphrases, connection establishment and the file pipeline."""

from src.client.config import ClientConfig, load_client_config
from src.client.passphrase import Passphrase, generate_passphrase
from src.client.transfer import (
    EncryptedChunk,
    FileManifest,
    TransferReport,
    chunk_file,
    open_chunk,
    receive_file,
    seal_chunk,
    send_file,
)
from src.client.transport import (
    ChannelChoice,
    EstablishedSession,
    attempt_direct,
    derive_room_id,
    establish,
    rendezvous,
)

__all__ = [
    "ClientConfig",
    "load_client_config",
    "Passphrase",
    "generate_passphrase",
    "EncryptedChunk",
    "FileManifest",
    "TransferReport",
    "chunk_file",
    "seal_chunk",
    "open_chunk",
    "send_file",
    "receive_file",
    "ChannelChoice",
    "EstablishedSession",
    "attempt_direct",
    "derive_room_id",
    "establish",
    "rendezvous",
]
