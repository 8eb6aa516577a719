"""
PAKE Configuration

Cost parameters for password stretching and the additional authenticated
data mixed into the confirmation keys. Both parties must use identical values.
"""

from dataclasses import dataclass

from nacl import pwhash

PROTOCOL_AAD = b"relaywire/1"


@dataclass(frozen=True)
class PakeConfig:
    """Settings for the sPAKE2 exchange.

    Attributes:
        opslimit: argon2id iteration count
        memlimit: argon2id memory cost in bytes
        aad: Additional authenticated data for the confirmation keys

    Example:
        >>> fast = PakeConfig(
        ...     opslimit=pwhash.argon2id.OPSLIMIT_MIN,
        ...     memlimit=pwhash.argon2id.MEMLIMIT_MIN,
        ... )
    """

    # Interactive-grade cost (2 passes over 64 MiB)
    opslimit: int = pwhash.argon2id.OPSLIMIT_INTERACTIVE
    memlimit: int = pwhash.argon2id.MEMLIMIT_INTERACTIVE
    aad: bytes = PROTOCOL_AAD

    def __post_init__(self) -> None:
        if self.opslimit < pwhash.argon2id.OPSLIMIT_MIN:
            raise ValueError(f"opslimit must be >= {pwhash.argon2id.OPSLIMIT_MIN}")
        if self.memlimit < pwhash.argon2id.MEMLIMIT_MIN:
            raise ValueError(f"memlimit must be >= {pwhash.argon2id.MEMLIMIT_MIN}")


INTERACTIVE_CONFIG = PakeConfig()
