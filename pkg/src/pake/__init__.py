"""Password-authenticated key exchange: group arithmetic and the sPAKE2 protocol."""

from src.pake.config import PakeConfig
from src.pake.group import Ed25519Group, Group, GroupElement, GroupParams, Scalar, ToyGroup
from src.pake.spake2 import (
    ConfirmationTag,
    PakeState,
    Role,
    SessionKeys,
    confirm_tag,
    finish,
    hash_password,
    start,
    verify_peer_tag,
)

__all__ = [
    "PakeConfig",
    "Group",
    "GroupParams",
    "GroupElement",
    "Scalar",
    "ToyGroup",
    "Ed25519Group",
    "Role",
    "PakeState",
    "SessionKeys",
    "ConfirmationTag",
    "hash_password",
    "start",
    "finish",
    "confirm_tag",
    "verify_peer_tag",
]
