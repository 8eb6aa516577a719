"""
Symmetric SPAKE2 key exchange with key confirmation.

One side plays the sender (role A, masks with M), the other the receiver
(role B, masks with N). Each side:

1. stretches the passphrase into a scalar ``w`` (:func:`hash_password`),
2. publishes ``T = w·M + x·P`` or ``S = w·N + y·P`` (:func:`start`),
3. derives ``K = h·x·(S − w·N)`` (or the mirror image) and the session keys
   from the transcript (:func:`finish`),
4. proves possession of the keys with a MAC over the transcript
   (:func:`confirm_tag` / :func:`verify_peer_tag`).

Example:
    >>> group = Ed25519Group()
    >>> w = hash_password(group, "apple-river-stone-candle", room_id)
    >>> state, share = start(group, Role.SENDER, w)
    >>> send(share.data)
    >>> keys = finish(state, group.decode(receive()))
    >>> send(confirm_tag(keys, Role.SENDER).mac)
"""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import IntEnum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, hmac
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from nacl import pwhash

from src.errors import ProtocolError, RelaywireError
from src.pake.config import INTERACTIVE_CONFIG, PROTOCOL_AAD, PakeConfig
from src.pake.group import EntropySource, Group, GroupElement, Scalar

logger = logging.getLogger(__name__)

SESSION_KEY_BYTES = 32
CONFIRMATION_KEY_BYTES = 16
TAG_BYTES = 32
TRANSCRIPT_HASH_BYTES = 64
CONFIRMATION_INFO = b"ConfirmationKeys"


class InvalidInputError(RelaywireError, ValueError):
    """Raised when a PAKE input is unusable (e.g. an empty passphrase)."""

    pass


class PakeStateError(RelaywireError):
    """Raised when the exchange is driven out of order (e.g. finished twice)."""

    pass


class Role(IntEnum):
    """Protocol role; the numeric value is the role byte on the wire."""

    SENDER = 1
    RECEIVER = 2

    @property
    def identity(self) -> bytes:
        return b"sender" if self is Role.SENDER else b"receiver"

    @property
    def peer(self) -> "Role":
        return Role.RECEIVER if self is Role.SENDER else Role.SENDER


@dataclass
class PakeState:
    """One side of an exchange in progress. Single-owner; consumed by finish()."""

    group: Group = field(repr=False)
    role: Role
    identity_self: bytes
    identity_peer: bytes
    w: Scalar = field(repr=False)
    ephemeral_secret: Scalar = field(repr=False)
    own_share: GroupElement
    aad: bytes = b""
    peer_share: GroupElement | None = None
    finished: bool = False


@dataclass(frozen=True)
class SessionKeys:
    """Secrets derived from a finished exchange.

    Attributes:
        ke: Encryption key for file chunks
        ka: Input to the confirmation-key derivation
        kc_a: Sender's confirmation MAC key
        kc_b: Receiver's confirmation MAC key
        transcript_hash: 64-byte digest binding the session (not a key)
        transcript: Serialized transcript the confirmation MACs cover
    """

    ke: bytes = field(repr=False)
    ka: bytes = field(repr=False)
    kc_a: bytes = field(repr=False)
    kc_b: bytes = field(repr=False)
    transcript_hash: bytes
    transcript: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.ke) != SESSION_KEY_BYTES or len(self.ka) != len(self.ke):
            raise ValueError(f"ke and ka must both be {SESSION_KEY_BYTES} bytes")
        if len(self.kc_a) != CONFIRMATION_KEY_BYTES or len(self.kc_b) != len(self.kc_a):
            raise ValueError(f"kc_a and kc_b must both be {CONFIRMATION_KEY_BYTES} bytes")
        if len(self.transcript_hash) != TRANSCRIPT_HASH_BYTES:
            raise ValueError(f"transcript_hash must be {TRANSCRIPT_HASH_BYTES} bytes")


@dataclass(frozen=True)
class ConfirmationTag:
    """Key-confirmation MAC and the role that produced it."""

    mac: bytes
    from_role: Role


def hash_password(
    group: Group,
    passphrase: str,
    salt: bytes,
    config: PakeConfig = INTERACTIVE_CONFIG,
) -> Scalar:
    """Stretch a passphrase with argon2id and reduce it to a scalar w.

    Args:
        group: Group whose order w is reduced by
        passphrase: Shared secret, UTF-8
        salt: Session-scoped salt (the room identifier)
        config: argon2id cost parameters

    Returns:
        Deterministic scalar in [0, p)

    Raises:
        InvalidInputError: If the passphrase is empty
    """
    if not passphrase:
        raise InvalidInputError("Passphrase must not be empty")
    argon_salt = hashlib.blake2b(salt, digest_size=pwhash.argon2id.SALTBYTES).digest()
    stretched = pwhash.argon2id.kdf(
        64,
        passphrase.encode("utf-8"),
        argon_salt,
        opslimit=config.opslimit,
        memlimit=config.memlimit,
    )
    return group.scalar_from_bytes(stretched)


def start(
    group: Group,
    role: Role,
    w: Scalar,
    *,
    aad: bytes = PROTOCOL_AAD,
    identities: tuple[bytes, bytes] | None = None,
    rng: EntropySource | None = None,
    ephemeral: Scalar | None = None,
) -> tuple[PakeState, GroupElement]:
    """Draw a fresh ephemeral secret and compute this side's public share.

    Args:
        group: Group to run in
        role: SENDER computes T = w·M + x·P, RECEIVER computes S = w·N + y·P
        w: Password scalar from hash_password()
        aad: Additional authenticated data for the confirmation keys
        identities: (self, peer) identity strings; defaults to the role labels
        rng: Entropy source for the ephemeral secret
        ephemeral: Fixed ephemeral secret (deterministic tests only)

    Returns:
        Tuple of (state to pass to finish(), share to send to the peer)
    """
    if identities is None:
        identities = (role.identity, role.peer.identity)
    secret = ephemeral if ephemeral is not None else group.random_scalar(rng)
    mask = group.params.mask_m if role is Role.SENDER else group.params.mask_n
    share = group.add(group.scalar_mul(w, mask), group.base_mul(secret))
    state = PakeState(
        group=group,
        role=role,
        identity_self=identities[0],
        identity_peer=identities[1],
        w=w,
        ephemeral_secret=secret,
        own_share=share,
        aad=aad,
    )
    return state, share


def build_transcript(*parts: bytes) -> bytes:
    """Concatenate parts, each prefixed by its 8-byte little-endian length."""
    return b"".join(len(part).to_bytes(8, "little") + part for part in parts)


def finish(state: PakeState, peer_share: GroupElement) -> SessionKeys:
    """Combine the peer's share with local state and derive the session keys.

    Args:
        state: State returned by start(); consumed by this call
        peer_share: The other side's public share

    Returns:
        SessionKeys shared with an honest peer holding the same passphrase

    Raises:
        PakeStateError: If the state was already finished
        ProtocolError: If the peer share is the identity or not in the subgroup
    """
    if state.finished:
        raise PakeStateError("PAKE state already finished")
    group = state.group
    params = group.params
    peer_share = group.decode(peer_share.data)
    if peer_share == group.identity:
        raise ProtocolError("Peer share is the identity element")

    peer_mask = params.mask_n if state.role is Role.SENDER else params.mask_m
    unmasked = group.sub(peer_share, group.scalar_mul(state.w, peer_mask))
    k_scalar = group.scalar(params.cofactor_h * state.ephemeral_secret.value)
    shared = group.scalar_mul(k_scalar, unmasked)
    if shared == group.identity:
        raise ProtocolError("Shared element is the identity")

    if state.role is Role.SENDER:
        id_a, id_b = state.identity_self, state.identity_peer
        t_share, s_share = state.own_share, peer_share
    else:
        id_a, id_b = state.identity_peer, state.identity_self
        t_share, s_share = peer_share, state.own_share

    transcript = build_transcript(
        id_a,
        id_b,
        group.encode(s_share),
        group.encode(t_share),
        group.encode(shared),
        group.encode_scalar(state.w),
    )
    keys = derive_keys(transcript, state.aad)

    state.peer_share = peer_share
    state.finished = True
    logger.debug(f"PAKE finished for role {state.role.name}")
    return keys


def derive_keys(transcript: bytes, aad: bytes) -> SessionKeys:
    """Key schedule: Ke || Ka = SHA-512(TT); KcA || KcB = HKDF(nil, Ka, info)."""
    digest = hashlib.sha512(transcript).digest()
    ke, ka = digest[:SESSION_KEY_BYTES], digest[SESSION_KEY_BYTES:]
    confirmation = HKDF(
        algorithm=hashes.SHA256(),
        length=2 * CONFIRMATION_KEY_BYTES,
        salt=None,
        info=CONFIRMATION_INFO + aad,
    ).derive(ka)
    return SessionKeys(
        ke=ke,
        ka=ka,
        kc_a=confirmation[:CONFIRMATION_KEY_BYTES],
        kc_b=confirmation[CONFIRMATION_KEY_BYTES:],
        transcript_hash=hashlib.blake2b(transcript, digest_size=TRANSCRIPT_HASH_BYTES).digest(),
        transcript=transcript,
    )


def _mac(key: bytes, message: bytes) -> hmac.HMAC:
    h = hmac.HMAC(key, hashes.SHA256())
    h.update(message)
    return h


def confirm_tag(keys: SessionKeys, role: Role) -> ConfirmationTag:
    """MAC(KcA, TT) for the sender, MAC(KcB, TT) for the receiver."""
    key = keys.kc_a if role is Role.SENDER else keys.kc_b
    return ConfirmationTag(mac=_mac(key, keys.transcript).finalize(), from_role=role)


def verify_peer_tag(keys: SessionKeys, own_role: Role, tag: ConfirmationTag) -> bool:
    """Check the peer's confirmation tag in constant time.

    Returns:
        True to accept, False to reject

    Raises:
        ProtocolError: If the tag has the wrong length
    """
    if len(tag.mac) != TAG_BYTES:
        raise ProtocolError(f"Confirmation tag must be {TAG_BYTES} bytes, got {len(tag.mac)}")
    peer_role = own_role.peer
    if tag.from_role is not peer_role:
        return False
    key = keys.kc_a if peer_role is Role.SENDER else keys.kc_b
    try:
        _mac(key, keys.transcript).verify(tag.mac)
    except InvalidSignature:
        return False
    return True
