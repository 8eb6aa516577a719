"""
Prime-order group arithmetic for the sPAKE2 exchange.

Two realizations share one contract:

- :class:`Ed25519Group`, the production group: the prime-order subgroup of
  edwards25519 (cofactor 8), backed by libsodium through PyNaCl.
- :class:`ToyGroup`, the order-11 subgroup of the integers mod 23. It is small
  enough to brute-force discrete logarithms, which makes it an oracle for tests.

Elements are immutable values holding their canonical encoding, so equality,
hashing and serialization all work on bytes.

Example:
    >>> group = ToyGroup()
    >>> three = group.scalar(3)
    >>> group.scalar_mul(three, group.params.generator).data
    b'\\x08'
"""

import hashlib
import logging
import secrets
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass, field

from nacl import bindings

from src.errors import ProtocolError, RelaywireError

logger = logging.getLogger(__name__)

# Entropy source: returns exactly n cryptographically random bytes.
EntropySource = Callable[[int], bytes]

MASK_M_LABEL = b"relaywire M"
MASK_N_LABEL = b"relaywire N"


class GroupError(RelaywireError):
    """Raised when group arithmetic fails or the entropy source misbehaves."""

    pass


class DecodeError(ProtocolError):
    """Raised when bytes are not the canonical encoding of a subgroup element."""

    pass


@dataclass(frozen=True)
class Scalar:
    """An integer reduced modulo the group order.

    Attributes:
        value: Integer in [0, order)
        order: Group order the value is reduced by
    """

    value: int = field(repr=False)
    order: int

    def __post_init__(self) -> None:
        """Validate the reduction invariant."""
        if not (0 <= self.value < self.order):
            raise ValueError(f"Scalar must lie in [0, {self.order})")


@dataclass(frozen=True)
class GroupElement:
    """A group element, held as its canonical fixed-length encoding."""

    data: bytes

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class GroupParams:
    """Public parameters both parties must agree on.

    Attributes:
        name: Short identifier of the realization
        order_p: Prime order of the subgroup
        cofactor_h: Ratio of the full group order to order_p
        generator: Generator P of the order-p subgroup
        mask_m: Fixed mask element M (used by the sender)
        mask_n: Fixed mask element N (used by the receiver)
        element_length: Length of the canonical element encoding
        scalar_length: Length of the canonical scalar encoding
    """

    name: str
    order_p: int
    cofactor_h: int
    generator: GroupElement
    mask_m: GroupElement
    mask_n: GroupElement
    element_length: int
    scalar_length: int

    def __post_init__(self) -> None:
        if self.order_p < 2:
            raise ValueError("order_p must be a prime >= 2")
        if self.cofactor_h < 1:
            raise ValueError("cofactor_h must be a positive integer")
        if self.mask_m == self.mask_n:
            raise ValueError("mask_m and mask_n must be distinct")


class Group(ABC):
    """Abstract prime-order group with a canonical byte encoding.

    Subclasses implement the raw arithmetic on encodings; this base class adds
    scalar handling, sampling and parameter validation.
    """

    params: GroupParams
    identity: GroupElement

    def scalar(self, value: int) -> Scalar:
        """Build a scalar, reducing value modulo the group order."""
        return Scalar(value % self.params.order_p, self.params.order_p)

    def scalar_from_bytes(self, digest: bytes) -> Scalar:
        """Reduce a big-endian byte string modulo the group order."""
        return self.scalar(int.from_bytes(digest, "big"))

    def encode_scalar(self, k: Scalar) -> bytes:
        """Canonical fixed-length big-endian scalar encoding."""
        return k.value.to_bytes(self.params.scalar_length, "big")

    def encode(self, e: GroupElement) -> bytes:
        return e.data

    @abstractmethod
    def decode(self, data: bytes) -> GroupElement:
        """Parse a canonical encoding, rejecting anything outside the subgroup."""

    @abstractmethod
    def scalar_mul(self, k: Scalar, e: GroupElement) -> GroupElement:
        """Return k·e; scalar_mul(0, e) is the identity."""

    @abstractmethod
    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        """Return a + b under the group law."""

    @abstractmethod
    def neg(self, e: GroupElement) -> GroupElement:
        """Return the inverse of e."""

    def sub(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return self.add(a, self.neg(b))

    def base_mul(self, k: Scalar) -> GroupElement:
        return self.scalar_mul(k, self.params.generator)

    def random_scalar(self, rng: EntropySource | None = None) -> Scalar:
        """Sample a uniform nonzero scalar by rejection sampling.

        Args:
            rng: Entropy source; defaults to the OS CSPRNG

        Returns:
            Scalar uniform in [1, order_p)

        Raises:
            GroupError: If the entropy source fails or returns short output
        """
        rng = rng or secrets.token_bytes
        order = self.params.order_p
        bits = order.bit_length()
        nbytes = (bits + 7) // 8
        mask = (1 << bits) - 1
        while True:
            try:
                raw = rng(nbytes)
            except OSError as e:
                raise GroupError(f"Entropy source failed: {e}") from e
            if len(raw) != nbytes:
                raise GroupError(f"Entropy source returned {len(raw)} bytes, wanted {nbytes}")
            candidate = int.from_bytes(raw, "big") & mask
            if 0 < candidate < order:
                return Scalar(candidate, order)

    def is_in_subgroup(self, e: GroupElement) -> bool:
        """True when order_p · e is the identity."""
        minus_one = self.scalar(self.params.order_p - 1)
        return self.add(self.scalar_mul(minus_one, e), e) == self.identity

    def validate_params(self) -> None:
        """Check the generator and masks against the subgroup invariants.

        Raises:
            GroupError: If any public parameter violates the contract
        """
        p = self.params
        for label, element in (("generator", p.generator), ("M", p.mask_m), ("N", p.mask_n)):
            if element == self.identity:
                raise GroupError(f"{label} must not be the identity")
            if not self.is_in_subgroup(element):
                raise GroupError(f"{label} is outside the order-{p.order_p} subgroup")
        logger.debug(f"Group {p.name} parameters validated")


class ToyGroup(Group):
    """Order-11 subgroup of the multiplicative integers mod 23, generator 2.

    Group "addition" is multiplication mod 23 and "scalar multiplication" is
    exponentiation, so every result can be checked by hand or brute force.
    The subgroup elements are the quadratic residues
    {1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18}.
    """

    MODULUS = 23
    ORDER = 11
    GENERATOR = 2

    def __init__(self) -> None:
        self.identity = GroupElement(bytes([1]))
        mask_m = self._hash_to_element(MASK_M_LABEL, avoid=set())
        mask_n = self._hash_to_element(MASK_N_LABEL, avoid={mask_m})
        self.params = GroupParams(
            name="toy23",
            order_p=self.ORDER,
            cofactor_h=1,
            generator=GroupElement(bytes([self.GENERATOR])),
            mask_m=mask_m,
            mask_n=mask_n,
            element_length=1,
            scalar_length=1,
        )
        self.validate_params()

    @staticmethod
    def element(value: int) -> GroupElement:
        """Wrap a residue as an element (no validation)."""
        return GroupElement(bytes([value]))

    @staticmethod
    def value_of(e: GroupElement) -> int:
        return e.data[0]

    def _hash_to_element(self, label: bytes, avoid: set[GroupElement]) -> GroupElement:
        counter = 0
        while True:
            digest = hashlib.sha256(label + counter.to_bytes(4, "big")).digest()
            v = int.from_bytes(digest, "big") % (self.MODULUS - 1) + 1
            candidate = self.element(v * v % self.MODULUS)
            if candidate != self.identity and candidate not in avoid:
                return candidate
            counter += 1

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != 1:
            raise DecodeError(f"Toy element must be 1 byte, got {len(data)}")
        v = data[0]
        if not (1 <= v < self.MODULUS) or pow(v, self.ORDER, self.MODULUS) != 1:
            raise DecodeError(f"{v} is not in the order-{self.ORDER} subgroup")
        return self.element(v)

    def scalar_mul(self, k: Scalar, e: GroupElement) -> GroupElement:
        return self.element(pow(self.value_of(e), k.value, self.MODULUS))

    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return self.element(self.value_of(a) * self.value_of(b) % self.MODULUS)

    def neg(self, e: GroupElement) -> GroupElement:
        return self.element(pow(self.value_of(e), -1, self.MODULUS))


class Ed25519Group(Group):
    """Prime-order subgroup of edwards25519 (cofactor 8).

    libsodium refuses the identity and scalar zero in its scalar
    multiplication, so both cases are answered here before calling it.
    Decoding accepts the identity encoding so that callers can reject it with
    a protocol-specific error.
    """

    ORDER = 2**252 + 27742317777372353535851937790883648493
    COFACTOR = 8
    IDENTITY_BYTES = b"\x01" + b"\x00" * 31

    def __init__(self) -> None:
        self.identity = GroupElement(self.IDENTITY_BYTES)
        generator = GroupElement(
            bindings.crypto_scalarmult_ed25519_base_noclamp((1).to_bytes(32, "little"))
        )
        mask_m = self._hash_to_element(MASK_M_LABEL, avoid=set())
        mask_n = self._hash_to_element(MASK_N_LABEL, avoid={mask_m})
        self.params = GroupParams(
            name="ed25519",
            order_p=self.ORDER,
            cofactor_h=self.COFACTOR,
            generator=generator,
            mask_m=mask_m,
            mask_n=mask_n,
            element_length=32,
            scalar_length=32,
        )
        self.validate_params()

    def _hash_to_element(self, label: bytes, avoid: set[GroupElement]) -> GroupElement:
        """Try-and-increment hash to the subgroup, clearing the cofactor by doubling."""
        counter = 0
        while True:
            candidate = hashlib.sha512(label + counter.to_bytes(4, "big")).digest()[:32]
            counter += 1
            try:
                point = candidate
                for _ in range(3):
                    point = bindings.crypto_core_ed25519_add(point, point)
            except RuntimeError:
                continue  # not on the curve
            if not bindings.crypto_core_ed25519_is_valid_point(point):
                continue
            element = GroupElement(point)
            if element not in avoid:
                return element

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != 32:
            raise DecodeError(f"Ed25519 element must be 32 bytes, got {len(data)}")
        if data == self.IDENTITY_BYTES:
            return self.identity
        if not bindings.crypto_core_ed25519_is_valid_point(data):
            raise DecodeError("Not a canonical element of the prime-order subgroup")
        return GroupElement(bytes(data))

    def scalar_mul(self, k: Scalar, e: GroupElement) -> GroupElement:
        if k.value == 0 or e == self.identity:
            return self.identity
        try:
            return GroupElement(
                bindings.crypto_scalarmult_ed25519_noclamp(k.value.to_bytes(32, "little"), e.data)
            )
        except RuntimeError as err:
            raise GroupError(f"Scalar multiplication rejected the element: {err}") from err

    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        try:
            return GroupElement(bindings.crypto_core_ed25519_add(a.data, b.data))
        except RuntimeError as err:
            raise GroupError(f"Point addition failed: {err}") from err

    def neg(self, e: GroupElement) -> GroupElement:
        try:
            return GroupElement(bindings.crypto_core_ed25519_sub(self.IDENTITY_BYTES, e.data))
        except RuntimeError as err:
            raise GroupError(f"Point negation failed: {err}") from err
