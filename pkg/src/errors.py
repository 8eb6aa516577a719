"""
Exception hierarchy shared by the relay, the client and the CLI.

Every error raised by relaywire derives from :class:`RelaywireError` and falls
into one of four categories. The CLI maps each category to a stable exit code,
so scripts can branch on the outcome of a transfer.
"""


class RelaywireError(Exception):
    """Base exception for relaywire errors."""

    exit_code = 1


# Category: transport (exit 1)


class TransportError(RelaywireError):
    """Raised when a connection to the relay or the peer fails."""

    exit_code = 1


class RendezvousError(TransportError):
    """Raised when the relay refuses a JOIN or reports an error frame."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"Relay refused rendezvous: {reason}")
        self.reason = reason


class RendezvousTimeoutError(TransportError):
    """Raised when the peer does not join the room in time."""

    pass


class RelayUnavailableError(TransportError):
    """Raised when the relay cannot be reached at all (refused, unresolvable)."""

    pass


class PeerGoneError(TransportError):
    """Raised when the other side disconnects mid-session."""

    pass


class ProtocolError(TransportError):
    """Raised when a peer or the relay violates the wire protocol."""

    pass


# Category: authentication (exit 2)


class AuthenticationError(RelaywireError):
    """Raised when keys do not agree or data fails authentication."""

    exit_code = 2


class ConfirmationFailedError(AuthenticationError):
    """Raised when key confirmation fails."""

    def __init__(self, message: str = "wrong passphrase or tampering") -> None:
        super().__init__(message)


class IntegrityError(AuthenticationError):
    """Raised when a chunk or the reassembled file fails verification.

    Attributes:
        index: Offending chunk index, or None for whole-file checks
    """

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class ReplayError(AuthenticationError):
    """Raised when a chunk arrives at the wrong position (reorder or replay)."""

    def __init__(self, expected_index: int, index: int) -> None:
        super().__init__(f"Chunk {index} arrived where chunk {expected_index} was expected")
        self.expected_index = expected_index
        self.index = index


# Category: local I/O (exit 3)


class TransferIOError(RelaywireError):
    """Raised when reading the source or writing the destination fails."""

    exit_code = 3


class SizeMismatchError(TransferIOError):
    """Raised when a source stream is shorter or longer than announced."""

    pass


# Category: name collision (exit 4)


class NameCollisionError(RelaywireError):
    """Raised when the received file would overwrite an existing file."""

    exit_code = 4
