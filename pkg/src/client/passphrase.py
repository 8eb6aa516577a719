"""
Passphrase generation.

A passphrase is four words drawn uniformly and independently from the
2048-word list shipped next to this module (11 bits per word, 44 bits total).
The list is part of the protocol version: changing it changes nothing on the
wire but does change the entropy accounting, so it is versioned with the code.
"""

import logging
import secrets
from collections.abc import Callable
from dataclasses import dataclass
from functools import cache
from pathlib import Path

from src.pake.spake2 import InvalidInputError

logger = logging.getLogger(__name__)

WORDLIST_PATH = Path(__file__).parent / "wordlist.txt"
WORDLIST_SIZE = 2048
WORD_COUNT = 4
SEPARATOR = "-"

# randbelow-style source: returns a uniform integer in [0, n)
IndexSource = Callable[[int], int]


@cache
def load_wordlist() -> tuple[str, ...]:
    """Load and sanity-check the bundled word list."""
    words = tuple(WORDLIST_PATH.read_text(encoding="utf-8").split())
    if len(words) != WORDLIST_SIZE or len(set(words)) != WORDLIST_SIZE:
        raise RuntimeError(f"{WORDLIST_PATH} must hold {WORDLIST_SIZE} distinct words")
    return words


@dataclass(frozen=True)
class Passphrase:
    """Hyphen-joined words shared out-of-band between sender and receiver."""

    words: tuple[str, ...]

    def __str__(self) -> str:
        return SEPARATOR.join(self.words)

    def __repr__(self) -> str:
        return f"Passphrase(<{len(self.words)} words>)"

    @property
    def entropy_bits(self) -> int:
        return len(self.words) * (WORDLIST_SIZE.bit_length() - 1)

    @classmethod
    def parse(cls, text: str) -> "Passphrase":
        """Normalize user input (case, surrounding whitespace, spaces for hyphens).

        Words outside the list are accepted; a mistyped passphrase surfaces as a
        failed key confirmation, the same as any other wrong passphrase.

        Raises:
            InvalidInputError: If the input is empty
        """
        words = tuple(text.strip().lower().replace(" ", SEPARATOR).split(SEPARATOR))
        words = tuple(w for w in words if w)
        if not words:
            raise InvalidInputError("Passphrase must not be empty")
        return cls(words)


def generate_passphrase(rng: IndexSource | None = None) -> Passphrase:
    """Draw WORD_COUNT words uniformly from the word list.

    Args:
        rng: randbelow-style source; defaults to the OS CSPRNG

    Returns:
        A fresh passphrase

    Example:
        >>> str(generate_passphrase())
        'kobin-zagen-hadun-lomer'
    """
    draw = rng or secrets.randbelow
    words = load_wordlist()
    return Passphrase(tuple(words[draw(WORDLIST_SIZE)] for _ in range(WORD_COUNT)))
