"""Benchmark configuration dataclasses."""

import re
from dataclasses import dataclass, field
from pathlib import Path

from src.pake.config import INTERACTIVE_CONFIG, PakeConfig
from src.protocol.channel import ChannelMode

MIB = 1024 * 1024
GIB = 1024 * MIB
DEFAULT_SIZES = (1 * MIB, 100 * MIB)
LARGE_SIZES = (512 * MIB, 1 * GIB)
MIN_RUNS = 3

_UNITS = {
    "": 1,
    "b": 1,
    "kb": 1000,
    "kib": 1024,
    "mb": 10**6,
    "mib": MIB,
    "gb": 10**9,
    "gib": GIB,
}


def parse_size(text: str) -> int:
    """Parse a byte count such as '1048576', '1MiB' or '100mb'.

    Raises:
        ValueError: If the text is not a size
    """
    match = re.fullmatch(r"\s*(\d+)\s*([a-zA-Z]*)\s*", text)
    if not match or match.group(2).lower() not in _UNITS:
        raise ValueError(f"Not a size: {text!r}")
    return int(match.group(1)) * _UNITS[match.group(2).lower()]


@dataclass
class BenchConfig:
    """Configuration for the loopback benchmark.

    Attributes:
        sizes: File sizes in bytes
        modes: Channel modes to measure
        runs: Timed transfers per (size, mode) pair
        large: Also run the 512 MiB and 1 GiB sizes
        report_path: Where to write the per-run JSON report
        work_dir: Scratch directory for generated and received files
        pake: Password-stretching cost used by both peers
        seed: Seed for the random file contents

    Example:
        >>> config = BenchConfig(sizes=[MIB], runs=5, report_path=Path("bench.json"))
    """

    sizes: list[int] = field(default_factory=lambda: list(DEFAULT_SIZES))
    modes: list[ChannelMode] = field(
        default_factory=lambda: [ChannelMode.DIRECT, ChannelMode.RELAYED]
    )
    runs: int = MIN_RUNS
    large: bool = False
    report_path: Path | None = None
    work_dir: Path | None = None
    pake: PakeConfig = field(default=INTERACTIVE_CONFIG, repr=False)
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.runs < MIN_RUNS:
            raise ValueError(f"runs must be at least {MIN_RUNS} to report a spread")
        if not self.sizes:
            raise ValueError("sizes must not be empty")
        if any(size < 0 for size in self.sizes):
            raise ValueError("sizes must be non-negative")
        if not self.modes:
            raise ValueError("modes must not be empty")
        self.modes = [ChannelMode(m) for m in self.modes]

    @property
    def effective_sizes(self) -> list[int]:
        sizes = set(self.sizes)
        if self.large:
            sizes.update(LARGE_SIZES)
        return sorted(sizes)
