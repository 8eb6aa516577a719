"""Terminal progress output for transfers."""

import sys
import time
from collections.abc import Callable
from typing import TextIO

MAX_UPDATES_PER_SECOND = 10


class ProgressReporter:
    """Progress callback that redraws one stderr line at most 10 times a second.

    Usable anywhere a ``progress_callback(current, total, message)`` is accepted.

    Example:
        >>> reporter = ProgressReporter()
        >>> send_file(channel, keys, path, progress_callback=reporter)
        >>> reporter.close()
    """

    def __init__(
        self,
        stream: TextIO | None = None,
        clock: Callable[[], float] = time.monotonic,
        max_rate: float = MAX_UPDATES_PER_SECOND,
    ) -> None:
        self.stream = stream or sys.stderr
        self._clock = clock
        self._interval = 1.0 / max_rate
        self._last: float | None = None
        self.updates = 0

    def __call__(self, current: int, total: int, message: str) -> None:
        now = self._clock()
        done = current >= total
        if not done and self._last is not None and now - self._last < self._interval:
            return
        self._last = now
        percent = 100.0 * current / total if total else 100.0
        self.stream.write(f"\r{message}: {current}/{total} bytes ({percent:5.1f}%)")
        self.stream.flush()
        self.updates += 1

    def close(self) -> None:
        if self.updates:
            self.stream.write("\n")
            self.stream.flush()
