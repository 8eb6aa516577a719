"""
Loopback benchmark harness.

Times complete transfers (rendezvous, PAKE, channel choice, streaming and
verification) of random files through an in-process relay, for each requested
size and channel mode. Every run must verify byte-exactly; a single failed
verification aborts the whole benchmark rather than reporting a number for it.
"""

import logging
import shutil
import tempfile
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from src.bench.config import MIB, BenchConfig
from src.client.config import ClientConfig
from src.client.passphrase import generate_passphrase
from src.client.transfer import TransferReport, file_digest, receive_file, send_file
from src.client.transport import establish
from src.errors import IntegrityError
from src.pake.spake2 import Role
from src.protocol.channel import ChannelMode
from src.protocol.wire import format_address
from src.relay.config import RelayConfig
from src.relay.server import RelayServer

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["size_bytes", "mode", "run", "wall_seconds", "throughput_MBps", "verified"]


class BenchmarkAbortedError(IntegrityError):
    """Raised when a benchmarked transfer fails verification or takes the wrong path."""

    pass


@dataclass(frozen=True)
class BenchResult:
    """Aggregated timing for one (size, mode) pair.

    Attributes:
        size_bytes: File size
        mode: Channel mode measured
        wall_seconds: Median wall-clock time of a full transfer
        throughput_mbps: size_bytes / wall_seconds, in MB/s
        runs: Number of timed transfers
        stddev: Sample standard deviation of the wall-clock times
    """

    size_bytes: int
    mode: ChannelMode
    wall_seconds: float
    throughput_mbps: float
    runs: int
    stddev: float


def write_random_file(path: Path, size: int, rng: np.random.Generator) -> Path:
    """Write ``size`` random bytes in 1 MiB blocks."""
    with open(path, "wb") as f:
        remaining = size
        while remaining:
            block = min(MIB, remaining)
            f.write(rng.bytes(block))
            remaining -= block
    return path


class BenchmarkRunner:
    """Runs the (size x mode x run) matrix against a relay.

    Example:
        >>> runner = BenchmarkRunner(BenchConfig(sizes=[MIB], runs=3))
        >>> results = runner.run_matrix()
        >>> print(format_table(results))
    """

    def __init__(self, config: BenchConfig, relay_addr: str | None = None) -> None:
        """Initialize the runner.

        Args:
            config: Sizes, modes, run count and report settings
            relay_addr: Existing relay to use; None starts one in-process
        """
        self.config = config
        self.relay_addr = relay_addr
        self.records: list[dict] = []

    def _client_config(self, mode: ChannelMode) -> ClientConfig:
        return ClientConfig(
            relay_addr=self.relay_addr,
            allow_direct=mode is ChannelMode.DIRECT,
            direct_listen_host="127.0.0.1",
            pake=self.config.pake,
        )

    def run_once(self, source: Path, mode: ChannelMode, out_dir: Path) -> float:
        """Transfer one file and return the wall-clock seconds.

        Raises:
            BenchmarkAbortedError: If the received file does not verify or the
                transfer ran over a different channel than requested
        """
        passphrase = str(generate_passphrase())
        config = self._client_config(mode)
        config_receiver = replace(config, output_dir=out_dir)

        def sender() -> TransferReport:
            session = establish(config, passphrase, Role.SENDER)
            with session.choice.channel:
                return send_file(session.choice.channel, session.keys, source)

        def receiver() -> TransferReport:
            session = establish(config_receiver, passphrase, Role.RECEIVER)
            with session.choice.channel:
                return receive_file(
                    session.choice.channel, session.keys, out_dir, session.manifest_frame
                )

        started = time.perf_counter()
        with ThreadPoolExecutor(max_workers=2, thread_name_prefix="relaywire-bench") as pool:
            sent_future = pool.submit(sender)
            received_future = pool.submit(receiver)
            received = received_future.result()
            sent = sent_future.result()
        wall = time.perf_counter() - started

        if not (sent.verified and received.verified):
            raise BenchmarkAbortedError(f"Transfer of {source.name} did not verify")
        if file_digest(received.destination) != file_digest(source):
            raise BenchmarkAbortedError(f"Received copy of {source.name} differs from the source")
        if received.mode is not mode:
            raise BenchmarkAbortedError(
                f"Requested a {mode.value} transfer but it ran {received.mode.value}"
            )
        received.destination.unlink()
        return wall

    def run_matrix(
        self,
        sizes: list[int] | None = None,
        modes: list[ChannelMode] | None = None,
        runs: int | None = None,
        progress_callback: Callable[[int, int, str], None] | None = None,
    ) -> list[BenchResult]:
        """Benchmark every (size, mode) pair.

        Args:
            sizes: File sizes in bytes (defaults to the configured sizes)
            modes: Channel modes (defaults to the configured modes)
            runs: Timed runs per pair (defaults to the configured count)
            progress_callback: Optional callback(current, total, message)

        Returns:
            One BenchResult per (size, mode), sizes ascending
        """
        sizes = sorted(sizes or self.config.effective_sizes)
        modes = modes or self.config.modes
        runs = runs or self.config.runs
        rng = np.random.default_rng(self.config.seed)
        work_dir = Path(tempfile.mkdtemp(prefix="relaywire-bench-", dir=self.config.work_dir))
        relay = None
        if self.relay_addr is None:
            relay = RelayServer(RelayConfig(port=0, join_rate_limit=10_000))
            self.relay_addr = format_address(*relay.start())
        self.records = []
        total = len(sizes) * len(modes) * runs
        join_limit = RelayConfig().join_rate_limit
        if relay is None and 2 * total > join_limit:
            logger.warning(
                f"{total} runs send {2 * total} JOINs from this host; a relay with the default "
                f"limit of {join_limit} per minute will reject some of them"
            )
        try:
            for size in sizes:
                # File generation is not timed
                source = write_random_file(work_dir / f"bench-{size}.bin", size, rng)
                for mode in modes:
                    for run in range(runs):
                        wall = self.run_once(source, mode, work_dir / "received")
                        self.records.append(
                            {
                                "size_bytes": size,
                                "mode": mode.value,
                                "run": run,
                                "wall_seconds": wall,
                                "throughput_MBps": size / wall / 1e6,
                                "verified": True,
                            }
                        )
                        logger.info(f"{size} bytes {mode.value} run {run}: {wall:.3f}s")
                        if progress_callback:
                            progress_callback(
                                len(self.records), total, f"{size} bytes {mode.value}"
                            )
                source.unlink()
        finally:
            if relay is not None:
                relay.shutdown()
                self.relay_addr = None
            shutil.rmtree(work_dir, ignore_errors=True)

        results = aggregate(self.records_frame())
        if self.config.report_path is not None:
            write_report(self.records_frame(), self.config.report_path)
        return results

    def records_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=RECORD_COLUMNS)


def aggregate(records: pd.DataFrame) -> list[BenchResult]:
    """Reduce per-run records to median +- stddev per (size, mode)."""
    results = []
    for (size, mode), group in records.groupby(["size_bytes", "mode"], sort=True):
        walls = group["wall_seconds"].to_numpy()
        median = float(np.median(walls))
        results.append(
            BenchResult(
                size_bytes=int(size),
                mode=ChannelMode(mode),
                wall_seconds=median,
                throughput_mbps=size / median / 1e6 if median > 0 else 0.0,
                runs=len(walls),
                stddev=float(np.std(walls, ddof=1)) if len(walls) > 1 else 0.0,
            )
        )
    return results


def write_report(records: pd.DataFrame, path: Path) -> Path:
    """Write one JSON record per (size, mode, run)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records.to_json(path, orient="records", indent=2)
    logger.info(f"Benchmark report saved to {path}")
    return path


def format_table(results: list[BenchResult]) -> str:
    """Render results as a fixed-width text table."""
    frame = pd.DataFrame(
        [
            {
                "size": _human_size(r.size_bytes),
                "mode": r.mode.value,
                "runs": r.runs,
                "wall (s)": f"{r.wall_seconds:.3f} ± {r.stddev:.3f}",
                "MB/s": f"{r.throughput_mbps:.1f}",
            }
            for r in results
        ]
    )
    return frame.to_string(index=False)


def _human_size(size: int) -> str:
    for unit, factor in (("GiB", 1024**3), ("MiB", MIB), ("KiB", 1024)):
        if size >= factor and size % factor == 0:
            return f"{size // factor} {unit}"
    return f"{size} B"
