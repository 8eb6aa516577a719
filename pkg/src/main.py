"""
relaywire command-line interface.

Exit codes:
    0  success
    1  transport error (relay unreachable, peer gone, timeout) or usage error
    2  authentication error (wrong passphrase or tampering)
    3  local I/O error (unreadable source, unwritable destination)
    4  name collision (received file would overwrite an existing file)
"""

import argparse
import getpass
import json
import logging
import signal
import sys
from pathlib import Path
from typing import TextIO

from src.bench.benchmark import BenchmarkRunner, format_table
from src.bench.config import BenchConfig, parse_size
from src.client.config import ClientConfig, load_client_config
from src.client.passphrase import Passphrase, generate_passphrase
from src.client.progress import ProgressReporter
from src.client.transfer import TransferReport, build_manifest, receive_file, send_file
from src.client.transport import establish
from src.errors import RelaywireError, TransferIOError
from src.pake.spake2 import Role
from src.protocol.channel import ChannelMode
from src.protocol.wire import parse_address
from src.relay.config import RelayConfig
from src.relay.server import RelayServer
from src.relay.store import MetadataStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERRUPTED = 130


def read_passphrase(stdin: TextIO | None = None) -> str:
    """Prompt without echo on a terminal; otherwise read one line from the pipe."""
    stdin = stdin or sys.stdin
    if stdin.isatty():
        return getpass.getpass("Passphrase: ")
    return stdin.readline().strip()


def _print_report(report: TransferReport, as_json: bool, stdout: TextIO) -> None:
    if as_json:
        print(json.dumps(report.to_dict()), file=stdout)
        return
    status = "verified" if report.verified else "NOT verified"
    print(
        f"{report.file_name}: {report.bytes_sent} bytes in {report.elapsed:.2f}s "
        f"({report.throughput_mbps:.1f} MB/s, {report.mode.value}, {status})",
        file=stdout,
    )
    if report.destination is not None:
        print(f"Saved to {report.destination}", file=stdout)


def cmd_send(
    path: Path,
    config: ClientConfig,
    passphrase: Passphrase | None = None,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
) -> int:
    """Send one file; the passphrase is generated here and shown once on stderr.

    Returns:
        0 when the receiver-bound stream matched the manifest digest
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    manifest = build_manifest(path)
    passphrase = passphrase or generate_passphrase()
    print(f"Passphrase: {passphrase}", file=stderr)
    print("Give it to the receiver over a channel you trust.", file=stderr)

    session = establish(config, str(passphrase), Role.SENDER)
    progress = ProgressReporter(stderr)
    with session.choice.channel as channel:
        try:
            report = send_file(channel, session.keys, path, manifest, progress)
        finally:
            progress.close()
    _print_report(report, config.json_output, stdout)
    if not report.verified:
        raise TransferIOError(f"{path} changed while it was being sent")
    return EXIT_OK


def cmd_receive(
    config: ClientConfig,
    passphrase: str | None = None,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
) -> int:
    """Receive one file into config.output_dir."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if passphrase is None:
        passphrase = read_passphrase()
    passphrase = str(Passphrase.parse(passphrase))

    session = establish(config, passphrase, Role.RECEIVER)
    progress = ProgressReporter(stderr)
    with session.choice.channel as channel:
        try:
            report = receive_file(
                channel, session.keys, config.output_dir, session.manifest_frame, progress
            )
        finally:
            progress.close()
    _print_report(report, config.json_output, stdout)
    return EXIT_OK


def _raise_interrupt(signum: int, frame: object) -> None:
    raise KeyboardInterrupt


def cmd_relay_serve(args: argparse.Namespace) -> int:
    host, port = parse_address(args.listen)
    config = RelayConfig(host=host, port=port, db_path=args.db, room_ttl=args.room_ttl)
    server = RelayServer(config)
    signal.signal(signal.SIGTERM, _raise_interrupt)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("Shutting down relay")
    finally:
        server.shutdown()
    return EXIT_OK


def cmd_relay_stats(args: argparse.Namespace, stdout: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    if not args.db.exists():
        raise TransferIOError(f"No metadata store at {args.db}")
    store = MetadataStore(args.db, read_only=True)
    try:
        stats = store.stats()
    finally:
        store.close()
    if args.json:
        print(json.dumps(stats.to_dict()), file=stdout)
    else:
        for key, value in stats.to_dict().items():
            print(f"{key}: {value}", file=stdout)
    return EXIT_OK


def cmd_bench_run(args: argparse.Namespace, stdout: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    config_kwargs = {"runs": args.runs, "large": args.large, "report_path": args.json}
    if args.sizes:
        config_kwargs["sizes"] = args.sizes
    if args.modes:
        config_kwargs["modes"] = [ChannelMode(m) for m in args.modes]
    runner = BenchmarkRunner(BenchConfig(**config_kwargs), relay_addr=args.relay)
    progress = ProgressReporter()
    try:
        results = runner.run_matrix(progress_callback=progress)
    finally:
        progress.close()
    print(format_table(results), file=stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS, help="Enable debug logging"
    )

    parser = argparse.ArgumentParser(
        prog="relaywire",
        description="End-to-end encrypted file transfer through a rendezvous relay",
        epilog="Exit codes: 0 ok, 1 transport, 2 authentication, 3 I/O, 4 name collision",
    )
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    send = commands.add_parser("send", parents=[common], help="Send a file")
    send.add_argument("path", type=Path, help="File to send")
    send.add_argument("--relay", help="Relay address host:port")
    send.add_argument("--json", action="store_true", help="Print the report as JSON")

    receive = commands.add_parser("receive", parents=[common], help="Receive a file")
    receive.add_argument("--relay", help="Relay address host:port")
    receive.add_argument("--out", type=Path, default=None, help="Destination directory")
    receive.add_argument("--json", action="store_true", help="Print the report as JSON")

    relay = commands.add_parser("relay", help="Run or inspect a relay")
    relay_commands = relay.add_subparsers(dest="relay_command", required=True)
    serve = relay_commands.add_parser("serve", parents=[common], help="Run the relay")
    serve.add_argument("--listen", default="0.0.0.0:4455", help="Listen address host:port")
    serve.add_argument("--db", type=Path, default=Path("relay.duckdb"), help="Metadata store")
    serve.add_argument(
        "--room-ttl", type=float, default=600.0, help="Seconds a room may wait for its peer"
    )
    stats = relay_commands.add_parser("stats", parents=[common], help="Show relay statistics")
    stats.add_argument("--db", type=Path, default=Path("relay.duckdb"), help="Metadata store")
    stats.add_argument("--json", action="store_true", help="Print statistics as JSON")

    bench = commands.add_parser("bench", help="Loopback benchmarks")
    bench_commands = bench.add_subparsers(dest="bench_command", required=True)
    run = bench_commands.add_parser("run", parents=[common], help="Run the benchmark matrix")
    run.add_argument("--sizes", nargs="+", type=parse_size, help="File sizes, e.g. 1MiB 100MiB")
    run.add_argument(
        "--modes", nargs="+", choices=[m.value for m in ChannelMode], help="Channel modes"
    )
    run.add_argument("--runs", type=int, default=3, help="Timed runs per size and mode")
    run.add_argument("--large", action="store_true", help="Add the 512 MiB and 1 GiB sizes")
    run.add_argument("--json", type=Path, default=None, help="Write per-run records here")
    run.add_argument(
        "--relay",
        default=None,
        help=(
            "Use an existing relay instead of in-process. Each run JOINs twice from this "
            "host, so keep runs under the relay's JOIN rate limit (10 per minute by default)"
        ),
    )
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "send":
        config = load_client_config(relay=args.relay, json_output=args.json)
        return cmd_send(args.path, config)
    if args.command == "receive":
        config = load_client_config(relay=args.relay, output_dir=args.out, json_output=args.json)
        return cmd_receive(config)
    if args.command == "relay":
        if args.relay_command == "serve":
            return cmd_relay_serve(args)
        return cmd_relay_stats(args)
    return cmd_bench_run(args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )

    try:
        return dispatch(args)
    except RelaywireError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"relaywire: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"relaywire: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("relaywire: interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
