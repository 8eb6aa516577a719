"""Pytest configuration and shared fixtures."""

import os
import threading
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import pytest
from hypothesis import settings
from nacl import pwhash

from src.client.config import ClientConfig
from src.pake.config import PakeConfig
from src.pake.group import Ed25519Group, ToyGroup
from src.pake.spake2 import SessionKeys, build_transcript, derive_keys
from src.protocol.wire import Frame, format_address
from src.relay.config import RelayConfig
from src.relay.server import RelayServer, RelaySession
from src.relay.store import MetadataStore

# Group arithmetic goes through libsodium; per-example timing is not meaningful
settings.register_profile("relaywire", deadline=None)
settings.load_profile("relaywire")


@pytest.fixture(scope="session")
def toy_group():
    """The order-11 group used as a brute-force oracle."""
    return ToyGroup()


@pytest.fixture(scope="session")
def ed_group():
    """The production Ed25519 group."""
    return Ed25519Group()


@pytest.fixture(scope="session")
def fast_pake():
    """argon2id at its minimum cost so tests do not spend time stretching."""
    return PakeConfig(opslimit=pwhash.argon2id.OPSLIMIT_MIN, memlimit=pwhash.argon2id.MEMLIMIT_MIN)


@pytest.fixture
def session_keys() -> SessionKeys:
    """Deterministic session keys for pipeline tests that skip the exchange."""
    return derive_keys(build_transcript(b"sender", b"receiver", b"S", b"T", b"K", b"w"), b"test")


@dataclass
class FrameCapture:
    """Relay frame hook that records (source role, frame) pairs and can rewrite frames."""

    rewrite: Callable[[RelaySession, object, Frame], Frame] | None = None
    frames: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __call__(self, session, source, frame):
        if self.rewrite is not None:
            frame = self.rewrite(session, source, frame)
        with self.lock:
            self.frames.append((source, frame))
        return frame

    def kinds(self):
        with self.lock:
            return [frame.kind for _, frame in self.frames]

    def relayed_bytes(self) -> bytes:
        with self.lock:
            return b"".join(frame.payload for _, frame in self.frames)


@pytest.fixture
def frame_capture():
    return FrameCapture()


@pytest.fixture
def relay_server(frame_capture):
    """In-process relay on an ephemeral loopback port, with a recording frame hook."""
    config = RelayConfig(port=0, join_rate_limit=10_000, drain_timeout=1.0, sweep_interval=0.2)
    server = RelayServer(config, store=MetadataStore(), frame_hook=frame_capture)
    server.start()
    yield server
    server.shutdown()
    server.store.close()


@pytest.fixture
def relay_addr(relay_server) -> str:
    return format_address(*relay_server.address)


@pytest.fixture
def client_config(relay_addr, fast_pake, tmp_path) -> Callable[..., ClientConfig]:
    """Factory for client settings pointing at the test relay."""

    def make(**overrides) -> ClientConfig:
        values = {
            "relay_addr": relay_addr,
            "output_dir": tmp_path / "inbox",
            "rendezvous_timeout": 10.0,
            "direct_listen_host": "127.0.0.1",
            "pake": fast_pake,
        }
        values.update(overrides)
        return ClientConfig(**values)

    return make


@dataclass
class Outcome:
    """Result or exception of one side of a concurrent run."""

    value: object = None
    error: BaseException | None = None

    def unwrap(self):
        if self.error is not None:
            raise self.error
        return self.value


def _capture(fn: Callable[[], object]) -> Outcome:
    try:
        return Outcome(value=fn())
    except BaseException as e:  # noqa: BLE001
        return Outcome(error=e)


@pytest.fixture
def run_pair():
    """Run a sender callable and a receiver callable concurrently."""

    def run(sender: Callable[[], object], receiver: Callable[[], object], timeout: float = 60.0):
        with ThreadPoolExecutor(max_workers=2) as pool:
            sent = pool.submit(_capture, sender)
            received = pool.submit(_capture, receiver)
            return sent.result(timeout=timeout), received.result(timeout=timeout)

    return run


@pytest.fixture
def wait_until():
    """Poll a predicate until it holds or the timeout passes."""

    def wait(predicate: Callable[[], bool], timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if predicate():
                return True
            time.sleep(0.02)
        return predicate()

    return wait


@pytest.fixture
def make_file(tmp_path) -> Callable[..., Path]:
    """Factory writing a file of random bytes."""

    def make(size: int, name: str = "payload.bin") -> Path:
        path = tmp_path / "outbox" / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            for offset in range(0, size, 1 << 20):
                f.write(os.urandom(min(1 << 20, size - offset)))
        return path

    return make
