"""Tests for the relay metadata store."""

import pytest

from src.relay.store import (
    OUTCOME_COMPLETED,
    OUTCOME_PEER_GONE,
    MetadataStore,
    RelayStats,
    StoreError,
)


class WallClock:
    def __init__(self, now: float = 1_700_000_000.0) -> None:
        self.now = now

    def __call__(self) -> float:
        return self.now


@pytest.fixture
def clock():
    return WallClock()


@pytest.fixture
def store(clock):
    store = MetadataStore(clock=clock)
    yield store
    store.close()


class TestRooms:
    """Test room rows and the active-room count."""

    def test_empty_stats(self, store):
        """Test counters of a fresh store."""
        assert store.stats() == RelayStats(rooms_active=0, bytes_relayed=0, sessions_completed=0)

    def test_rooms_active_counts_distinct_waiting_and_glued(self, store):
        """Test that both rows of a glued room count once."""
        store.record_room("aa", "sender", "192.0.2.1:1", "waiting")
        store.record_room("aa", "receiver", "192.0.2.2:2", "waiting")
        store.update_room_state("aa", "glued")
        store.record_room("bb", "sender", "192.0.2.3:3", "waiting")
        store.record_room("cc", "sender", "192.0.2.4:4", "waiting")
        store.update_room_state("cc", "closed")
        assert store.stats().rooms_active == 2

    def test_sweep_removes_old_unglued_rows(self, store, clock):
        """Test retention-based deletion that spares glued rooms."""
        store.record_room("old-closed", "sender", "a:1", "closed")
        store.record_room("old-glued", "sender", "a:2", "glued")
        clock.now += 1000
        store.record_room("new", "sender", "a:3", "waiting")
        assert store.sweep(retention=600) == 1
        assert store.sweep(retention=600) == 0
        rows = {row[0] for row in store._execute("SELECT room_id FROM rooms")}
        assert rows == {"old-glued", "new"}


class TestSessions:
    """Test session rows and relay counters."""

    def test_session_counters(self, store):
        """Test bytes and completed-session totals."""
        store.open_session("s1", "aa")
        store.close_session("s1", bytes_relayed=1000, frames_relayed=10, outcome=OUTCOME_COMPLETED)
        store.open_session("s2", "bb")
        store.close_session("s2", bytes_relayed=50, frames_relayed=2, outcome=OUTCOME_PEER_GONE)
        stats = store.stats()
        assert stats.bytes_relayed == 1050
        assert stats.sessions_completed == 1

    def test_open_session_counts_nothing(self, store):
        """Test that an unfinished session contributes no bytes."""
        store.open_session("s1", "aa")
        assert store.stats().bytes_relayed == 0

    def test_stats_to_dict(self):
        """Test the JSON-ready view of the counters."""
        stats = RelayStats(rooms_active=1, bytes_relayed=2, sessions_completed=3)
        assert stats.to_dict() == {"rooms_active": 1, "bytes_relayed": 2, "sessions_completed": 3}


class TestPersistence:
    """Test the on-disk database."""

    def test_reopen_read_only(self, tmp_path):
        """Test that a closed store can be reopened for reporting."""
        db = tmp_path / "relay.duckdb"
        writer = MetadataStore(db)
        writer.record_room("aa", "sender", "192.0.2.1:1", "waiting")
        writer.open_session("s1", "aa")
        writer.close_session("s1", 77, 3, OUTCOME_COMPLETED)
        writer.close()

        reader = MetadataStore(db, read_only=True)
        try:
            assert reader.stats() == RelayStats(1, 77, 1)
            with pytest.raises(StoreError):
                reader.record_room("bb", "sender", "x:1", "waiting")
        finally:
            reader.close()

    def test_read_only_missing_file(self, tmp_path):
        """Test that opening a missing database read-only fails cleanly."""
        with pytest.raises(StoreError, match="Cannot open metadata store"):
            MetadataStore(tmp_path / "missing.duckdb", read_only=True)
