"""
Relay metadata store.

An embedded single-file DuckDB database holding connection metadata only:
room identifiers, roles, observed addresses, timestamps and per-session
counters. Frame payloads and passphrases are never written here.
"""

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import duckdb

from src.errors import RelaywireError

logger = logging.getLogger(__name__)

SCHEMA = (
    """
    CREATE TABLE IF NOT EXISTS rooms (
        room_id VARCHAR,
        role VARCHAR,
        address VARCHAR,
        created_at DOUBLE,
        state VARCHAR
    )
    """,
    """
    CREATE TABLE IF NOT EXISTS sessions (
        session_id VARCHAR,
        room_prefix VARCHAR,
        started_at DOUBLE,
        ended_at DOUBLE,
        bytes_relayed BIGINT,
        frames_relayed BIGINT,
        outcome VARCHAR
    )
    """,
)

OUTCOME_COMPLETED = "completed"
OUTCOME_PEER_GONE = "peer gone"
OUTCOME_SHUTDOWN = "shutdown"


class StoreError(RelaywireError):
    """Raised when the metadata database cannot be read or written."""

    pass


@dataclass(frozen=True)
class RelayStats:
    """Operational counters.

    Attributes:
        rooms_active: Rooms currently waiting or glued
        bytes_relayed: Payload bytes forwarded over all recorded sessions
        sessions_completed: Sessions that ended with a FIN
    """

    rooms_active: int
    bytes_relayed: int
    sessions_completed: int

    def to_dict(self) -> dict[str, int]:
        return {
            "rooms_active": self.rooms_active,
            "bytes_relayed": self.bytes_relayed,
            "sessions_completed": self.sessions_completed,
        }


class MetadataStore:
    """Thread-safe wrapper around one DuckDB connection.

    Example:
        >>> store = MetadataStore(Path("relay.duckdb"))
        >>> store.record_room("ab12...", "sender", "203.0.113.7:50122", "waiting")
        >>> store.stats().rooms_active
        1
    """

    def __init__(
        self, db_path: Path | None = None, clock=time.time, read_only: bool = False
    ) -> None:
        """Open (or create) the database.

        Args:
            db_path: Database file; None keeps everything in memory
            clock: Wall-clock source for record timestamps
            read_only: Open an existing file for reporting only
        """
        self.db_path = db_path
        self._clock = clock
        self._lock = threading.Lock()
        try:
            if read_only and db_path:
                self._con = duckdb.connect(str(db_path), read_only=True)
            else:
                self._con = duckdb.connect(str(db_path) if db_path else ":memory:")
                for statement in SCHEMA:
                    self._con.execute(statement)
        except duckdb.Error as e:
            raise StoreError(f"Cannot open metadata store {db_path}: {e}") from e
        logger.debug(f"Metadata store opened at {db_path or ':memory:'}")

    def _execute(self, sql: str, params: list[Any] | None = None) -> list[tuple]:
        """Run one statement under the connection lock and fetch all rows."""
        with self._lock:
            try:
                result = self._con.execute(sql, params or [])
                return result.fetchall() if result.description else []
            except duckdb.Error as e:
                raise StoreError(f"Metadata store query failed: {e}") from e

    def record_room(self, room_id: str, role: str, address: str, state: str) -> None:
        self._execute(
            "INSERT INTO rooms VALUES (?, ?, ?, ?, ?)",
            [room_id, role, address, self._clock(), state],
        )

    def update_room_state(self, room_id: str, state: str) -> None:
        self._execute("UPDATE rooms SET state = ? WHERE room_id = ?", [state, room_id])

    def sweep(self, retention: float) -> int:
        """Delete room rows older than the retention period unless still glued.

        Returns:
            Number of rows removed
        """
        cutoff = self._clock() - retention
        where = "created_at < ? AND state <> 'glued'"
        (count,) = self._execute(f"SELECT COUNT(*) FROM rooms WHERE {where}", [cutoff])[0]
        if count:
            self._execute(f"DELETE FROM rooms WHERE {where}", [cutoff])
            logger.debug(f"Swept {count} room rows from the metadata store")
        return int(count)

    def open_session(self, session_id: str, room_prefix: str) -> None:
        self._execute(
            "INSERT INTO sessions VALUES (?, ?, ?, NULL, 0, 0, NULL)",
            [session_id, room_prefix, self._clock()],
        )

    def close_session(
        self, session_id: str, bytes_relayed: int, frames_relayed: int, outcome: str
    ) -> None:
        self._execute(
            "UPDATE sessions SET ended_at = ?, bytes_relayed = ?, frames_relayed = ?, outcome = ? "
            "WHERE session_id = ?",
            [self._clock(), bytes_relayed, frames_relayed, outcome, session_id],
        )

    def stats(self) -> RelayStats:
        (rooms_active,) = self._execute(
            "SELECT COUNT(DISTINCT room_id) FROM rooms WHERE state IN ('waiting', 'glued')"
        )[0]
        bytes_relayed, completed = self._execute(
            "SELECT COALESCE(SUM(bytes_relayed), 0), "
            "COUNT(*) FILTER (WHERE outcome = ?) FROM sessions",
            [OUTCOME_COMPLETED],
        )[0]
        return RelayStats(
            rooms_active=int(rooms_active),
            bytes_relayed=int(bytes_relayed),
            sessions_completed=int(completed),
        )

    def close(self) -> None:
        with self._lock:
            self._con.close()
