"""Embedded key-value store backing service state.

SQLite-backed; in-memory when no path is given. Services write canonical-
encoded records through this and rebuild their in-memory structures from a
prefix scan at startup, so a restarted server resumes where it stopped.
"""

from __future__ import annotations

import sqlite3
import threading


class KvStore:
    def __init__(self, path: str | None = None):
        self.path = path
        self._conn = sqlite3.connect(path or ":memory:", check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            if path:
                self._conn.execute("PRAGMA journal_mode=WAL")
                self._conn.execute("PRAGMA synchronous=NORMAL")
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS kv (key TEXT PRIMARY KEY, value BLOB NOT NULL)"
            )
            self._conn.commit()

    def put(self, key: str, value: bytes) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO kv (key, value) VALUES (?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value=excluded.value",
                (key, sqlite3.Binary(value)),
            )
            self._conn.commit()

    def put_many(self, items: list[tuple[str, bytes]]) -> None:
        with self._lock:
            self._conn.executemany(
                "INSERT INTO kv (key, value) VALUES (?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value=excluded.value",
                [(k, sqlite3.Binary(v)) for k, v in items],
            )
            self._conn.commit()

    def get(self, key: str) -> bytes | None:
        with self._lock:
            row = self._conn.execute("SELECT value FROM kv WHERE key=?", (key,)).fetchone()
        return bytes(row[0]) if row else None

    def delete(self, key: str) -> None:
        with self._lock:
            self._conn.execute("DELETE FROM kv WHERE key=?", (key,))
            self._conn.commit()

    def scan(self, prefix: str) -> list[tuple[str, bytes]]:
        with self._lock:
            if not prefix:
                rows = self._conn.execute("SELECT key, value FROM kv ORDER BY key").fetchall()
            else:
                # upper bound: bump the last prefix char so every continuation,
                # including non-ASCII ids, falls inside the range
                hi = prefix[:-1] + chr(ord(prefix[-1]) + 1)
                rows = self._conn.execute(
                    "SELECT key, value FROM kv WHERE key >= ? AND key < ? ORDER BY key",
                    (prefix, hi),
                ).fetchall()
        return [(k, bytes(v)) for k, v in rows]

    def close(self) -> None:
        with self._lock:
            self._conn.close()
