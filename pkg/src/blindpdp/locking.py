"""Concurrency helpers shared by the engines.

Stores are copy-on-write: readers take an immutable snapshot without
locking, writers swap in a new mapping under a lock. Per-requester work
runs inside a per-key lock.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Generic, Iterable, Iterator, Mapping, TypeVar

T = TypeVar("T")


class KeyedLocks:
    """One lock per key while anyone holds or waits for it.

    A key's lock is dropped when its last user leaves, so the table only
    holds keys with work in flight.
    """

    def __init__(self) -> None:
        self._locks: dict[str, tuple[threading.Lock, int]] = {}
        self._guard = threading.Lock()

    @contextmanager
    def hold(self, key: str) -> Iterator[None]:
        with self._guard:
            lock, users = self._locks.get(key) or (threading.Lock(), 0)
            self._locks[key] = (lock, users + 1)
        try:
            with lock:
                yield
        finally:
            with self._guard:
                _, users = self._locks[key]
                if users == 1:
                    del self._locks[key]
                else:
                    self._locks[key] = (lock, users - 1)

    def __len__(self) -> int:
        with self._guard:
            return len(self._locks)


class Collection(Generic[T]):
    """Copy-on-write id -> item mapping that keeps insertion order."""

    def __init__(self, items: Iterable[tuple[str, T]] = ()) -> None:
        self._items: Mapping[str, T] = dict(items)
        self._write_lock = threading.Lock()

    def snapshot(self) -> tuple[T, ...]:
        return tuple(self._items.values())

    def items(self) -> tuple[tuple[str, T], ...]:
        return tuple(self._items.items())

    def get(self, item_id: str) -> T | None:
        return self._items.get(item_id)

    def put(self, item_id: str, item: T) -> None:
        with self._write_lock:
            updated = dict(self._items)
            updated[item_id] = item
            self._items = updated

    def remove(self, item_id: str) -> bool:
        with self._write_lock:
            if item_id not in self._items:
                return False
            updated = dict(self._items)
            del updated[item_id]
            self._items = updated
            return True

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._items


class IdSequence:
    """Sequential ids per prefix, e.g. ``policy-000001``.

    Ids never repeat after a delete, and a seeded run produces the same ids.
    """

    def __init__(self, counters: Mapping[str, int] | None = None) -> None:
        self._counters: dict[str, int] = dict(counters or {})
        self._lock = threading.Lock()

    def next(self, prefix: str) -> str:
        with self._lock:
            n = self._counters.get(prefix, 0) + 1
            self._counters[prefix] = n
        return f"{prefix}-{n:06d}"

    def state(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self._counters.items()))
