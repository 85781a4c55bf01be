"""Operation counters for the cryptographic primitives.

Counting is scoped with :func:`count_operations`; outside a scope the
``record`` call is a no-op. The active counter lives in a context variable,
so it follows ``asyncio`` tasks and ``asyncio.to_thread`` workers started
inside the scope.
"""

from __future__ import annotations

import threading
from collections import Counter
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator

CLIENT_ENC = "client_enc"
SERVER_REENC = "server_reenc"
CLIENT_TD = "client_td"
SERVER_TD = "server_td"
MATCH = "match"

OPERATIONS = (CLIENT_ENC, SERVER_REENC, CLIENT_TD, SERVER_TD, MATCH)


class OperationCounter:
    """Thread-safe tally of primitive invocations."""

    __slots__ = ("_counts", "_lock")

    def __init__(self) -> None:
        self._counts: Counter[str] = Counter()
        self._lock = threading.Lock()

    def add(self, operation: str, n: int = 1) -> None:
        with self._lock:
            self._counts[operation] += n

    def __getitem__(self, operation: str) -> int:
        with self._lock:
            return self._counts[operation]

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {op: self._counts[op] for op in OPERATIONS}

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()

    def __repr__(self) -> str:
        return f"OperationCounter({self.snapshot()!r})"


_active: ContextVar[tuple[OperationCounter, ...]] = ContextVar(
    "blindpdp_operation_counters", default=()
)


def record(operation: str) -> None:
    for counter in _active.get():
        counter.add(operation)


@contextmanager
def count_operations() -> Iterator[OperationCounter]:
    """Count primitive calls made inside the ``with`` block.

    Scopes nest: an outer scope also sees the calls of an inner one.
    """
    counter = OperationCounter()
    token = _active.set(_active.get() + (counter,))
    try:
        yield counter
    finally:
        _active.reset(token)
