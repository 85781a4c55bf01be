"""Helpers for tests that race readers against writers."""

from __future__ import annotations

import sys
import threading
from typing import Callable


def read_while_writing(
    read: Callable[[], object], write: Callable[[int], object], writes: int = 20_000
) -> list[BaseException]:
    """Call ``read`` in a loop while another thread calls ``write(i)``.

    Returns the exceptions the reader raised.
    """
    errors: list[BaseException] = []
    done = threading.Event()

    def writer() -> None:
        try:
            for i in range(writes):
                write(i)
        finally:
            done.set()

    interval = sys.getswitchinterval()
    sys.setswitchinterval(1e-6)
    thread = threading.Thread(target=writer)
    thread.start()
    try:
        while not done.is_set():
            try:
                read()
            except RuntimeError as e:
                errors.append(e)
                break
    finally:
        thread.join()
        sys.setswitchinterval(interval)
    return errors
