"""Fixtures for end-to-end runs over every transport."""

from __future__ import annotations

from typing import AsyncIterator, Awaitable, Callable

import pytest
import pytest_asyncio

from blindpdp.client import (
    AsyncPolicyHTTPClient,
    AsyncPolicyStreamClient,
    InProcessClient,
    PolicyTransport,
)
from blindpdp.pdp import PolicyDecisionPoint
from blindpdp.service import (
    PolicyDecisionService,
    bound_port,
    start_http_server,
    start_stream_server,
)

from testsupport.keys import KeyRing, key_ring

ACTORS = ("admin", "alice", "bob", "clerk", "clerk2", "analyst", "analyst2")

Connect = Callable[[str, PolicyDecisionService], Awaitable[PolicyTransport]]


@pytest.fixture(scope="session")
def ring(group) -> KeyRing:
    params, msk = group
    return key_ring(params, msk, ACTORS)


@pytest.fixture
def service(ring) -> PolicyDecisionService:
    pdp = PolicyDecisionPoint.in_memory(ring.params, ring.servers.values())
    return PolicyDecisionService(pdp, test_mode=True)


@pytest_asyncio.fixture(loop_scope="session")
async def connect() -> AsyncIterator[Connect]:
    """Serve a service on port 0 and return a client of the given kind.

    Everything opened through the fixture is shut down at teardown.
    """
    cleanups: list[Callable[[], Awaitable[None]]] = []

    async def _connect(kind: str, service: PolicyDecisionService) -> PolicyTransport:
        client: PolicyTransport
        if kind == "in-process":
            client = InProcessClient(service)
        elif kind == "stream":
            server = await start_stream_server(service, "127.0.0.1", 0)

            async def stop() -> None:
                server.close()
                await server.wait_closed()

            cleanups.append(stop)
            client = AsyncPolicyStreamClient("127.0.0.1", bound_port(server), timeout=60)
        elif kind == "http":
            runner = await start_http_server(service, "127.0.0.1", 0)
            cleanups.append(runner.cleanup)
            client = AsyncPolicyHTTPClient(f"http://127.0.0.1:{bound_port(runner)}", timeout=60)
        else:
            raise ValueError(kind)
        cleanups.append(client.close)
        return client

    yield _connect

    for cleanup in reversed(cleanups):
        await cleanup()
