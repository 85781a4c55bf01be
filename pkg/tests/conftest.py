"""Pytest configuration and fixtures for blindpdp tests."""

from __future__ import annotations

import os
import random

import pytest
from pytest_asyncio import is_async_test

from blindpdp.sde import MasterSecretKey, PublicParams, toy_params

from testsupport.keys import TEST_SEED, mid_group


@pytest.fixture(scope="session", autouse=True)
def configure_test_telemetry() -> None:
    """Enable remote test telemetry only when explicitly requested."""
    if os.environ.get("ENABLE_TEST_TELEMETRY") != "1":
        return
    if not os.environ.get("LOGFIRE_TOKEN"):
        return

    import logfire

    logfire.configure(
        send_to_logfire="if-token-present",
        service_name="blindpdp",
    )
    logfire.instrument_aiohttp_client()


def pytest_collection_modifyitems(items):
    # https://pytest-asyncio.readthedocs.io/en/v0.24.0/how-to-guides/run_session_tests_in_same_loop.html
    pytest_asyncio_tests = (item for item in items if is_async_test(item))
    session_scope_marker = pytest.mark.asyncio(loop_scope="session")
    for async_test in pytest_asyncio_tests:
        async_test.add_marker(session_scope_marker, append=False)


@pytest.fixture(scope="session")
def anyio_backend() -> str:
    """
    Backend for anyio pytest plugin.

    :return: backend name.
    """
    return "asyncio"


@pytest.fixture(scope="session")
def toy_group() -> tuple[PublicParams, MasterSecretKey]:
    """The p=23, q=11 group with x=7."""
    return toy_params()


@pytest.fixture(scope="session")
def group() -> tuple[PublicParams, MasterSecretKey]:
    """Seeded 512-bit group shared by the whole session."""
    return mid_group()


@pytest.fixture
def rng() -> random.Random:
    return random.Random(TEST_SEED)
