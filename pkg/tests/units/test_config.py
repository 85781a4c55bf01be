"""Tests for service configuration."""

from __future__ import annotations

from pathlib import Path

import pytest

from blindpdp.config import DEFAULT_PORT, ServiceConfig, parse_listen
from blindpdp.errors import ConfigurationError


class TestParseListen:
    @pytest.mark.parametrize(
        ("value", "expected"),
        [
            ("127.0.0.1:7643", ("127.0.0.1", 7643)),
            ("localhost:0", ("localhost", 0)),
            ("[::1]:8080", ("::1", 8080)),
        ],
    )
    def test_valid(self, value, expected):
        assert parse_listen(value) == expected

    @pytest.mark.parametrize("value", ["7643", ":7643", ""])
    def test_missing_host(self, value):
        with pytest.raises(ConfigurationError, match="host:port"):
            parse_listen(value)

    def test_bad_port(self):
        with pytest.raises(ConfigurationError, match="integer"):
            parse_listen("localhost:http")


class TestServiceConfig:
    def test_defaults(self, tmp_path):
        config = ServiceConfig(tmp_path)
        assert config.profile == "prod"
        assert config.transport == "stream"
        assert config.port == DEFAULT_PORT
        assert config.test_mode is False

    def test_from_env(self):
        config = ServiceConfig.from_env(
            {
                "BLINDPDP_STORE": "/var/lib/blindpdp",
                "BLINDPDP_PROFILE": "toy",
                "BLINDPDP_TRANSPORT": "http",
                "BLINDPDP_LISTEN": "0.0.0.0:9000",
                "BLINDPDP_TEST_MODE": "yes",
                "HOME": "/root",
            }
        )
        assert config == ServiceConfig(
            Path("/var/lib/blindpdp"),
            profile="toy",
            transport="http",
            host="0.0.0.0",
            port=9000,
            test_mode=True,
        )

    def test_overrides_win(self):
        config = ServiceConfig.from_env(
            {"BLINDPDP_STORE": "/a", "BLINDPDP_TRANSPORT": "http"},
            store_path="/b",
            transport=None,
        )
        assert config.store_path == Path("/b")
        assert config.transport == "http"

    def test_missing_store(self):
        with pytest.raises(ConfigurationError, match="Set BLINDPDP_STORE or pass --store"):
            ServiceConfig.from_env({})

    def test_unknown_variable_warns(self):
        with pytest.warns(UserWarning, match="BLINDPDP_STOER"):
            ServiceConfig.from_env({"BLINDPDP_STORE": "/a", "BLINDPDP_STOER": "/b"})

    @pytest.mark.parametrize("value", ["maybe", "2"])
    def test_bad_flag(self, value):
        with pytest.raises(ConfigurationError, match="boolean flag"):
            ServiceConfig.from_env({"BLINDPDP_STORE": "/a", "BLINDPDP_TEST_MODE": value})

    def test_empty_flag_is_false(self):
        config = ServiceConfig.from_env({"BLINDPDP_STORE": "/a", "BLINDPDP_TEST_MODE": ""})
        assert config.test_mode is False

    @pytest.mark.parametrize(
        ("field", "value", "message"),
        [
            ("profile", "huge", "Unknown profile"),
            ("transport", "udp", "Unknown transport"),
            ("port", 70000, "port must be"),
        ],
    )
    def test_validation(self, tmp_path, field, value, message):
        with pytest.raises(ConfigurationError, match=message):
            ServiceConfig(tmp_path, **{field: value})
