"""Tests for the optional logfire integration."""

from __future__ import annotations

import logging
from contextlib import nullcontext

from blindpdp import _telemetry


class RecordingLogfire:
    def __init__(self) -> None:
        self.calls: list[tuple[str, str, dict]] = []

    def span(self, name, **attributes):
        self.calls.append(("span", name, attributes))
        return nullcontext("span")

    def info(self, message, **attributes):
        self.calls.append(("info", message, attributes))

    def debug(self, message, **attributes):
        self.calls.append(("debug", message, attributes))


class TestWithoutLogfire:
    def test_span_is_noop(self, monkeypatch):
        monkeypatch.setattr(_telemetry, "_logfire", None)
        with _telemetry.span("blindpdp {verb}", verb="evaluate-request") as span:
            assert span is None

    def test_log_goes_to_stdlib(self, monkeypatch, caplog):
        monkeypatch.setattr(_telemetry, "_logfire", None)
        with caplog.at_level(logging.DEBUG, logger="blindpdp"):
            _telemetry.log("info", "user revoked", user="bob", removed=True)
            _telemetry.log("warn", "plain")
        assert caplog.records[0].getMessage() == "user revoked [user=bob removed=True]"
        assert caplog.records[1].levelno == logging.WARNING


class TestWithLogfire:
    def test_calls_are_forwarded(self, monkeypatch):
        fake = RecordingLogfire()
        monkeypatch.setattr(_telemetry, "_logfire", fake)
        with _telemetry.span("blindpdp {verb}", verb="params") as span:
            assert span == "span"
        _telemetry.log("debug", "request denied", reason="role-not-active")
        assert fake.calls == [
            ("span", "blindpdp {verb}", {"verb": "params"}),
            ("debug", "request denied", {"reason": "role-not-active"}),
        ]
