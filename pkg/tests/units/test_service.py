"""Tests for the decision service dispatch and its HTTP surface."""

from __future__ import annotations

import pytest
from aiohttp import test_utils

from blindpdp.codec import DocumentCodec
from blindpdp.errors import ProtocolError, UserNotFoundError
from blindpdp.instrumentation import OPERATIONS
from blindpdp.pdp import PolicyDecisionPoint
from blindpdp.policy import SatTuple
from blindpdp.policy_engine import policy_enc, sat_request
from blindpdp.service import HTTP_ERROR_STATUS, VERBS, PolicyDecisionService
from blindpdp.wire import build_request

from testsupport.keys import KeyRing, key_ring

codec = DocumentCodec()
CHART = SatTuple("Doctor", "read", "chart")


@pytest.fixture(scope="module")
def ring(group) -> KeyRing:
    params, msk = group
    return key_ring(params, msk, ["admin", "alice"])


def _service(ring: KeyRing, *, test_mode: bool = False) -> PolicyDecisionService:
    pdp = PolicyDecisionPoint.in_memory(ring.params, ring.servers.values())
    return PolicyDecisionService(pdp, test_mode=test_mode)


def _deploy_body(ring: KeyRing, rng, t: SatTuple = CHART) -> dict:
    policy = policy_enc(t, None, ring["admin"], ring.params, rng=rng)
    return {"admin_id": "admin", "policy": codec.dump_client_policy(policy)}


def _evaluate_body(ring: KeyRing, rng, t: SatTuple = CHART, user: str = "alice") -> dict:
    request = sat_request(t, ring[user], ring.params, rng=rng)
    return {"request": codec.dump_request_tuple(request), "attributes": None}


class TestDispatch:
    def test_every_verb_has_a_handler(self, ring):
        service = _service(ring)
        assert set(service._handlers) == set(VERBS)

    async def test_params(self, ring):
        result = await _service(ring).handle("params", {})
        assert codec.load_params(result["params"]) == ring.params

    async def test_deploy_and_evaluate(self, ring, rng):
        service = _service(ring)
        deployed = await service.handle("deploy-policy", _deploy_body(ring, rng))
        assert deployed == {"policy_id": "policy-000001"}
        result = await service.handle("evaluate-request", _evaluate_body(ring, rng))
        assert result["decision"] == {
            "permit": True,
            "reason": None,
            "matched": ["policy-000001"],
        }
        assert "counts" not in result

    async def test_denial(self, ring, rng):
        service = _service(ring)
        await service.handle("deploy-policy", _deploy_body(ring, rng))
        body = _evaluate_body(ring, rng, SatTuple("Nurse", "read", "chart"))
        result = await service.handle("evaluate-request", body)
        assert result["decision"]["permit"] is False
        assert result["decision"]["reason"] == "no-matching-policy"

    async def test_counts_in_test_mode(self, ring, rng):
        service = _service(ring, test_mode=True)
        deployed = await service.handle("deploy-policy", _deploy_body(ring, rng))
        assert deployed["counts"]["server_reenc"] == 3
        result = await service.handle("evaluate-request", _evaluate_body(ring, rng))
        assert set(result["counts"]) == set(OPERATIONS)
        assert result["counts"]["server_td"] == 3
        assert result["counts"]["match"] == 3
        assert result["counts"]["client_enc"] == 0

    async def test_unknown_verb(self, ring):
        with pytest.raises(ProtocolError, match="unknown verb"):
            await _service(ring).handle("drop-everything", {})

    async def test_history_is_test_only(self, ring):
        with pytest.raises(ProtocolError, match="unknown verb"):
            await _service(ring).handle("dump-history", {"requester_id": "alice"})
        result = await _service(ring, test_mode=True).handle(
            "dump-history", {"requester_id": "alice"}
        )
        assert result["records"] == []

    async def test_missing_field(self, ring):
        with pytest.raises(ProtocolError, match="missing field 'policy'"):
            await _service(ring).handle("deploy-policy", {"admin_id": "admin"})

    @pytest.mark.parametrize("value", ["", 7, None])
    async def test_text_fields(self, ring, value):
        with pytest.raises(ProtocolError, match="non-empty string"):
            await _service(ring).handle("revoke-user", {"user_id": value})

    async def test_malformed_document(self, ring):
        with pytest.raises(ProtocolError, match="deploy-policy"):
            await _service(ring).handle("deploy-policy", {"admin_id": "admin", "policy": {}})

    async def test_engine_errors_pass_through(self, ring, rng):
        body = _deploy_body(ring, rng) | {"admin_id": "mallory"}
        with pytest.raises(UserNotFoundError):
            await _service(ring).handle("deploy-policy", body)

    async def test_key_management(self, ring):
        service = _service(ring)
        assert await service.handle("revoke-user", {"user_id": "alice"}) == {"removed": True}
        key = codec.dump_server_key(ring.servers["alice"])
        assert await service.handle("import-key", {"key": key}) == {"user_id": "alice"}
        assert service.pdp.keystore.user_ids() == ["admin", "alice"]


# ---------------------------------------------------------------------------
# Stream responses
# ---------------------------------------------------------------------------


class TestStreamResponses:
    async def test_respond_wraps_errors(self, ring):
        payload = build_request("no-such-verb", {})[5:]
        message = await _service(ring)._respond(payload)
        assert message[0] == ord("E")
        assert b"Cprotocol-error\x00" in message

    async def test_respond_to_garbage(self, ring):
        message = await _service(ring)._respond(b"no terminator")
        assert b"terminator" in message


# ---------------------------------------------------------------------------
# HTTP
# ---------------------------------------------------------------------------


class TestHTTP:
    async def test_post_verb(self, ring, rng):
        service = _service(ring)
        async with test_utils.TestClient(test_utils.TestServer(service.http_app())) as client:
            response = await client.post("/v1/deploy-policy", json=_deploy_body(ring, rng))
            assert response.status == 200
            assert await response.json() == {"policy_id": "policy-000001"}

            response = await client.post("/v1/evaluate-request", json=_evaluate_body(ring, rng))
            assert (await response.json())["decision"]["permit"] is True

    async def test_error_status(self, ring):
        service = _service(ring)
        async with test_utils.TestClient(test_utils.TestServer(service.http_app())) as client:
            response = await client.post("/v1/revoke-user", json={})
            assert response.status == HTTP_ERROR_STATUS
            error = (await response.json())["error"]
            assert error["code"] == "protocol-error"
            assert error["verb"] == "revoke-user"

    async def test_body_must_be_json(self, ring):
        service = _service(ring)
        async with test_utils.TestClient(test_utils.TestServer(service.http_app())) as client:
            response = await client.post("/v1/params", data=b"{")
            assert response.status == HTTP_ERROR_STATUS
            assert "not JSON" in (await response.json())["error"]["message"]

    async def test_get_is_not_routed(self, ring):
        async with test_utils.TestClient(test_utils.TestServer(_service(ring).http_app())) as client:
            response = await client.get("/v1/params")
            assert response.status == 405
