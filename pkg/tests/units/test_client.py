"""Tests for the policy clients."""

from __future__ import annotations

import json

import pytest

from blindpdp.client import (
    AsyncPolicyHTTPClient,
    AsyncPolicyStreamClient,
    InProcessClient,
    PolicyClient,
    create_policy_client,
)
from blindpdp.constraint_engine import hbdsod_constraint
from blindpdp.dsl import parse_condition
from blindpdp.errors import (
    ConfigurationError,
    PolicySyntaxError,
    ServiceConnectionError,
)
from blindpdp.pdp import PolicyDecisionPoint
from blindpdp.policy import (
    CONSTRAINT_VIOLATION,
    ROLE_NOT_ACTIVE,
    AttributeSet,
    SatTuple,
)
from blindpdp.service import HTTP_ERROR_STATUS, PolicyDecisionService

from testsupport.keys import KeyRing, key_ring


@pytest.fixture(scope="module")
def ring(group) -> KeyRing:
    params, msk = group
    return key_ring(params, msk, ["admin", "alice", "sensor"])


@pytest.fixture
def clients(ring, rng):
    pdp = PolicyDecisionPoint.in_memory(ring.params, ring.servers.values())
    transport = InProcessClient(PolicyDecisionService(pdp, test_mode=True))
    admin = PolicyClient(transport, ring["admin"], ring.params, rng=rng)
    alice = PolicyClient(transport, ring["alice"], ring.params, rng=rng)
    return admin, alice


class _FakeFetch:
    """Stands in for the HTTP round trip."""

    def __init__(self, status: int, document: object) -> None:
        self.status = status
        self.text = document if isinstance(document, str) else json.dumps(document)
        self.calls: list[tuple[str, dict]] = []

    async def __call__(self, url: str, body: str, headers: dict[str, str]) -> tuple[int, str]:
        self.calls.append((url, json.loads(body)))
        return self.status, self.text


# ---------------------------------------------------------------------------
# Key-holding facade
# ---------------------------------------------------------------------------


class TestPolicyClient:
    async def test_policy_round(self, clients):
        admin, alice = clients
        cond = parse_condition("and(Location=ward, Level>=3#3)")
        policy_id = await admin.deploy_policy(SatTuple("Doctor", "read", "chart"), cond)
        assert policy_id == "policy-000001"

        t = SatTuple("Doctor", "read", "chart")
        granted = await alice.request(t, AttributeSet.parse(["Location=ward", "Level=5#3"]))
        assert granted.matched == (policy_id,)
        assert alice.last_counts is not None
        assert not await alice.request(t, AttributeSet.parse(["Location=ward", "Level=1#3"]))
        assert await admin.delete_policy(policy_id)
        assert not await alice.request(t, AttributeSet.parse(["Location=ward", "Level=5#3"]))

    async def test_attribute_source(self, clients, ring):
        admin, alice = clients
        await admin.deploy_policy(SatTuple("Doctor", "read", "chart"), parse_condition("Shift=day"))
        decision = await alice.request(
            SatTuple("Doctor", "read", "chart"),
            AttributeSet.parse(["Shift=day"]),
            attribute_source=ring["sensor"],
        )
        assert decision.permit

    async def test_rbac_round(self, clients):
        admin, alice = clients
        await admin.assign_roles("alice", ["Cardiologist"], parse_condition("Location=ward"))
        await admin.assign_permissions("Intern", [("read", "handbook")])
        assert await admin.deploy_hierarchy({"Cardiologist": ["Doctor"], "Doctor": ["Intern"]}) == 3

        assert (await alice.access("Cardiologist", "read", "handbook")).reason == ROLE_NOT_ACTIVE
        assert not await alice.activate_role("Cardiologist")
        assert await alice.activate_role("Cardiologist", AttributeSet.parse(["Location=ward"]))
        assert await alice.access("Cardiologist", "read", "handbook")
        assert await alice.deactivate_role("Cardiologist")
        assert await alice.clear_session() == 0

    async def test_constraint_round(self, clients):
        admin, alice = clients
        constraint_id = await admin.deploy_constraint(hbdsod_constraint(["Issue", "Approve"], "PO"))
        assert constraint_id == "constraint-000001"
        assert await alice.egrant_request("Clerk", "Issue", "PO", "#7")
        denied = await alice.egrant_request("Clerk", "Approve", "PO", "#7")
        assert denied.reason == CONSTRAINT_VIOLATION
        assert await alice.dump_history() == 1
        assert await admin.delete_constraint(constraint_id)
        assert await alice.egrant_request("Clerk", "Approve", "PO", "#7")

    async def test_key_verbs(self, clients, ring):
        admin, _ = clients
        assert await admin.revoke_user("sensor")
        assert await admin.import_key(ring.servers["sensor"]) == "sensor"


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------


class TestHTTPClient:
    async def test_success(self):
        fetch = _FakeFetch(200, {"removed": True})
        client = AsyncPolicyHTTPClient("http://pdp:7643/", fetch_function=fetch)
        assert await client.call("revoke-user", {"user_id": "bob"}) == {"removed": True}
        assert fetch.calls == [("http://pdp:7643/v1/revoke-user", {"user_id": "bob"})]

    async def test_error_document_raises_typed_error(self):
        error = {"code": "policy-syntax", "message": "bad (at offset 3)", "position": "3"}
        client = AsyncPolicyHTTPClient(fetch_function=_FakeFetch(HTTP_ERROR_STATUS, {"error": error}))
        with pytest.raises(PolicySyntaxError) as excinfo:
            await client.call("deploy-policy", {})
        assert excinfo.value.position == 3

    async def test_server_failure(self):
        client = AsyncPolicyHTTPClient(fetch_function=_FakeFetch(500, {"oops": 1}))
        with pytest.raises(ServiceConnectionError, match="Request failed") as excinfo:
            await client.call("params", {})
        assert excinfo.value.status_code == 500

    async def test_invalid_json(self):
        client = AsyncPolicyHTTPClient(fetch_function=_FakeFetch(200, "<html>"))
        with pytest.raises(ServiceConnectionError, match="Invalid JSON"):
            await client.call("params", {})

    async def test_bad_http_client(self):
        client = AsyncPolicyHTTPClient(http_client=lambda: "not a session")  # type: ignore[arg-type]
        with pytest.raises(ConfigurationError, match="ClientSession"):
            await client.call("params", {})


# ---------------------------------------------------------------------------
# Factory
# ---------------------------------------------------------------------------


class TestFactory:
    def test_transports(self, ring):
        assert isinstance(create_policy_client("stream", port=1), AsyncPolicyStreamClient)
        http = create_policy_client("http", host="pdp", port=80)
        assert isinstance(http, AsyncPolicyHTTPClient)
        assert http.url_for("params") == "http://pdp:80/v1/params"
        service = PolicyDecisionService(PolicyDecisionPoint.in_memory(ring.params))
        assert isinstance(create_policy_client("in-process", service=service), InProcessClient)

    def test_in_process_needs_service(self):
        with pytest.raises(ConfigurationError, match="needs a service"):
            create_policy_client("in-process")

    def test_unknown(self):
        with pytest.raises(ConfigurationError, match="Unknown transport"):
            create_policy_client("carrier-pigeon")  # type: ignore[arg-type]

    async def test_stream_connection_refused(self, unused_tcp_port):
        client = AsyncPolicyStreamClient(port=unused_tcp_port, timeout=2)
        with pytest.raises(ServiceConnectionError, match="Cannot connect"):
            await client.call("params", {})
        await client.close()
