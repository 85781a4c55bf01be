"""Clients for the decision service.

Transports move JSON bodies: :class:`AsyncPolicyStreamClient` over the
length-prefixed stream protocol, :class:`AsyncPolicyHTTPClient` over
``POST /v1/{verb}``, :class:`InProcessClient` straight into a service
object. :class:`PolicyClient` holds a client key and turns cleartext
requests into encrypted payloads for any of them.
"""

from __future__ import annotations

import asyncio
import inspect
import json
from typing import Any, Awaitable, Callable, Literal, Mapping, Protocol, Sequence

import aiohttp

from .codec import DocumentCodec
from .constraint_engine import ConstraintSpec, constraint_enc, request_generate
from .errors import ConfigurationError, ProtocolError, ServiceConnectionError
from .policy import AttributeSet, Decision, SatTuple, TreeNode
from .policy_engine import attributes_request, policy_enc, sat_request
from .rbac_engine import (
    access_request_generate,
    hierarchy_enc,
    permission_assignment_enc,
    role_activation_request,
    role_assignment_enc,
)
from .sde import ClientKeySet, PublicParams, RandomSource, ServerKeySet
from .service import HTTP_ERROR_STATUS, PolicyDecisionService
from .wire import WireProtocol, error_from_fields

Body = dict[str, Any]
FetchFunction = Callable[[str, str, dict[str, str]], Awaitable[tuple[int, str]]]


class PolicyTransport(Protocol):
    async def call(self, verb: str, body: Body) -> Body: ...

    async def close(self) -> None: ...


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


class InProcessClient:
    """Calls a service object directly; bodies still pass through JSON."""

    def __init__(self, service: PolicyDecisionService) -> None:
        self._service = service

    async def call(self, verb: str, body: Body) -> Body:
        result = await self._service.handle(verb, json.loads(json.dumps(body)))
        return json.loads(json.dumps(result))

    async def close(self) -> None:
        return None

    async def __aenter__(self) -> "InProcessClient":
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb) -> None:
        await self.close()


class AsyncPolicyStreamClient:
    """One stream connection, opened lazily; calls are serialized."""

    def __init__(
        self, host: str = "127.0.0.1", port: int = 7643, *, timeout: float | None = None
    ) -> None:
        self._host = host
        self._port = port
        self._timeout = timeout
        self._writer: asyncio.StreamWriter | None = None
        self._protocol: WireProtocol | None = None
        self._lock = asyncio.Lock()

    async def _ensure_connection(self) -> WireProtocol:
        if self._protocol is not None and self._protocol.is_reusable:
            return self._protocol
        await self._close_connection()
        try:
            reader, writer = await asyncio.wait_for(
                asyncio.open_connection(self._host, self._port), self._timeout
            )
        except (OSError, asyncio.TimeoutError) as e:
            raise ServiceConnectionError(
                f"Cannot connect to {self._host}:{self._port}: {e}"
            ) from e

        async def send_fn(data: bytes) -> None:
            writer.write(data)
            await writer.drain()

        async def recv_fn() -> bytes:
            return await reader.read(65536)

        self._writer = writer
        self._protocol = WireProtocol(send_fn, recv_fn)
        return self._protocol

    async def _close_connection(self) -> None:
        protocol, writer = self._protocol, self._writer
        self._protocol = None
        self._writer = None
        if protocol is not None:
            await protocol.terminate()
        if writer is not None:
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass

    async def call(self, verb: str, body: Body) -> Body:
        async with self._lock:
            protocol = await self._ensure_connection()
            try:
                return await asyncio.wait_for(protocol.call(verb, body), self._timeout)
            except (ServiceConnectionError, ProtocolError):
                await self._close_connection()
                raise
            except (OSError, asyncio.TimeoutError) as e:
                await self._close_connection()
                raise ServiceConnectionError(f"Stream error: {e!r}") from e

    async def close(self) -> None:
        async with self._lock:
            await self._close_connection()

    async def __aenter__(self) -> "AsyncPolicyStreamClient":
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb) -> None:
        await self.close()


class AsyncPolicyHTTPClient:
    """Async HTTP client for the decision service."""

    def __init__(
        self,
        base_url: str = "http://127.0.0.1:7643",
        *,
        http_client: aiohttp.ClientSession
        | Callable[[], Awaitable[aiohttp.ClientSession]]
        | None = None,
        timeout: float | aiohttp.ClientTimeout | None = None,
        fetch_function: FetchFunction | None = None,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._fetch_function = fetch_function
        self._external_client: bool = (
            http_client is not None
            and not callable(http_client)
            and not inspect.isawaitable(http_client)
        )
        self._http_client: (
            aiohttp.ClientSession | Callable[[], Awaitable[aiohttp.ClientSession]] | None
        ) = http_client

    def url_for(self, verb: str) -> str:
        return f"{self._base_url}/v1/{verb}"

    async def _ensure_client(self) -> aiohttp.ClientSession:
        if callable(self._http_client) and not isinstance(
            self._http_client, aiohttp.ClientSession
        ):
            maybe_client = self._http_client()
            if inspect.isawaitable(maybe_client):
                maybe_client = await maybe_client
            self._http_client = maybe_client

        if self._http_client is None:
            if isinstance(self._timeout, aiohttp.ClientTimeout):
                timeout = self._timeout
            elif isinstance(self._timeout, (int, float)):
                timeout = aiohttp.ClientTimeout(total=self._timeout)
            else:
                timeout = None
            self._http_client = aiohttp.ClientSession(timeout=timeout)

        if not isinstance(self._http_client, aiohttp.ClientSession):
            raise ConfigurationError(
                "http_client must be an aiohttp.ClientSession or a factory returning one."
            )

        if self._http_client.closed:
            self._http_client = aiohttp.ClientSession()

        return self._http_client

    async def call(self, verb: str, body: Body) -> Body:
        json_body = json.dumps(body, sort_keys=True)
        url = self.url_for(verb)
        headers = {"Content-Type": "application/json"}

        try:
            if self._fetch_function is not None:
                status_code, response_text = await self._fetch_function(url, json_body, headers)
            else:
                client = await self._ensure_client()
                async with client.post(url, data=json_body, headers=headers) as response:
                    status_code = response.status
                    response_text = await response.text()
        except aiohttp.ConnectionTimeoutError as e:
            raise ServiceConnectionError(f"Request timeout: {e}") from e
        except aiohttp.ClientConnectionError as e:
            raise ServiceConnectionError(f"Connection error: {e}") from e
        except aiohttp.ClientError as e:
            raise ServiceConnectionError(f"HTTP error: {e}") from e

        try:
            document = json.loads(response_text)
        except json.JSONDecodeError as e:
            raise ServiceConnectionError(
                f"Invalid JSON response: {e}", status_code=status_code
            ) from e

        if status_code == HTTP_ERROR_STATUS and isinstance(document, dict) and "error" in document:
            raise error_from_fields(document["error"])
        if status_code != 200 or not isinstance(document, dict):
            raise ServiceConnectionError(
                f"Request failed: {response_text}", status_code=status_code
            )
        return document

    async def close(self) -> None:
        if self._http_client is not None and not self._external_client:
            await self.force_close()

    async def force_close(self) -> None:
        if self._http_client is None or not isinstance(self._http_client, aiohttp.ClientSession):
            return
        await self._http_client.close()
        self._http_client = None

    async def __aenter__(self) -> "AsyncPolicyHTTPClient":
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb) -> None:
        await self.close()


def create_policy_client(
    transport: Literal["stream", "http", "in-process"] = "stream",
    *,
    host: str = "127.0.0.1",
    port: int = 7643,
    service: PolicyDecisionService | None = None,
    **kwargs: Any,
) -> PolicyTransport:
    if transport == "stream":
        return AsyncPolicyStreamClient(host, port, **kwargs)
    if transport == "http":
        return AsyncPolicyHTTPClient(f"http://{host}:{port}", **kwargs)
    if transport == "in-process":
        if service is None:
            raise ConfigurationError("in-process transport needs a service")
        return InProcessClient(service)
    raise ConfigurationError(
        f"Unknown transport {transport!r}. Expected 'stream', 'http' or 'in-process'."
    )


# ---------------------------------------------------------------------------
# Key-holding facade
# ---------------------------------------------------------------------------


class PolicyClient:
    """Administrator, requester or attribute-source identity.

    Everything cleartext stays here; only ciphertexts and trapdoors made
    with ``key`` reach the transport.
    """

    def __init__(
        self,
        transport: PolicyTransport,
        key: ClientKeySet,
        params: PublicParams,
        *,
        rng: RandomSource | None = None,
        codec: DocumentCodec | None = None,
    ) -> None:
        self.transport = transport
        self.key = key
        self.params = params
        self.rng = rng
        self.codec = codec or DocumentCodec()
        self.last_counts: dict[str, int] | None = None

    @property
    def user_id(self) -> str:
        return self.key.user_id

    async def _call(self, verb: str, body: Body) -> Body:
        result = await self.transport.call(verb, body)
        self.last_counts = result.get("counts")
        return result

    async def _decide(self, verb: str, body: Body) -> Decision:
        result = await self._call(verb, body)
        return self.codec.load_decision(result["decision"])

    def _attributes(self, attributes: AttributeSet | None, source: ClientKeySet | None) -> Any:
        if attributes is None:
            return None
        encrypted = attributes_request(attributes, source or self.key, self.params, rng=self.rng)
        return self.codec.dump_attributes(encrypted)

    # -- keys -------------------------------------------------------------

    async def import_key(self, server_key: ServerKeySet, *, replace: bool = False) -> str:
        result = await self._call(
            "import-key", {"key": self.codec.dump_server_key(server_key), "replace": replace}
        )
        return str(result["user_id"])

    async def revoke_user(self, user_id: str) -> bool:
        return bool((await self._call("revoke-user", {"user_id": user_id}))["removed"])

    # -- policies -----------------------------------------------------------

    async def deploy_policy(self, t: SatTuple, condition: TreeNode | None = None) -> str:
        policy = policy_enc(t, condition, self.key, self.params, rng=self.rng)
        result = await self._call(
            "deploy-policy",
            {"admin_id": self.user_id, "policy": self.codec.dump_client_policy(policy)},
        )
        return str(result["policy_id"])

    async def delete_policy(self, policy_id: str) -> bool:
        return bool((await self._call("delete-policy", {"policy_id": policy_id}))["removed"])

    async def request(
        self,
        t: SatTuple,
        attributes: AttributeSet | None = None,
        *,
        attribute_source: ClientKeySet | None = None,
    ) -> Decision:
        request = sat_request(t, self.key, self.params, rng=self.rng)
        return await self._decide(
            "evaluate-request",
            {
                "request": self.codec.dump_request_tuple(request),
                "attributes": self._attributes(attributes, attribute_source),
            },
        )

    # -- rbac ---------------------------------------------------------------

    async def assign_roles(
        self,
        requester_id: str,
        roles: Sequence[str],
        activation_condition: TreeNode | None = None,
    ) -> str:
        assignment = role_assignment_enc(
            roles,
            requester_id,
            self.key,
            self.params,
            activation_condition=activation_condition,
            rng=self.rng,
        )
        result = await self._call(
            "assign-roles",
            {
                "admin_id": self.user_id,
                "assignment": self.codec.dump_client_role_assignment(assignment),
            },
        )
        return str(result["assignment_id"])

    async def assign_permissions(
        self,
        role: str,
        permissions: Sequence[tuple[str, str]],
        grant_condition: TreeNode | None = None,
    ) -> str:
        assignment = permission_assignment_enc(
            role,
            permissions,
            self.key,
            self.params,
            grant_condition=grant_condition,
            rng=self.rng,
        )
        result = await self._call(
            "assign-permissions",
            {
                "admin_id": self.user_id,
                "assignment": self.codec.dump_client_permission_assignment(assignment),
            },
        )
        return str(result["assignment_id"])

    async def deploy_hierarchy(self, graph: Mapping[str, Sequence[str]]) -> int:
        hierarchy = hierarchy_enc(graph, self.key, self.params, rng=self.rng)
        result = await self._call(
            "deploy-hierarchy",
            {"admin_id": self.user_id, "hierarchy": self.codec.dump_client_hierarchy(hierarchy)},
        )
        return int(result["nodes"])

    async def activate_role(
        self,
        role: str,
        attributes: AttributeSet | None = None,
        *,
        attribute_source: ClientKeySet | None = None,
    ) -> Decision:
        request = role_activation_request(
            role,
            self.key,
            self.params,
            attributes=None,
            rng=self.rng,
        )
        doc = self.codec.dump_activation_request(request)
        doc["attributes"] = self._attributes(attributes, attribute_source)
        return await self._decide("activate-role", {"request": doc})

    async def deactivate_role(self, role: str) -> bool:
        request = role_activation_request(role, self.key, self.params, rng=self.rng)
        result = await self._call(
            "deactivate-role", {"request": self.codec.dump_activation_request(request)}
        )
        return bool(result["removed"])

    async def clear_session(self) -> int:
        return int((await self._call("clear-session", {"requester_id": self.user_id}))["cleared"])

    async def access(
        self,
        role: str,
        action: str,
        target: str,
        attributes: AttributeSet | None = None,
        *,
        attribute_source: ClientKeySet | None = None,
    ) -> Decision:
        request = access_request_generate(role, action, target, self.key, self.params, rng=self.rng)
        doc = self.codec.dump_access_request(request)
        doc["attributes"] = self._attributes(attributes, attribute_source)
        return await self._decide("access-request", {"request": doc})

    # -- constraints ----------------------------------------------------------

    async def deploy_constraint(self, spec: ConstraintSpec) -> str:
        constraint = constraint_enc(spec, self.key, self.params, rng=self.rng)
        result = await self._call(
            "deploy-constraint",
            {
                "admin_id": self.user_id,
                "constraint": self.codec.dump_client_constraint(constraint),
            },
        )
        return str(result["constraint_id"])

    async def delete_constraint(self, constraint_id: str) -> bool:
        result = await self._call("delete-constraint", {"constraint_id": constraint_id})
        return bool(result["removed"])

    async def egrant_request(
        self,
        role: str,
        action: str,
        objtype: str,
        instance: str,
        domains: Sequence[str] = (),
        context: AttributeSet | None = None,
    ) -> Decision:
        request = request_generate(
            role, action, objtype, instance, domains, context, self.key, self.params, rng=self.rng
        )
        return await self._decide(
            "egrant-request", {"request": self.codec.dump_egrant_request(request)}
        )

    async def dump_history(self, requester_id: str | None = None) -> int:
        """Number of recorded grants; the service only answers in test mode."""
        result = await self._call("dump-history", {"requester_id": requester_id or self.user_id})
        return len(result["records"])
