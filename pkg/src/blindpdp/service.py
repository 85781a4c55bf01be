"""Request-handling service exposing the decision point's verbs.

The same JSON bodies are accepted over the stream transport (see
:mod:`blindpdp.wire`) and over HTTP as ``POST /v1/{verb}``. Engine work
runs in worker threads so one slow request does not stall the loop.
"""

from __future__ import annotations

import asyncio
import contextlib
from typing import Any, Awaitable, Callable

from aiohttp import web

from . import _telemetry, instrumentation
from .codec import DocumentCodec
from .config import ServiceConfig
from .errors import (
    ConfigurationError,
    Error,
    ProtocolError,
    ServiceConnectionError,
    StoreFormatError,
)
from .pdp import PolicyDecisionPoint
from .policy import Decision
from .sde import HASH_IDENTITY
from .wire import (
    MAX_MESSAGE_BYTES,
    REQUEST_MSG,
    TERMINATE_MSG,
    _BufferedReader,
    build_error,
    build_response,
    error_fields,
    parse_json_body,
    parse_request,
)

Body = dict[str, Any]
Handler = Callable[[Body], Body]

HTTP_ERROR_STATUS = 422

VERBS = (
    "params",
    "import-key",
    "revoke-user",
    "deploy-policy",
    "delete-policy",
    "evaluate-request",
    "assign-roles",
    "assign-permissions",
    "deploy-hierarchy",
    "activate-role",
    "deactivate-role",
    "clear-session",
    "access-request",
    "deploy-constraint",
    "delete-constraint",
    "egrant-request",
    "dump-history",
)
TEST_ONLY_VERBS = frozenset({"dump-history"})


def _field(body: Body, name: str, verb: str) -> Any:
    try:
        return body[name]
    except KeyError:
        raise ProtocolError(f"missing field {name!r}", verb) from None


def _text(body: Body, name: str, verb: str) -> str:
    value = _field(body, name, verb)
    if not isinstance(value, str) or not value:
        raise ProtocolError(f"field {name!r} must be a non-empty string", verb)
    return value


class PolicyDecisionService:
    def __init__(
        self,
        pdp: PolicyDecisionPoint,
        *,
        test_mode: bool = False,
        codec: DocumentCodec | None = None,
    ) -> None:
        self.pdp = pdp
        self.test_mode = test_mode
        self.codec = codec or DocumentCodec()
        self._handlers: dict[str, Handler] = {
            "params": self._params,
            "import-key": self._import_key,
            "revoke-user": self._revoke_user,
            "deploy-policy": self._deploy_policy,
            "delete-policy": self._delete_policy,
            "evaluate-request": self._evaluate_request,
            "assign-roles": self._assign_roles,
            "assign-permissions": self._assign_permissions,
            "deploy-hierarchy": self._deploy_hierarchy,
            "activate-role": self._activate_role,
            "deactivate-role": self._deactivate_role,
            "clear-session": self._clear_session,
            "access-request": self._access_request,
            "deploy-constraint": self._deploy_constraint,
            "delete-constraint": self._delete_constraint,
            "egrant-request": self._egrant_request,
            "dump-history": self._dump_history,
        }

    # ------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------

    async def handle(self, verb: str, body: Body) -> Body:
        handler = self._handlers.get(verb)
        if handler is None or (verb in TEST_ONLY_VERBS and not self.test_mode):
            raise ProtocolError("unknown verb", verb)

        def run() -> Body:
            with instrumentation.count_operations() as counter:
                try:
                    result = handler(body)
                except StoreFormatError as e:
                    raise ProtocolError(str(e), verb) from e
                except (KeyError, TypeError, ValueError) as e:
                    raise ProtocolError(f"malformed payload: {e!r}", verb) from e
            if self.test_mode:
                result["counts"] = counter.snapshot()
            return result

        with _telemetry.span("blindpdp {verb}", verb=verb) as span:
            result = await asyncio.to_thread(run)
            decision = result.get("decision")
            if span is not None and decision is not None:
                span.set_attribute("permit", decision["permit"])
        return result

    def _decision(self, decision: Decision) -> Body:
        if not decision.permit:
            _telemetry.log("debug", "request denied", reason=decision.reason)
        return {"decision": self.codec.dump_decision(decision)}

    # ------------------------------------------------------------------
    # Verbs
    # ------------------------------------------------------------------

    def _params(self, body: Body) -> Body:
        return {"params": self.codec.dump_params(self.pdp.params)}

    def _import_key(self, body: Body) -> Body:
        key = self.codec.load_server_key(_field(body, "key", "import-key"))
        self.pdp.import_key(key, replace=bool(body.get("replace", False)))
        return {"user_id": key.user_id}

    def _revoke_user(self, body: Body) -> Body:
        return {"removed": self.pdp.revoke_user(_text(body, "user_id", "revoke-user"))}

    def _deploy_policy(self, body: Body) -> Body:
        policy = self.codec.load_client_policy(_field(body, "policy", "deploy-policy"))
        deployed = self.pdp.deploy_policy(_text(body, "admin_id", "deploy-policy"), policy)
        return {"policy_id": deployed.policy_id}

    def _delete_policy(self, body: Body) -> Body:
        return {"removed": self.pdp.delete_policy(_text(body, "policy_id", "delete-policy"))}

    def _evaluate_request(self, body: Body) -> Body:
        request = self.codec.load_request_tuple(_field(body, "request", "evaluate-request"))
        attributes = self.codec.load_attributes(body.get("attributes"))
        return self._decision(self.pdp.evaluate_request(request, attributes))

    def _assign_roles(self, body: Body) -> Body:
        assignment = self.codec.load_client_role_assignment(
            _field(body, "assignment", "assign-roles")
        )
        deployed = self.pdp.assign_roles(_text(body, "admin_id", "assign-roles"), assignment)
        return {"assignment_id": deployed.assignment_id}

    def _assign_permissions(self, body: Body) -> Body:
        assignment = self.codec.load_client_permission_assignment(
            _field(body, "assignment", "assign-permissions")
        )
        deployed = self.pdp.assign_permissions(
            _text(body, "admin_id", "assign-permissions"), assignment
        )
        return {"assignment_id": deployed.assignment_id}

    def _deploy_hierarchy(self, body: Body) -> Body:
        hierarchy = self.codec.load_client_hierarchy(
            _field(body, "hierarchy", "deploy-hierarchy")
        )
        deployed = self.pdp.deploy_hierarchy(
            _text(body, "admin_id", "deploy-hierarchy"), hierarchy
        )
        return {"nodes": len(deployed.nodes), "edges": len(deployed.edges)}

    def _activate_role(self, body: Body) -> Body:
        request = self.codec.load_activation_request(_field(body, "request", "activate-role"))
        return self._decision(self.pdp.activate_role(request))

    def _deactivate_role(self, body: Body) -> Body:
        request = self.codec.load_activation_request(_field(body, "request", "deactivate-role"))
        return {"removed": self.pdp.deactivate_role(request)}

    def _clear_session(self, body: Body) -> Body:
        return {"cleared": self.pdp.clear_session(_text(body, "requester_id", "clear-session"))}

    def _access_request(self, body: Body) -> Body:
        request = self.codec.load_access_request(_field(body, "request", "access-request"))
        return self._decision(self.pdp.access_request(request))

    def _deploy_constraint(self, body: Body) -> Body:
        constraint = self.codec.load_client_constraint(
            _field(body, "constraint", "deploy-constraint")
        )
        deployed = self.pdp.deploy_constraint(
            _text(body, "admin_id", "deploy-constraint"), constraint
        )
        return {"constraint_id": deployed.constraint_id}

    def _delete_constraint(self, body: Body) -> Body:
        return {
            "removed": self.pdp.delete_constraint(
                _text(body, "constraint_id", "delete-constraint")
            )
        }

    def _egrant_request(self, body: Body) -> Body:
        request = self.codec.load_egrant_request(_field(body, "request", "egrant-request"))
        return self._decision(self.pdp.egrant_request(request))

    def _dump_history(self, body: Body) -> Body:
        records = self.pdp.dump_history(_text(body, "requester_id", "dump-history"))
        return {"records": [self.codec.dump_record(r) for r in records]}

    # ------------------------------------------------------------------
    # Transports
    # ------------------------------------------------------------------

    async def handle_stream(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        """Serve one stream connection until it terminates or breaks."""

        async def recv() -> bytes:
            return await reader.read(65536)

        frames = _BufferedReader(recv)
        try:
            while True:
                try:
                    msg_type, payload = await frames.read_message()
                except ServiceConnectionError:
                    break
                except ProtocolError as e:
                    writer.write(build_error(e))
                    await writer.drain()
                    break
                if msg_type == TERMINATE_MSG:
                    break
                if msg_type != REQUEST_MSG:
                    writer.write(build_error(ProtocolError(f"unexpected message {chr(msg_type)!r}")))
                    await writer.drain()
                    break
                writer.write(await self._respond(payload))
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            writer.close()
            with contextlib.suppress(ConnectionError):
                await writer.wait_closed()

    async def _respond(self, payload: bytes) -> bytes:
        try:
            verb, body = parse_request(payload)
            return build_response(await self.handle(verb, body))
        except Error as e:
            return build_error(e)
        except Exception as e:
            _telemetry.log("error", "unhandled service error", error=repr(e))
            return build_error(Error("internal service error"))

    def http_app(self) -> web.Application:
        app = web.Application(client_max_size=MAX_MESSAGE_BYTES)
        app.router.add_post("/v1/{verb}", self._http_handler)
        return app

    async def _http_handler(self, request: web.Request) -> web.Response:
        verb = request.match_info["verb"]
        try:
            body = parse_json_body(await request.read(), verb)
            result = await self.handle(verb, body)
        except Error as e:
            return web.json_response({"error": error_fields(e)}, status=HTTP_ERROR_STATUS)
        except Exception as e:
            _telemetry.log("error", "unhandled service error", error=repr(e))
            return web.json_response(
                {"error": error_fields(Error("internal service error"))}, status=500
            )
        return web.json_response(result)


# ---------------------------------------------------------------------------
# Servers
# ---------------------------------------------------------------------------


async def start_stream_server(
    service: PolicyDecisionService, host: str, port: int
) -> asyncio.AbstractServer:
    return await asyncio.start_server(service.handle_stream, host, port)


async def start_http_server(
    service: PolicyDecisionService, host: str, port: int
) -> web.AppRunner:
    runner = web.AppRunner(service.http_app())
    await runner.setup()
    site = web.TCPSite(runner, host, port)
    await site.start()
    return runner


def bound_port(server: asyncio.AbstractServer | web.AppRunner) -> int:
    """The port actually bound, for servers started on port 0."""
    if isinstance(server, web.AppRunner):
        return int(server.addresses[0][1])
    return int(server.sockets[0].getsockname()[1])  # type: ignore[attr-defined]


async def serve(
    config: ServiceConfig,
    *,
    on_ready: Callable[[int], Awaitable[None] | None] | None = None,
) -> None:
    """Run the service until cancelled."""
    pdp = PolicyDecisionPoint.open(config.store_path)
    toy_store = pdp.params.hash_id == HASH_IDENTITY
    if toy_store != (config.profile == "toy"):
        raise ConfigurationError(
            f"Store {config.store_path} does not hold a {config.profile} group"
        )
    service = PolicyDecisionService(pdp, test_mode=config.test_mode)
    server: asyncio.AbstractServer | web.AppRunner
    if config.transport == "http":
        server = await start_http_server(service, config.host, config.port)
    else:
        server = await start_stream_server(service, config.host, config.port)
    port = bound_port(server)
    _telemetry.log(
        "info",
        "service listening",
        transport=config.transport,
        host=config.host,
        port=port,
        users=len(pdp.keystore),
    )
    try:
        if on_ready is not None:
            maybe = on_ready(port)
            if maybe is not None:
                await maybe
        await asyncio.Event().wait()
    finally:
        if isinstance(server, web.AppRunner):
            await server.cleanup()
        else:
            server.close()
            await server.wait_closed()
