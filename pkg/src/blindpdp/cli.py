"""blindpdp command line.

Usage: blindpdp {tkma,admin,requester,store,serve} ...

Admin and requester commands run against ``--store`` in process, or against
a running service with ``--connect host:port``. Exit status is 0 for ok or
permit, 1 for deny and 2 for errors.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import random
import sys
from contextlib import asynccontextmanager
from typing import Any, AsyncIterator, Awaitable, Callable, Sequence

from rich.console import Console
from rich.markup import escape
from rich.table import Table

from .client import InProcessClient, PolicyClient, PolicyTransport, create_policy_client
from .codec import DocumentCodec
from .config import PROFILE_ENV, STORE_ENV, ServiceConfig, parse_listen
from .constraint_engine import ConstraintSpec, chinese_wall_constraint, hbdsod_constraint
from .dsl import format_policy, parse_condition, parse_policy
from .errors import ConfigurationError, Error
from .pdp import PolicyDecisionPoint
from .policy import ACTION, ROLE, AttributeSet, Decision, SatTuple
from .sde import PROFILE_NAMES, ClientKeySet, PublicParams
from .service import PolicyDecisionService, serve
from .store import COLLECTIONS, HIERARCHY, HISTORY, SESSIONS, FileStore
from .tkma import (
    issue_rng,
    load_client_key,
    load_server_key,
    load_tkma,
    save_client_key,
    save_server_key,
    save_tkma,
    tkma_init,
    tkma_issue,
    tkma_revoke,
)
from .wire import error_fields

EXIT_OK = 0
EXIT_DENY = 1
EXIT_ERROR = 2

console = Console()
err_console = Console(stderr=True)

Runner = Callable[[argparse.Namespace], Awaitable[int]]


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _emit(
    args: argparse.Namespace, document: dict[str, Any], text: str, *, markup: bool = False
) -> None:
    if args.json:
        console.print_json(json.dumps(document, sort_keys=True))
    else:
        console.print(text if markup else escape(text))


def _emit_decision(args: argparse.Namespace, decision: Decision) -> int:
    document = {"permit": decision.permit, "reason": decision.reason}
    if decision.permit:
        _emit(args, document, "[green]permit[/green]", markup=True)
        return EXIT_OK
    _emit(args, document, f"[red]deny[/red] ({escape(decision.reason)})", markup=True)
    return EXIT_DENY


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _rng(args: argparse.Namespace) -> random.Random | None:
    return random.Random(args.seed) if getattr(args, "seed", None) is not None else None


def _attributes(items: Sequence[str] | None) -> AttributeSet | None:
    return AttributeSet.parse(items) if items else None


def _check_profile(args: argparse.Namespace, params: PublicParams, source: str) -> None:
    profile = getattr(args, "profile", None)
    if profile is None:
        return
    if profile not in PROFILE_NAMES:
        raise ConfigurationError(
            f"Unknown profile {profile!r}. Expected one of {list(PROFILE_NAMES)}."
        )
    if params.profile != profile:
        raise ConfigurationError(f"{source} does not hold a {profile} group")


@asynccontextmanager
async def _transport(
    args: argparse.Namespace, *, create_with: PublicParams | None = None
) -> AsyncIterator[tuple[PolicyTransport, PublicParams | None]]:
    """A transport plus the store's params when running in process."""
    if args.connect:
        host, port = parse_listen(args.connect)
        client = create_policy_client(args.transport, host=host, port=port)
        params = None
    else:
        if not args.store:
            raise ConfigurationError(f"Pass --store, set {STORE_ENV}, or use --connect")
        if create_with is not None:
            pdp = PolicyDecisionPoint.create(args.store, create_with)
        else:
            pdp = PolicyDecisionPoint.open(args.store)
        _check_profile(args, pdp.params, f"Store {args.store}")
        client = InProcessClient(PolicyDecisionService(pdp, test_mode=True))
        params = pdp.params
    try:
        yield client, params
    finally:
        await client.close()


@asynccontextmanager
async def _policy_client(args: argparse.Namespace) -> AsyncIterator[PolicyClient]:
    key, key_params = load_client_key(args.key)
    _check_profile(args, key_params, args.key)
    async with _transport(args) as (transport, store_params):
        if store_params is not None and store_params != key_params:
            raise ConfigurationError(f"{args.key} was issued for a different group")
        yield PolicyClient(transport, key, key_params, rng=_rng(args))


def _attribute_source(args: argparse.Namespace) -> ClientKeySet | None:
    if not getattr(args, "attr_key", None):
        return None
    key, _ = load_client_key(args.attr_key)
    return key


# ---------------------------------------------------------------------------
# tkma
# ---------------------------------------------------------------------------


def _add_tkma_parser(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("tkma", help="Offline key authority.")
    sub = p.add_subparsers(dest="tkma_command", required=True)

    init = sub.add_parser("init", help="Generate group parameters and the master key.")
    init.add_argument("--tkma", required=True, help="TKMA state file to write.")
    init.add_argument("--profile", choices=PROFILE_NAMES, default=None)
    init.add_argument("--bits", type=int, default=None, help="Modulus size when no profile.")
    init.add_argument("--subgroup-bits", type=int, default=None)
    init.add_argument("--seed", type=int, default=None, help="Deterministic setup (tests only).")
    init.add_argument("--json", action="store_true")
    init.set_defaults(handler=_run_tkma_init)

    issue = sub.add_parser("issue", help="Issue a client/server key pair.")
    issue.add_argument("--tkma", required=True)
    issue.add_argument("user_id")
    issue.add_argument("--client-out", required=True)
    issue.add_argument("--server-out", required=True)
    issue.add_argument("--seed", type=int, default=None)
    issue.add_argument("--json", action="store_true")
    issue.set_defaults(handler=_run_tkma_issue)

    revoke = sub.add_parser("revoke", help="Allow a user to be issued again.")
    revoke.add_argument("--tkma", required=True)
    revoke.add_argument("user_id")
    revoke.add_argument("--json", action="store_true")
    revoke.set_defaults(handler=_run_tkma_revoke)


async def _run_tkma_init(args: argparse.Namespace) -> int:
    if args.profile is None and args.bits is None:
        args.profile = "prod"
    state = tkma_init(
        args.bits, args.seed, profile=args.profile, subgroup_bits=args.subgroup_bits
    )
    save_tkma(state, args.tkma)
    params = state.params
    _emit(
        args,
        {"p_bits": params.p.bit_length(), "q_bits": params.q.bit_length(), "hash": params.hash_id},
        f"wrote {args.tkma}: {params.p.bit_length()}-bit p, "
        f"{params.q.bit_length()}-bit q, hash {params.hash_id}",
    )
    return EXIT_OK


async def _run_tkma_issue(args: argparse.Namespace) -> int:
    state = load_tkma(args.tkma)
    rng = issue_rng(args.seed, args.user_id) if args.seed is not None else None
    client_key, server_key = tkma_issue(state, args.user_id, rng=rng)
    save_client_key(client_key, state.params, args.client_out)
    save_server_key(server_key, state.params, args.server_out)
    save_tkma(state, args.tkma)
    _emit(
        args,
        {"user_id": args.user_id, "client": args.client_out, "server": args.server_out},
        f"issued {args.user_id}: client key {args.client_out}, server key {args.server_out}",
    )
    return EXIT_OK


async def _run_tkma_revoke(args: argparse.Namespace) -> int:
    state = load_tkma(args.tkma)
    removed = tkma_revoke(state, args.user_id)
    save_tkma(state, args.tkma)
    _emit(args, {"removed": removed}, f"{args.user_id}: {'revoked' if removed else 'not issued'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# admin
# ---------------------------------------------------------------------------


def _common(keyed: bool = True) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", default=os.environ.get(STORE_ENV), help="Store directory.")
    common.add_argument("--connect", default=None, help="host:port of a running service.")
    common.add_argument("--transport", choices=("stream", "http"), default="stream")
    common.add_argument("--seed", type=int, default=None, help="Deterministic encryption (tests).")
    common.add_argument("--json", action="store_true", help="Machine-readable output.")
    common.add_argument(
        "--profile",
        choices=PROFILE_NAMES,
        default=os.environ.get(PROFILE_ENV),
        help="Refuse keys and stores generated for another profile.",
    )
    if keyed:
        common.add_argument("--key", required=True, help="Client key file.")
    return common


def _add_admin_parser(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("admin", help="Deploy and manage encrypted policies.")
    sub = p.add_subparsers(dest="admin_command", required=True)
    keyed, unkeyed = _common(True), _common(False)

    imp = sub.add_parser("import-key", parents=[unkeyed], help="Import a server key.")
    imp.add_argument("server_key")
    imp.add_argument("--replace", action="store_true")
    imp.set_defaults(handler=_run_import_key)

    dp = sub.add_parser("deploy-policy", parents=[keyed], help="Deploy a policy.")
    dp.add_argument("policy", help="e.g. 'if Location=Ward then can <Doctor, read, record>'")
    dp.set_defaults(handler=_run_deploy_policy)

    dl = sub.add_parser("delete-policy", parents=[keyed])
    dl.add_argument("policy_id")
    dl.set_defaults(handler=_run_delete_policy)

    ar = sub.add_parser("assign-roles", parents=[keyed], help="Assign roles to a requester.")
    ar.add_argument("requester_id")
    ar.add_argument("roles", nargs="+")
    ar.add_argument("--when", default=None, help="Activation condition.")
    ar.set_defaults(handler=_run_assign_roles)

    ap = sub.add_parser("assign-permissions", parents=[keyed], help="Assign permissions to a role.")
    ap.add_argument("role")
    ap.add_argument("permissions", nargs="+", help="ACTION:TARGET pairs.")
    ap.add_argument("--when", default=None, help="Grant condition.")
    ap.set_defaults(handler=_run_assign_permissions)

    dh = sub.add_parser("deploy-hierarchy", parents=[keyed], help="Deploy the role hierarchy.")
    dh.add_argument("edges", nargs="+", help="DERIVED:BASE[,BASE...] entries.")
    dh.set_defaults(handler=_run_deploy_hierarchy)

    dc = sub.add_parser("deploy-constraint", parents=[keyed], help="Deploy a DSoD constraint.")
    dc.add_argument("kind", choices=("hbdsod", "cw"))
    dc.add_argument("--objtype", required=True)
    dc.add_argument("--members", default=None, help="Comma-separated conflicting members.")
    dc.add_argument("--context", action="append", default=[], help="name=value, repeatable.")
    dc.add_argument("--max-actions", type=int, default=1)
    dc.add_argument("--deny-repeat", action="store_true")
    dc.add_argument("--no-bind-instance", action="store_true")
    dc.add_argument("--group-label", choices=(ACTION, ROLE), default=ACTION)
    dc.add_argument("--branch", action="append", default=[], help="Domain path A/B, repeatable.")
    dc.add_argument("--by-instance", action="store_true")
    dc.set_defaults(handler=_run_deploy_constraint)

    dd = sub.add_parser("delete-constraint", parents=[keyed])
    dd.add_argument("constraint_id")
    dd.set_defaults(handler=_run_delete_constraint)

    rv = sub.add_parser("revoke-user", parents=[unkeyed], help="Remove a user's server key.")
    rv.add_argument("user_id")
    rv.set_defaults(handler=_run_revoke_user)


async def _run_import_key(args: argparse.Namespace) -> int:
    server_key, params = load_server_key(args.server_key)
    _check_profile(args, params, args.server_key)
    async with _transport(args, create_with=params) as (transport, _):
        result = await transport.call(
            "import-key",
            {"key": DocumentCodec().dump_server_key(server_key), "replace": args.replace},
        )
    user_id = str(result["user_id"])
    _emit(args, {"user_id": user_id}, f"imported server key for {user_id}")
    return EXIT_OK


async def _run_deploy_policy(args: argparse.Namespace) -> int:
    spec = parse_policy(args.policy)
    async with _policy_client(args) as client:
        policy_id = await client.deploy_policy(spec.tuple, spec.condition)
    _emit(args, {"policy_id": policy_id}, f"{policy_id}: {format_policy(spec)}")
    return EXIT_OK


async def _run_delete_policy(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        removed = await client.delete_policy(args.policy_id)
    _emit(args, {"removed": removed}, f"{args.policy_id}: {'deleted' if removed else 'not found'}")
    return EXIT_OK


async def _run_assign_roles(args: argparse.Namespace) -> int:
    condition = parse_condition(args.when) if args.when else None
    async with _policy_client(args) as client:
        assignment_id = await client.assign_roles(args.requester_id, args.roles, condition)
    _emit(args, {"assignment_id": assignment_id}, f"{assignment_id}: {args.requester_id}")
    return EXIT_OK


def _permission(text: str) -> tuple[str, str]:
    action, sep, target = text.partition(":")
    if not sep or not action or not target:
        raise ConfigurationError(f"Permissions are ACTION:TARGET, got {text!r}")
    return action, target


async def _run_assign_permissions(args: argparse.Namespace) -> int:
    permissions = [_permission(p) for p in args.permissions]
    condition = parse_condition(args.when) if args.when else None
    async with _policy_client(args) as client:
        assignment_id = await client.assign_permissions(args.role, permissions, condition)
    _emit(args, {"assignment_id": assignment_id}, f"{assignment_id}: {args.role}")
    return EXIT_OK


def _hierarchy(entries: Sequence[str]) -> dict[str, list[str]]:
    graph: dict[str, list[str]] = {}
    for entry in entries:
        derived, sep, bases = entry.partition(":")
        if not sep or not derived:
            raise ConfigurationError(f"Hierarchy entries are DERIVED:BASE[,BASE], got {entry!r}")
        graph.setdefault(derived, []).extend(b for b in bases.split(",") if b)
    return graph


async def _run_deploy_hierarchy(args: argparse.Namespace) -> int:
    graph = _hierarchy(args.edges)
    async with _policy_client(args) as client:
        nodes = await client.deploy_hierarchy(graph)
    _emit(args, {"nodes": nodes}, f"deployed hierarchy with {nodes} roles")
    return EXIT_OK


def _constraint_spec(args: argparse.Namespace) -> ConstraintSpec:
    if args.kind == "hbdsod":
        if not args.members:
            raise ConfigurationError("hbdsod constraints need --members")
        return hbdsod_constraint(
            [m for m in args.members.split(",") if m],
            args.objtype,
            args.context,
            max_actions=args.max_actions,
            deny_repeat=args.deny_repeat,
            bind_instance=not args.no_bind_instance,
            group_label=args.group_label,
        )
    return chinese_wall_constraint(
        args.objtype,
        [branch.split("/") for branch in args.branch],
        by_instance=args.by_instance,
    )


async def _run_deploy_constraint(args: argparse.Namespace) -> int:
    spec = _constraint_spec(args)
    async with _policy_client(args) as client:
        constraint_id = await client.deploy_constraint(spec)
    _emit(args, {"constraint_id": constraint_id}, f"{constraint_id}: {args.kind}")
    return EXIT_OK


async def _run_delete_constraint(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        removed = await client.delete_constraint(args.constraint_id)
    _emit(
        args, {"removed": removed}, f"{args.constraint_id}: {'deleted' if removed else 'not found'}"
    )
    return EXIT_OK


async def _run_revoke_user(args: argparse.Namespace) -> int:
    async with _transport(args) as (transport, _):
        result = await transport.call("revoke-user", {"user_id": args.user_id})
    removed = bool(result["removed"])
    _emit(args, {"removed": removed}, f"{args.user_id}: {'revoked' if removed else 'unknown'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# requester
# ---------------------------------------------------------------------------


def _add_requester_parser(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("requester", help="Send encrypted requests.")
    sub = p.add_subparsers(dest="requester_command", required=True)
    keyed = _common(True)

    attrs = argparse.ArgumentParser(add_help=False)
    attrs.add_argument("--attr", action="append", default=[], help="name=value or name=v#bits.")
    attrs.add_argument("--attr-key", default=None, help="Client key of the attribute source.")

    rq = sub.add_parser("request", parents=[keyed, attrs], help="Evaluate <S, A, T>.")
    rq.add_argument("subject")
    rq.add_argument("action")
    rq.add_argument("target")
    rq.set_defaults(handler=_run_request)

    act = sub.add_parser("activate-role", parents=[keyed, attrs])
    act.add_argument("role")
    act.set_defaults(handler=_run_activate_role)

    deact = sub.add_parser("deactivate-role", parents=[keyed])
    deact.add_argument("role")
    deact.set_defaults(handler=_run_deactivate_role)

    clear = sub.add_parser("clear-session", parents=[keyed])
    clear.set_defaults(handler=_run_clear_session)

    acc = sub.add_parser("access", parents=[keyed, attrs], help="Role-based access request.")
    acc.add_argument("role")
    acc.add_argument("action")
    acc.add_argument("target")
    acc.set_defaults(handler=_run_access)

    eg = sub.add_parser("egrant-request", parents=[keyed], help="Constrained access request.")
    eg.add_argument("--role", required=True)
    eg.add_argument("--action", required=True)
    eg.add_argument("--objtype", required=True)
    eg.add_argument("--instance", required=True)
    eg.add_argument("--domain", action="append", default=[], help="Domain path, outermost first.")
    eg.add_argument("--context", action="append", default=[], help="name=value, repeatable.")
    eg.set_defaults(handler=_run_egrant_request)


async def _run_request(args: argparse.Namespace) -> int:
    t = SatTuple(args.subject, args.action, args.target)
    async with _policy_client(args) as client:
        decision = await client.request(
            t, _attributes(args.attr), attribute_source=_attribute_source(args)
        )
    return _emit_decision(args, decision)


async def _run_activate_role(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        decision = await client.activate_role(
            args.role, _attributes(args.attr), attribute_source=_attribute_source(args)
        )
    return _emit_decision(args, decision)


async def _run_deactivate_role(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        removed = await client.deactivate_role(args.role)
    _emit(args, {"removed": removed}, f"{args.role}: {'deactivated' if removed else 'not active'}")
    return EXIT_OK


async def _run_clear_session(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        cleared = await client.clear_session()
    _emit(args, {"cleared": cleared}, f"cleared {cleared} active roles")
    return EXIT_OK


async def _run_access(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        decision = await client.access(
            args.role,
            args.action,
            args.target,
            _attributes(args.attr),
            attribute_source=_attribute_source(args),
        )
    return _emit_decision(args, decision)


async def _run_egrant_request(args: argparse.Namespace) -> int:
    async with _policy_client(args) as client:
        decision = await client.egrant_request(
            args.role,
            args.action,
            args.objtype,
            args.instance,
            args.domain,
            _attributes(args.context),
        )
    return _emit_decision(args, decision)


# ---------------------------------------------------------------------------
# store / serve
# ---------------------------------------------------------------------------


def _add_store_parser(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("store", help="Inspect a store directory.")
    sub = p.add_subparsers(dest="store_command", required=True)
    dump = sub.add_parser("dump", help="Show the stored documents.")
    dump.add_argument("--store", default=os.environ.get(STORE_ENV), required=False)
    dump.add_argument("--collection", choices=COLLECTIONS, default=None)
    dump.add_argument("--json", action="store_true")
    dump.set_defaults(handler=_run_store_dump)


def _count(collection: str, items: Any) -> int:
    if items is None:
        return 0
    if collection == HIERARCHY:
        return len(items["nodes"])
    if isinstance(items, list):
        return len(items)
    if collection in (SESSIONS, HISTORY):
        return sum(len(v) for v in items.values())
    return 1


async def _run_store_dump(args: argparse.Namespace) -> int:
    if not args.store:
        raise ConfigurationError(f"Pass --store or set {STORE_ENV}")
    documents = FileStore(args.store).dump()
    if args.collection is not None:
        documents = {args.collection: documents.get(args.collection)}
    if args.json:
        console.print_json(json.dumps(documents, sort_keys=True))
        return EXIT_OK
    table = Table(title=escape(str(args.store)))
    table.add_column("collection")
    table.add_column("format")
    table.add_column("items", justify="right")
    for name, doc in documents.items():
        if doc is None:
            table.add_row(name, "-", "0")
        else:
            table.add_row(name, escape(str(doc.get("format"))), str(_count(name, doc.get("items"))))
    console.print(table)
    return EXIT_OK


def _add_serve_parser(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("serve", help="Run the decision service.")
    p.add_argument("--store", default=None)
    p.add_argument("--profile", choices=PROFILE_NAMES, default=None)
    p.add_argument("--transport", choices=("stream", "http"), default=None)
    p.add_argument("--listen", default=None, help="host:port")
    p.add_argument("--test-mode", action="store_true", default=None)
    p.set_defaults(handler=_run_serve)


async def _run_serve(args: argparse.Namespace) -> int:
    overrides: dict[str, Any] = {
        "store_path": args.store,
        "profile": args.profile,
        "transport": args.transport,
        "test_mode": args.test_mode,
    }
    if args.listen:
        overrides["host"], overrides["port"] = parse_listen(args.listen)
    config = ServiceConfig.from_env(os.environ, **overrides)

    def ready(port: int) -> None:
        err_console.print(f"listening on {config.host}:{port} ({config.transport})")

    await serve(config, on_ready=ready)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindpdp",
        description="Encrypted policy decision point.",
    )
    subparsers = parser.add_subparsers(dest="command")
    _add_tkma_parser(subparsers)
    _add_admin_parser(subparsers)
    _add_requester_parser(subparsers)
    _add_store_parser(subparsers)
    _add_serve_parser(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler: Runner | None = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        return EXIT_ERROR
    try:
        return asyncio.run(handler(args))
    except KeyboardInterrupt:
        return EXIT_OK
    except Error as e:
        if getattr(args, "json", False):
            console.print_json(json.dumps({"error": error_fields(e)}, sort_keys=True))
        else:
            err_console.print(
                f"[red]error[/red] {e.code}: {escape(str(e))}", highlight=False, soft_wrap=True
            )
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
