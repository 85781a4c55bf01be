"""Primitive operation counts for the three engines.

Counts instead of timings: every figure is the number of client_enc,
server_reenc, client_td, server_td and match calls one operation costs.

    uv run python experiments/op_counts.py
    uv run python experiments/op_counts.py --bits 1024 --subgroup-bits 160
"""

from __future__ import annotations

import argparse
import random
from typing import Callable

from rich.console import Console
from rich.table import Table

from blindpdp import instrumentation
from blindpdp.constraint_engine import (
    ConstraintEngine,
    chinese_wall_constraint,
    constraint_enc,
    hbdsod_constraint,
    request_generate,
)
from blindpdp.instrumentation import OPERATIONS
from blindpdp.policy import AttributeSet, NumericComparison, SatTuple, leaf
from blindpdp.policy_engine import PolicyEngine, attributes_request, policy_enc, sat_request
from blindpdp.rbac_engine import (
    RBACEngine,
    access_request_generate,
    hierarchy_enc,
    permission_assignment_enc,
    role_activation_request,
    role_assignment_enc,
)
from blindpdp.sde import ClientKeySet, KeyStore, init, keygen
from blindpdp.tkma import issue_rng

console = Console()


class World:
    def __init__(self, bits: int, subgroup_bits: int, seed: int) -> None:
        self.params, msk = init(bits, seed, subgroup_bits=subgroup_bits)
        self.rng = random.Random(seed)
        self.keys: dict[str, ClientKeySet] = {}
        servers = []
        for user in ("admin", "alice"):
            client, server = keygen(msk, self.params, user, rng=issue_rng(seed, user))
            self.keys[user] = client
            servers.append(server)
        self.keystore = KeyStore(servers)


def _counts(fn: Callable[[], object]) -> list[str]:
    with instrumentation.count_operations() as counter:
        fn()
    return [str(counter[op]) for op in OPERATIONS]


def _table(title: str, first: str) -> Table:
    table = Table(title=title)
    table.add_column(first, justify="right")
    for op in OPERATIONS:
        table.add_column(op, justify="right")
    return table


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


def numeric_condition_size(world: World) -> Table:
    """Deploying ``AT < 2^s - 1`` and sending ``AT`` as s bits."""
    table = _table("numeric condition AT<2^s-1 (deploy / attributes)", "s")
    admin = world.keys["admin"]
    for bits in (4, 8, 16, 32):
        cond = leaf(NumericComparison("AT", "<", (1 << bits) - 1, bits))
        t = SatTuple("Doctor", "read", "chart")
        deploy = _counts(lambda: policy_enc(t, cond, admin, world.params, rng=world.rng))
        attrs = AttributeSet.parse([f"AT={bits}#{bits}"])
        request = _counts(
            lambda: attributes_request(attrs, world.keys["alice"], world.params, rng=world.rng)
        )
        table.add_row(str(bits), *(f"{d} / {r}" for d, r in zip(deploy, request)))
    return table


def policy_store_size(world: World) -> Table:
    """One request against N stored policies, none matching the subject."""
    table = _table("SAT search over N policies", "N")
    for n in (10, 100, 1000):
        engine = PolicyEngine(world.params, world.keystore)
        for i in range(n):
            client = policy_enc(
                SatTuple("Doctor", "read", f"chart-{i}"), None, world.keys["admin"], world.params,
                rng=world.rng,
            )
            engine.deploy_policy("admin", client)
        request = sat_request(SatTuple("Nurse", "read", "chart-0"), world.keys["alice"], world.params)
        table.add_row(str(n), *_counts(lambda: engine.evaluate_request(request)))
    return table


# ---------------------------------------------------------------------------
# RBAC
# ---------------------------------------------------------------------------


def hierarchy_depth(world: World) -> Table:
    """Access through a chain R0 > R1 > ... > Rd with the permission on Rd."""
    table = _table("access through a role chain of depth d", "d")
    admin, alice = world.keys["admin"], world.keys["alice"]
    for depth in (1, 4, 16):
        engine = RBACEngine(world.params, world.keystore)
        roles = [f"R{i}" for i in range(depth + 1)]
        engine.assign_roles("admin", role_assignment_enc(["R0"], "alice", admin, world.params))
        engine.assign_permissions(
            "admin", permission_assignment_enc(roles[-1], [("read", "chart")], admin, world.params)
        )
        graph = {roles[i]: [roles[i + 1]] for i in range(depth)}
        engine.deploy_hierarchy("admin", hierarchy_enc(graph, admin, world.params))
        engine.activate_role(role_activation_request("R0", alice, world.params))
        request = access_request_generate("R0", "read", "chart", alice, world.params)
        table.add_row(str(depth), *_counts(lambda: engine.access_request(request)))
    return table


def permission_count(world: World) -> Table:
    """Access with N permission assignments on the activated role."""
    table = _table("access with N permission assignments", "N")
    admin, alice = world.keys["admin"], world.keys["alice"]
    for n in (1, 10, 100):
        engine = RBACEngine(world.params, world.keystore)
        engine.assign_roles("admin", role_assignment_enc(["Doctor"], "alice", admin, world.params))
        for i in range(n):
            engine.assign_permissions(
                "admin",
                permission_assignment_enc("Doctor", [("read", f"chart-{i}")], admin, world.params),
            )
        engine.activate_role(role_activation_request("Doctor", alice, world.params))
        request = access_request_generate("Doctor", "read", f"chart-{n - 1}", alice, world.params)
        table.add_row(str(n), *_counts(lambda: engine.access_request(request)))
    return table


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


def hbdsod_history(world: World) -> Table:
    """A conflicting request after H granted ones on other instances."""
    table = _table("HBDSoD evaluation after H history records", "H")
    admin, alice = world.keys["admin"], world.keys["alice"]
    spec = hbdsod_constraint(["Issue", "Approve"], "PO")
    for history in (0, 10, 100):
        engine = ConstraintEngine(world.params, world.keystore)
        engine.deploy_constraint("admin", constraint_enc(spec, admin, world.params))
        for i in range(history):
            engine.evaluate(
                request_generate("Clerk", "Issue", "PO", f"#{i}", (), None, alice, world.params)
            )
        request = request_generate("Clerk", "Approve", "PO", "#0", (), None, alice, world.params)
        table.add_row(str(history), *_counts(lambda: engine.evaluate(request)))
    return table


def chinese_wall_depth(world: World) -> Table:
    """Deploy and evaluate a two-branch wall with domain paths of length z."""
    table = _table("Chinese Wall with domain depth z (deploy / evaluate)", "z")
    admin, alice = world.keys["admin"], world.keys["alice"]
    for depth in (1, 2, 3):
        paths = [
            [f"{company}-{level}" for level in range(depth)] for company in ("Google", "Microsoft")
        ]
        spec = chinese_wall_constraint("Bank", paths)
        engine = ConstraintEngine(world.params, world.keystore)
        deploy = _counts(
            lambda: engine.deploy_constraint("admin", constraint_enc(spec, admin, world.params))
        )
        engine.evaluate(request_generate("A", "read", "Bank", "x", paths[0], None, alice, world.params))
        request = request_generate("A", "read", "Bank", "y", paths[1], None, alice, world.params)
        evaluate = _counts(lambda: engine.evaluate(request))
        table.add_row(str(depth), *(f"{d} / {e}" for d, e in zip(deploy, evaluate)))
    return table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bits", type=int, default=512)
    parser.add_argument("--subgroup-bits", type=int, default=160)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    with console.status("generating group"):
        world = World(args.bits, args.subgroup_bits, args.seed)
    for experiment in (
        numeric_condition_size,
        policy_store_size,
        hierarchy_depth,
        permission_count,
        hbdsod_history,
        chinese_wall_depth,
    ):
        with console.status(experiment.__name__):
            table = experiment(world)
        console.print(table)


if __name__ == "__main__":
    main()
