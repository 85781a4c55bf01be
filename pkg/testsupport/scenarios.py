"""Scenario scripts and randomized worlds.

A script is a list of cleartext steps. :func:`run_encrypted` plays it through
:class:`PolicyClient` objects over any transport; :class:`OracleWorld` plays
the same steps against the cleartext reference engine. Scripted decision
steps may carry the expected outcome in ``expect``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence, Union

from blindpdp.client import PolicyClient, PolicyTransport
from blindpdp.constraint_engine import (
    ConstraintSpec,
    chinese_wall_constraint,
    hbdsod_constraint,
)
from blindpdp.dsl import parse_condition, parse_policy
from blindpdp.policy import (
    AttributeSet,
    Decision,
    NumericComparison,
    SatTuple,
    TreeNode,
    and_,
    kofn,
    leaf,
    or_,
)
from blindpdp.reference import (
    ActivationRequest,
    ClearConstraintDB,
    ClearPermissionAssignment,
    ClearPolicy,
    ClearPolicyDB,
    ClearRBACDB,
    ClearRoleAssignment,
    ClearSessionDB,
    ConstrainedRequest,
    PolicyRequest,
    RoleAccessRequest,
    cleartext_decide,
)

from .keys import TEST_SEED, KeyRing

# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeployPolicy:
    admin: str
    tuple: SatTuple
    condition: TreeNode | None = None

    @classmethod
    def text(cls, admin: str, policy: str) -> DeployPolicy:
        spec = parse_policy(policy)
        return cls(admin, spec.tuple, spec.condition)


@dataclass(frozen=True)
class Request:
    requester: str
    tuple: SatTuple
    attributes: tuple[str, ...] = ()
    expect: bool | None = None


@dataclass(frozen=True)
class AssignRoles:
    admin: str
    requester: str
    roles: tuple[str, ...]
    condition: TreeNode | None = None


@dataclass(frozen=True)
class AssignPermissions:
    admin: str
    role: str
    permissions: tuple[tuple[str, str], ...]
    condition: TreeNode | None = None


@dataclass(frozen=True)
class DeployHierarchy:
    admin: str
    graph: tuple[tuple[str, tuple[str, ...]], ...]


@dataclass(frozen=True)
class ActivateRole:
    requester: str
    role: str
    attributes: tuple[str, ...] = ()
    expect: bool | None = None


@dataclass(frozen=True)
class DeactivateRole:
    requester: str
    role: str


@dataclass(frozen=True)
class ClearSession:
    requester: str


@dataclass(frozen=True)
class Access:
    requester: str
    role: str
    action: str
    target: str
    attributes: tuple[str, ...] = ()
    expect: bool | None = None


@dataclass(frozen=True)
class DeployConstraint:
    admin: str
    spec: ConstraintSpec = field(hash=False)


@dataclass(frozen=True)
class Egrant:
    requester: str
    role: str
    action: str
    objtype: str
    instance: str
    domains: tuple[str, ...] = ()
    context: tuple[str, ...] = ()
    expect: bool | None = None


Step = Union[
    DeployPolicy,
    Request,
    AssignRoles,
    AssignPermissions,
    DeployHierarchy,
    ActivateRole,
    DeactivateRole,
    ClearSession,
    Access,
    DeployConstraint,
    Egrant,
]

# ("decision", permit, reason) | ("deployed", id) | ("removed", bool) | ("cleared", n)
Outcome = tuple[Any, ...]


def actors(steps: Iterable[Step]) -> list[str]:
    found: dict[str, None] = {}
    for step in steps:
        for name in ("admin", "requester"):
            value = getattr(step, name, None)
            if value is not None:
                found[value] = None
    return list(found)


def _attrs(items: Sequence[str]) -> AttributeSet | None:
    return AttributeSet.parse(items) if items else None


def _decision(decision: Decision) -> Outcome:
    return ("decision", decision.permit, decision.reason)


def comparable(outcomes: Iterable[Outcome]) -> list[Outcome]:
    """Outcomes with server-assigned ids blanked out."""
    return [("deployed", None) if o[0] == "deployed" else o for o in outcomes]


def expected_mismatches(steps: Sequence[Step], outcomes: Sequence[Outcome]) -> list[str]:
    problems = []
    for index, (step, outcome) in enumerate(zip(steps, outcomes)):
        expect = getattr(step, "expect", None)
        if expect is not None and outcome[1] != expect:
            problems.append(f"step {index} {step!r}: got {outcome}")
    return problems


# ---------------------------------------------------------------------------
# Encrypted runner
# ---------------------------------------------------------------------------


def policy_clients(
    ring: KeyRing, transport: PolicyTransport, *, seed: int = TEST_SEED
) -> dict[str, PolicyClient]:
    """One seeded client per issued user, all sharing one transport."""
    return {
        user_id: PolicyClient(
            transport, key, ring.params, rng=random.Random(f"{seed}:client:{user_id}")
        )
        for user_id, key in ring.clients.items()
    }


async def run_step(step: Step, clients: Mapping[str, PolicyClient]) -> Outcome:
    if isinstance(step, DeployPolicy):
        return ("deployed", await clients[step.admin].deploy_policy(step.tuple, step.condition))
    if isinstance(step, Request):
        return _decision(
            await clients[step.requester].request(step.tuple, _attrs(step.attributes))
        )
    if isinstance(step, AssignRoles):
        client = clients[step.admin]
        return ("deployed", await client.assign_roles(step.requester, step.roles, step.condition))
    if isinstance(step, AssignPermissions):
        client = clients[step.admin]
        return (
            "deployed",
            await client.assign_permissions(step.role, step.permissions, step.condition),
        )
    if isinstance(step, DeployHierarchy):
        return ("deployed", await clients[step.admin].deploy_hierarchy(dict(step.graph)))
    if isinstance(step, ActivateRole):
        client = clients[step.requester]
        return _decision(await client.activate_role(step.role, _attrs(step.attributes)))
    if isinstance(step, DeactivateRole):
        return ("removed", await clients[step.requester].deactivate_role(step.role))
    if isinstance(step, ClearSession):
        return ("cleared", await clients[step.requester].clear_session())
    if isinstance(step, Access):
        client = clients[step.requester]
        return _decision(
            await client.access(step.role, step.action, step.target, _attrs(step.attributes))
        )
    if isinstance(step, DeployConstraint):
        return ("deployed", await clients[step.admin].deploy_constraint(step.spec))
    if isinstance(step, Egrant):
        decision = await clients[step.requester].egrant_request(
            step.role,
            step.action,
            step.objtype,
            step.instance,
            step.domains,
            _attrs(step.context),
        )
        return _decision(decision)
    raise TypeError(f"unknown step {step!r}")


async def run_encrypted(
    steps: Sequence[Step], clients: Mapping[str, PolicyClient]
) -> list[Outcome]:
    return [await run_step(step, clients) for step in steps]


# ---------------------------------------------------------------------------
# Cleartext runner
# ---------------------------------------------------------------------------


@dataclass
class OracleWorld:
    policies: ClearPolicyDB = field(default_factory=ClearPolicyDB)
    rbac: ClearRBACDB = field(default_factory=ClearRBACDB)
    constraints: ClearConstraintDB = field(default_factory=ClearConstraintDB)
    session: ClearSessionDB = field(default_factory=ClearSessionDB)

    def _decide(self, request: Any) -> Outcome:
        return _decision(
            cleartext_decide(self.policies, self.rbac, self.constraints, self.session, request)
        )

    def apply(self, step: Step) -> Outcome:
        if isinstance(step, DeployPolicy):
            self.policies.policies.append(ClearPolicy(step.tuple, step.condition))
            return ("deployed", None)
        if isinstance(step, Request):
            return self._decide(PolicyRequest(step.tuple, _attrs(step.attributes)))
        if isinstance(step, AssignRoles):
            self.rbac.role_assignments.append(
                ClearRoleAssignment(step.requester, list(step.roles), step.condition)
            )
            return ("deployed", None)
        if isinstance(step, AssignPermissions):
            self.rbac.permission_assignments.append(
                ClearPermissionAssignment(step.role, list(step.permissions), step.condition)
            )
            return ("deployed", None)
        if isinstance(step, DeployHierarchy):
            self.rbac.hierarchy = {derived: list(bases) for derived, bases in step.graph}
            return ("deployed", None)
        if isinstance(step, ActivateRole):
            return self._decide(
                ActivationRequest(step.requester, step.role, _attrs(step.attributes))
            )
        if isinstance(step, DeactivateRole):
            active = self.session.active_roles.get(step.requester, [])
            removed = step.role in active
            if removed:
                active.remove(step.role)
            return ("removed", removed)
        if isinstance(step, ClearSession):
            return ("cleared", len(self.session.active_roles.pop(step.requester, [])))
        if isinstance(step, Access):
            return self._decide(
                RoleAccessRequest(
                    step.requester,
                    step.role,
                    step.action,
                    step.target,
                    _attrs(step.attributes),
                )
            )
        if isinstance(step, DeployConstraint):
            self.constraints.constraints.append(step.spec)
            return ("deployed", None)
        if isinstance(step, Egrant):
            return self._decide(
                ConstrainedRequest(
                    step.requester,
                    step.role,
                    step.action,
                    step.objtype,
                    step.instance,
                    step.domains,
                    _attrs(step.context),
                )
            )
        raise TypeError(f"unknown step {step!r}")

    def run(self, steps: Iterable[Step]) -> list[Outcome]:
        return [self.apply(step) for step in steps]


# ---------------------------------------------------------------------------
# Scripted scenarios
# ---------------------------------------------------------------------------

WARD = "Location=Cardiology-ward"


def hospital_script() -> list[Step]:
    """Conditional policies plus the Intern / Cardiologist diamond."""
    record = SatTuple("Cardiologist", "read", "health-record")
    return [
        DeployPolicy.text(
            "admin",
            f"if and({WARD}, AT>9#5, AT<17#5) then can <Cardiologist, read, health-record>",
        ),
        DeployPolicy.text("admin", "can <Doctor, read, chart>"),
        Request("alice", record, (WARD, "AT=10#5"), expect=True),
        Request("alice", record, (WARD, "AT=8#5"), expect=False),
        Request("alice", record, ("Location=Radiology", "AT=10#5"), expect=False),
        Request("alice", record, (), expect=False),
        Request("bob", SatTuple("Doctor", "read", "chart"), expect=True),
        Request("bob", SatTuple("Doctor", "write", "chart"), expect=False),
        DeployHierarchy(
            "admin",
            (
                ("Cardiologist", ("Cardiologist-Assistant", "Doctor")),
                ("Cardiologist-Assistant", ("Intern",)),
                ("Doctor", ("Intern",)),
            ),
        ),
        AssignRoles("admin", "alice", ("Cardiologist", "Doctor")),
        AssignRoles("admin", "bob", ("Intern",), parse_condition(WARD)),
        AssignPermissions("admin", "Intern", (("read", "patient-list"),)),
        AssignPermissions(
            "admin", "Doctor", (("write", "prescription"),), parse_condition("AT<17#5")
        ),
        Access("alice", "Cardiologist", "read", "patient-list", expect=False),
        ActivateRole("alice", "Cardiologist", expect=True),
        Access("alice", "Cardiologist", "read", "patient-list", expect=True),
        Access("alice", "Cardiologist", "write", "prescription", ("AT=10#5",), expect=True),
        Access("alice", "Cardiologist", "write", "prescription", ("AT=20#5",), expect=False),
        Access("alice", "Cardiologist", "delete", "patient-list", expect=False),
        ActivateRole("bob", "Intern", expect=False),
        ActivateRole("bob", "Intern", (WARD,), expect=True),
        ActivateRole("bob", "Doctor", (WARD,), expect=False),
        Access("bob", "Intern", "read", "patient-list", expect=True),
        Access("bob", "Intern", "write", "prescription", ("AT=10#5",), expect=False),
        DeactivateRole("alice", "Cardiologist"),
        Access("alice", "Cardiologist", "read", "patient-list", expect=False),
        ClearSession("bob"),
        Access("bob", "Intern", "read", "patient-list", expect=False),
    ]


def purchase_order_script() -> list[Step]:
    """Issue and approve of one purchase order are kept apart."""
    po = "Purchase-Order"
    return [
        DeployConstraint("admin", hbdsod_constraint(["Issue", "Approve"], po)),
        Egrant("clerk", "Clerk", "Issue", po, "#123", expect=True),
        Egrant("clerk", "Clerk", "Approve", po, "#123", expect=False),
        Egrant("clerk", "Clerk", "Approve", po, "#124", expect=True),
        Egrant("clerk2", "Clerk", "Approve", po, "#123", expect=True),
        Egrant("clerk", "Clerk", "Issue", po, "#123", expect=True),
        Egrant("clerk", "Clerk", "Read", po, "#123", expect=True),
        Egrant("clerk2", "Clerk", "Issue", po, "#123", expect=False),
    ]


COMPANIES = ("Google", "Microsoft", "Apple")
DEPARTMENTS = ("Marketing", "Sales", "Research")
REGIONS = ("EMEA", "APAC", "US")


def domain_path(company: str, depth: int) -> tuple[str, ...]:
    return (company, *DEPARTMENTS[:1], *REGIONS[:1])[:depth]


def chinese_wall_script(depth: int = 2) -> list[Step]:
    """Google and Microsoft are in one conflict class.

    ``depth`` is the number of domain levels per branch; 0 puts the conflict
    between two object instances instead.
    """
    obj = "Bank-Dataset"
    if depth == 0:
        spec = chinese_wall_constraint(obj, [["google-q3"], ["microsoft-q3"]], by_instance=True)

        def request(who: str, company: str, expect: bool) -> Egrant:
            return Egrant(who, "Consultant", "read", obj, f"{company.lower()}-q3", expect=expect)

    else:
        spec = chinese_wall_constraint(
            obj, [list(domain_path("Google", depth)), list(domain_path("Microsoft", depth))]
        )

        def request(who: str, company: str, expect: bool) -> Egrant:
            return Egrant(
                who,
                "Consultant",
                "read",
                obj,
                f"{company.lower()}-q3",
                domain_path(company, depth),
                expect=expect,
            )

    return [
        DeployConstraint("admin", spec),
        request("analyst", "Google", True),
        request("analyst", "Microsoft", False),
        request("analyst2", "Microsoft", True),
        request("analyst", "Google", True),
        request("analyst2", "Google", False),
        request("analyst", "Apple", True),
    ]


# ---------------------------------------------------------------------------
# Randomized worlds
# ---------------------------------------------------------------------------

SUBJECTS = ("Doctor", "Nurse", "Cardiologist")
ACTIONS = ("read", "write")
TARGETS = ("record", "chart")
LOCATIONS = ("ward-a", "ward-b", "icu")
NUMERICS = (("AT", 5), ("Level", 3))
_OPS = ("<", ">", "<=", ">=", "=")


def random_condition(rng: random.Random, depth: int = 2) -> TreeNode:
    if depth == 0 or rng.random() < 0.4:
        if rng.random() < 0.4:
            return leaf(f"Location={rng.choice(LOCATIONS)}")
        name, bits = rng.choice(NUMERICS)
        return leaf(
            NumericComparison(name, rng.choice(_OPS), rng.randrange(1 << bits), bits)
        )
    children = [random_condition(rng, depth - 1) for _ in range(rng.randint(2, 3))]
    gate = rng.choice(("and", "or", "kofn"))
    if gate == "and":
        return and_(*children)
    if gate == "or":
        return or_(*children)
    return kofn(rng.randint(1, len(children)), *children)


def random_attributes(rng: random.Random) -> tuple[str, ...]:
    attrs: list[str] = []
    if rng.random() < 0.7:
        attrs.append(f"Location={rng.choice(LOCATIONS)}")
    for name, bits in NUMERICS:
        if rng.random() < 0.7:
            attrs.append(f"{name}={rng.randrange(1 << bits)}#{bits}")
    return tuple(attrs)


def _maybe_condition(rng: random.Random, p: float = 0.6) -> TreeNode | None:
    return random_condition(rng) if rng.random() < p else None


def random_policy_world(
    rng: random.Random, *, policies: int = 5, requests: int = 12
) -> list[Step]:
    def sat() -> SatTuple:
        return SatTuple(rng.choice(SUBJECTS), rng.choice(ACTIONS), rng.choice(TARGETS))

    steps: list[Step] = [
        DeployPolicy("admin", sat(), _maybe_condition(rng)) for _ in range(policies)
    ]
    steps.extend(
        Request(rng.choice(("alice", "bob")), sat(), random_attributes(rng))
        for _ in range(requests)
    )
    return steps


ROLES = tuple(f"R{i}" for i in range(5))


def random_rbac_world(rng: random.Random, *, requests: int = 16) -> list[Step]:
    requesters = ("alice", "bob")
    steps: list[Step] = []
    if rng.random() < 0.7:
        graph: dict[str, list[str]] = {}
        for i, derived in enumerate(ROLES):
            for base in ROLES[i + 1 :]:
                if rng.random() < 0.3:
                    graph.setdefault(derived, []).append(base)
        if graph:
            steps.append(
                DeployHierarchy("admin", tuple((d, tuple(b)) for d, b in graph.items()))
            )
    for requester in requesters:
        roles = tuple(rng.sample(ROLES, rng.randint(1, 3)))
        steps.append(AssignRoles("admin", requester, roles, _maybe_condition(rng, 0.4)))
    for role in ROLES:
        if rng.random() < 0.8:
            perms = tuple(
                sorted(
                    {(rng.choice(ACTIONS), rng.choice(TARGETS)) for _ in range(rng.randint(1, 3))}
                )
            )
            steps.append(AssignPermissions("admin", role, perms, _maybe_condition(rng, 0.4)))
    for _ in range(requests):
        who = rng.choice(requesters)
        roll = rng.random()
        if roll < 0.4:
            steps.append(ActivateRole(who, rng.choice(ROLES), random_attributes(rng)))
        elif roll < 0.85:
            steps.append(
                Access(
                    who,
                    rng.choice(ROLES),
                    rng.choice(ACTIONS),
                    rng.choice(TARGETS),
                    random_attributes(rng),
                )
            )
        elif roll < 0.95:
            steps.append(DeactivateRole(who, rng.choice(ROLES)))
        else:
            steps.append(ClearSession(who))
    return steps


OBJTYPES = ("Purchase-Order", "Invoice")
DSOD_ACTIONS = ("Issue", "Approve", "Pay", "Audit")
BRANCHES = ("Branch=north", "Branch=south")


def random_constraint_world(rng: random.Random, *, requests: int = 14) -> list[Step]:
    steps: list[Step] = []
    for objtype in OBJTYPES:
        if rng.random() < 0.8:
            members = rng.sample(DSOD_ACTIONS, rng.randint(2, 3))
            deny_repeat = rng.random() < 0.3
            limit = 1 if deny_repeat else len(members) - 1
            context = [rng.choice(BRANCHES)] if rng.random() < 0.3 else []
            steps.append(
                DeployConstraint(
                    "admin",
                    hbdsod_constraint(
                        members,
                        objtype,
                        context,
                        max_actions=rng.randint(1, limit),
                        deny_repeat=deny_repeat,
                        bind_instance=rng.random() < 0.8,
                    ),
                )
            )
    depth = rng.randint(1, 2)
    if rng.random() < 0.7:
        companies = rng.sample(COMPANIES, 2)
        steps.append(
            DeployConstraint(
                "admin",
                chinese_wall_constraint(
                    "Dataset", [list(domain_path(c, depth)) for c in companies]
                ),
            )
        )
    for _ in range(requests):
        who = rng.choice(("alice", "bob"))
        if rng.random() < 0.6:
            steps.append(
                Egrant(
                    who,
                    "Clerk",
                    rng.choice(DSOD_ACTIONS),
                    rng.choice(OBJTYPES),
                    rng.choice(("#1", "#2")),
                    context=(rng.choice(BRANCHES),) if rng.random() < 0.5 else (),
                )
            )
        else:
            steps.append(
                Egrant(
                    who,
                    "Analyst",
                    "read",
                    "Dataset",
                    rng.choice(("ds-1", "ds-2")),
                    domain_path(rng.choice(COMPANIES), rng.randint(0, depth)),
                )
            )
    return steps
