"""Cleartext reference engine.

The same decisions as the encrypted engines, computed on cleartext stores.
Numeric predicates are checked arithmetically rather than through the
bag-of-bits compiler. Used as the oracle in tests.

Stateful requests (role activation, constrained access) update the
cleartext session store when granted, mirroring the encrypted engines.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

from .constraint_engine import HBDSOD, ConstraintSpec, request_labels
from .policy import (
    CONSTRAINT_VIOLATION,
    CONTEXT,
    INSTANCE,
    NO_MATCHING_PERMISSION,
    NO_MATCHING_POLICY,
    OBJTYPE,
    ROLE_NOT_ACTIVE,
    ROLE_NOT_ASSIGNED,
    AttributeSet,
    Decision,
    LabeledElement,
    NumericComparison,
    SatTuple,
    TreeNode,
    evaluate_tree,
)

# ---------------------------------------------------------------------------
# Stores
# ---------------------------------------------------------------------------


@dataclass
class ClearPolicy:
    tuple: SatTuple
    condition: TreeNode | None = None


@dataclass
class ClearPolicyDB:
    policies: list[ClearPolicy] = field(default_factory=list)


@dataclass
class ClearRoleAssignment:
    requester_id: str
    roles: list[str]
    activation_condition: TreeNode | None = None


@dataclass
class ClearPermissionAssignment:
    role: str
    permissions: list[tuple[str, str]]
    grant_condition: TreeNode | None = None


@dataclass
class ClearRBACDB:
    role_assignments: list[ClearRoleAssignment] = field(default_factory=list)
    permission_assignments: list[ClearPermissionAssignment] = field(default_factory=list)
    # derived role -> base roles
    hierarchy: dict[str, list[str]] = field(default_factory=dict)


@dataclass
class ClearConstraintDB:
    constraints: list[ConstraintSpec] = field(default_factory=list)


@dataclass
class ClearSessionDB:
    active_roles: dict[str, list[str]] = field(default_factory=dict)
    history: dict[str, list[list[LabeledElement]]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyRequest:
    tuple: SatTuple
    attributes: AttributeSet | None = None


@dataclass(frozen=True)
class ActivationRequest:
    requester_id: str
    role: str
    attributes: AttributeSet | None = None


@dataclass(frozen=True)
class RoleAccessRequest:
    requester_id: str
    role: str
    action: str
    target: str
    attributes: AttributeSet | None = None


@dataclass(frozen=True)
class ConstrainedRequest:
    requester_id: str
    role: str
    action: str
    objtype: str
    instance: str
    domains: tuple[str, ...] = ()
    context: AttributeSet | None = None


ClearRequest = Union[PolicyRequest, ActivationRequest, RoleAccessRequest, ConstrainedRequest]


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------


def condition_holds(condition: TreeNode | None, attributes: AttributeSet | None) -> bool:
    if condition is None:
        return True
    attrs = attributes or AttributeSet()
    present = set(attrs.elements())

    def decide(payload: Any) -> bool:
        if isinstance(payload, NumericComparison):
            if payload.constant is not None:
                return payload.constant
            value = attrs.numerics.get(payload.name)
            return value is not None and value[1] == payload.bits and payload.holds(value[0])
        return payload in present

    return evaluate_tree(condition.copy(), decide)


def _decide_policy(db: ClearPolicyDB, request: PolicyRequest) -> Decision:
    applicable = [p for p in db.policies if p.tuple == request.tuple]
    if any(condition_holds(p.condition, request.attributes) for p in applicable):
        return Decision.grant()
    return Decision.deny(NO_MATCHING_POLICY)


def _activate(db: ClearRBACDB, session: ClearSessionDB, request: ActivationRequest) -> Decision:
    for assignment in db.role_assignments:
        if assignment.requester_id != request.requester_id or request.role not in assignment.roles:
            continue
        if condition_holds(assignment.activation_condition, request.attributes):
            active = session.active_roles.setdefault(request.requester_id, [])
            if request.role not in active:
                active.append(request.role)
            return Decision.grant()
    return Decision.deny(ROLE_NOT_ASSIGNED)


def inherited_roles(hierarchy: dict[str, list[str]], role: str) -> list[str]:
    """The role followed by every base role reachable from it, breadth-first."""
    order = [role]
    queue = deque(hierarchy.get(role, ()))
    while queue:
        base = queue.popleft()
        if base in order:
            continue
        order.append(base)
        queue.extend(hierarchy.get(base, ()))
    return order


def _access(db: ClearRBACDB, session: ClearSessionDB, request: RoleAccessRequest) -> Decision:
    if request.role not in session.active_roles.get(request.requester_id, ()):
        return Decision.deny(ROLE_NOT_ACTIVE)
    wanted = (request.action, request.target)
    for role in inherited_roles(db.hierarchy, request.role):
        for assignment in db.permission_assignments:
            if (
                assignment.role == role
                and wanted in assignment.permissions
                and condition_holds(assignment.grant_condition, request.attributes)
            ):
                return Decision.grant()
    return Decision.deny(NO_MATCHING_PERMISSION)


def _violates(
    spec: ConstraintSpec,
    elements: Sequence[LabeledElement],
    history: Sequence[list[LabeledElement]],
) -> bool:
    present = set(elements)
    tree = spec.tree.copy()
    if not evaluate_tree(tree, lambda item: item in present, short_circuit=False):
        return False
    if spec.kind == HBDSOD:
        options = spec.options
        group = next(c for c in tree.children if c.kind == "gate")
        members = [
            m.payload.value
            for m in group.children
            if options.deny_repeat or m.payload not in present
        ]
        bindings = {e for e in elements if e.label == OBJTYPE}
        if options.bind_instance:
            bindings |= {e for e in elements if e.label == INSTANCE}
        bindings |= {
            c.payload for c in tree.children if c.kind == "leaf" and c.payload.label == CONTEXT
        }
        performed: set[str] = set()
        for record in history:
            seen = set(record)
            if not bindings <= seen:
                continue
            performed |= {
                m for m in members if LabeledElement(options.group_label, m) in seen
            }
            if len(performed) >= options.max_actions:
                return True
        return False
    closed = [
        {lf.payload for lf in branch.children} for branch in tree.children if not branch.decision
    ]
    return any(branch <= set(record) for record in history for branch in closed)


def _constrained(
    db: ClearConstraintDB, session: ClearSessionDB, request: ConstrainedRequest
) -> Decision:
    elements = request_labels(
        request.role,
        request.action,
        request.objtype,
        request.instance,
        request.domains,
        request.context,
    )
    history = session.history.get(request.requester_id, [])
    if any(_violates(spec, elements, history) for spec in db.constraints):
        return Decision.deny(CONSTRAINT_VIOLATION)
    session.history.setdefault(request.requester_id, []).append(list(elements))
    return Decision.grant()


def cleartext_decide(
    policy_db: ClearPolicyDB,
    rbac_db: ClearRBACDB,
    constraint_db: ClearConstraintDB,
    session_db: ClearSessionDB,
    request: ClearRequest,
) -> Decision:
    """Deny-by-default decision for any request kind on cleartext stores."""
    if isinstance(request, PolicyRequest):
        return _decide_policy(policy_db, request)
    if isinstance(request, ActivationRequest):
        return _activate(rbac_db, session_db, request)
    if isinstance(request, RoleAccessRequest):
        return _access(rbac_db, session_db, request)
    if isinstance(request, ConstrainedRequest):
        return _constrained(constraint_db, session_db, request)
    raise TypeError(f"unsupported request {type(request).__name__}")
