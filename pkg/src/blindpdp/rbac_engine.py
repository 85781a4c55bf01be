"""Encrypted RBAC: role and permission assignments, role hierarchy, sessions.

Role assignments are indexed by the cleartext requester id; everything a
role, action or target is named by stays encrypted. Hierarchy nodes carry a
server trapdoor next to their ciphertext so the server can probe the
permission repository on behalf of a base role during inheritance.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import _telemetry
from .errors import InvalidHierarchyError
from .locking import Collection, IdSequence, KeyedLocks
from .policy import (
    ACTION,
    NO_MATCHING_PERMISSION,
    ROLE,
    ROLE_NOT_ACTIVE,
    ROLE_NOT_ASSIGNED,
    TARGET,
    Decision,
    TreeNode,
    element,
)
from .policy_engine import (
    EncryptedAttributeList,
    condition_enc,
    condition_reenc,
    evaluate_condition,
    server_attribute_trapdoors,
)
from .sde import (
    ClientEncryptedElement,
    ClientKeySet,
    ClientTrapdoor,
    KeyStore,
    PublicParams,
    RandomSource,
    ServerEncryptedElement,
    ServerTrapdoor,
    client_enc,
    client_td,
    match,
    server_reenc,
    server_td,
)

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

ClientPermission = tuple[ClientEncryptedElement, ClientEncryptedElement]
Permission = tuple[ServerEncryptedElement, ServerEncryptedElement]


@dataclass(frozen=True)
class ClientRoleAssignment:
    requester_id: str
    roles: tuple[ClientEncryptedElement, ...]
    activation_condition: TreeNode | None = None


@dataclass(frozen=True)
class RoleAssignment:
    assignment_id: str
    requester_id: str
    roles: tuple[ServerEncryptedElement, ...]
    activation_condition: TreeNode | None = None


@dataclass(frozen=True)
class ClientPermissionAssignment:
    role: ClientEncryptedElement
    permissions: tuple[ClientPermission, ...]
    grant_condition: TreeNode | None = None


@dataclass(frozen=True)
class PermissionAssignment:
    assignment_id: str
    role: ServerEncryptedElement
    permissions: tuple[Permission, ...]
    grant_condition: TreeNode | None = None


@dataclass(frozen=True)
class ClientHierarchyNode:
    cipher: ClientEncryptedElement
    trapdoor: ClientTrapdoor


@dataclass(frozen=True)
class HierarchyNode:
    cipher: ServerEncryptedElement
    trapdoor: ServerTrapdoor


def _check_graph(node_count: int, edges: Sequence[tuple[int, int]]) -> None:
    bases: dict[int, list[int]] = {i: [] for i in range(node_count)}
    for derived, base in edges:
        if not (0 <= derived < node_count and 0 <= base < node_count):
            raise InvalidHierarchyError(f"edge {derived}->{base} points outside the graph")
        if derived == base:
            raise InvalidHierarchyError(f"node {derived} extends itself")
        bases[derived].append(base)
    # iterative three-colour DFS
    state = [0] * node_count
    for root in range(node_count):
        if state[root]:
            continue
        stack = [(root, iter(bases[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise InvalidHierarchyError("role hierarchy contains a cycle")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(bases[nxt])))


@dataclass(frozen=True)
class ClientRoleHierarchy:
    nodes: tuple[ClientHierarchyNode, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        _check_graph(len(self.nodes), self.edges)


@dataclass(frozen=True)
class RoleHierarchyGraph:
    """Encrypted role DAG; edges run derived -> base by node index."""

    nodes: tuple[HierarchyNode, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        _check_graph(len(self.nodes), self.edges)

    def bases(self, index: int) -> list[int]:
        return [base for derived, base in self.edges if derived == index]


@dataclass(frozen=True)
class ActiveRole:
    trapdoor: ServerTrapdoor
    cipher: ServerEncryptedElement


@dataclass(frozen=True)
class RoleActivationRequest:
    requester_id: str
    role: ClientTrapdoor
    attributes: EncryptedAttributeList | None = None


@dataclass(frozen=True)
class AccessRequest:
    requester_id: str
    role: ClientTrapdoor
    action: ClientTrapdoor
    target: ClientTrapdoor
    attributes: EncryptedAttributeList | None = None


class ActiveRolesSession:
    """Active roles per requester. Entries appear only after a granted
    activation."""

    def __init__(self, entries: Mapping[str, Iterable[ActiveRole]] | None = None) -> None:
        self._entries: dict[str, tuple[ActiveRole, ...]] = {
            requester: tuple(roles) for requester, roles in (entries or {}).items()
        }
        self._lock = threading.Lock()

    def entries(self, requester_id: str) -> tuple[ActiveRole, ...]:
        return self._entries.get(requester_id, ())

    def requesters(self) -> list[str]:
        with self._lock:
            entries = dict(self._entries)
        return sorted(r for r, roles in entries.items() if roles)

    def append(self, requester_id: str, role: ActiveRole) -> None:
        with self._lock:
            self._entries[requester_id] = self.entries(requester_id) + (role,)

    def replace(self, requester_id: str, roles: Iterable[ActiveRole]) -> None:
        with self._lock:
            self._entries[requester_id] = tuple(roles)

    def clear(self, requester_id: str) -> int:
        with self._lock:
            return len(self._entries.pop(requester_id, ()))


# ---------------------------------------------------------------------------
# Deployment
# ---------------------------------------------------------------------------


def role_assignment_enc(
    roles: Sequence[str],
    requester_id: str,
    key: ClientKeySet,
    params: PublicParams,
    *,
    activation_condition: TreeNode | None = None,
    rng: RandomSource | None = None,
) -> ClientRoleAssignment:
    return ClientRoleAssignment(
        requester_id=requester_id,
        roles=tuple(client_enc(element(ROLE, r), key, params, rng=rng) for r in roles),
        activation_condition=(
            None
            if activation_condition is None
            else condition_enc(activation_condition, key, params, rng=rng)
        ),
    )


def role_assignment_reenc(
    assignment: ClientRoleAssignment,
    admin_id: str,
    keystore: KeyStore,
    params: PublicParams,
    assignment_id: str,
) -> RoleAssignment:
    sk = keystore.get(admin_id)
    condition = assignment.activation_condition
    return RoleAssignment(
        assignment_id=assignment_id,
        requester_id=assignment.requester_id,
        roles=tuple(server_reenc(c, sk, params) for c in assignment.roles),
        activation_condition=(
            None if condition is None else condition_reenc(condition, admin_id, keystore, params)
        ),
    )


def role_assignment_deploy(
    roles: Sequence[str],
    requester_id: str,
    admin_key: ClientKeySet,
    keystore: KeyStore,
    params: PublicParams,
    *,
    assignment_id: str,
    activation_condition: TreeNode | None = None,
    rng: RandomSource | None = None,
) -> RoleAssignment:
    client = role_assignment_enc(
        roles,
        requester_id,
        admin_key,
        params,
        activation_condition=activation_condition,
        rng=rng,
    )
    return role_assignment_reenc(client, admin_key.user_id, keystore, params, assignment_id)


def permission_assignment_enc(
    role: str,
    permissions: Sequence[tuple[str, str]],
    key: ClientKeySet,
    params: PublicParams,
    *,
    grant_condition: TreeNode | None = None,
    rng: RandomSource | None = None,
) -> ClientPermissionAssignment:
    return ClientPermissionAssignment(
        role=client_enc(element(ROLE, role), key, params, rng=rng),
        permissions=tuple(
            (
                client_enc(element(ACTION, action), key, params, rng=rng),
                client_enc(element(TARGET, target), key, params, rng=rng),
            )
            for action, target in permissions
        ),
        grant_condition=(
            None
            if grant_condition is None
            else condition_enc(grant_condition, key, params, rng=rng)
        ),
    )


def permission_assignment_reenc(
    assignment: ClientPermissionAssignment,
    admin_id: str,
    keystore: KeyStore,
    params: PublicParams,
    assignment_id: str,
) -> PermissionAssignment:
    sk = keystore.get(admin_id)
    condition = assignment.grant_condition
    return PermissionAssignment(
        assignment_id=assignment_id,
        role=server_reenc(assignment.role, sk, params),
        permissions=tuple(
            (server_reenc(a, sk, params), server_reenc(t, sk, params))
            for a, t in assignment.permissions
        ),
        grant_condition=(
            None if condition is None else condition_reenc(condition, admin_id, keystore, params)
        ),
    )


def permission_assignment_deploy(
    role: str,
    permissions: Sequence[tuple[str, str]],
    admin_key: ClientKeySet,
    keystore: KeyStore,
    params: PublicParams,
    *,
    assignment_id: str,
    grant_condition: TreeNode | None = None,
    rng: RandomSource | None = None,
) -> PermissionAssignment:
    client = permission_assignment_enc(
        role, permissions, admin_key, params, grant_condition=grant_condition, rng=rng
    )
    return permission_assignment_reenc(
        client, admin_key.user_id, keystore, params, assignment_id
    )


def hierarchy_layout(graph: Mapping[str, Sequence[str]]) -> tuple[list[str], list[tuple[int, int]]]:
    """Node order and index edges for a ``derived -> [bases]`` mapping.

    Raises ``InvalidHierarchyError`` for cycles.
    """
    names: list[str] = []
    index: dict[str, int] = {}

    def node(name: str) -> int:
        if not name:
            raise InvalidHierarchyError("role names must not be empty")
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    edges: list[tuple[int, int]] = []
    for derived, bases in graph.items():
        d = node(derived)
        for base in bases:
            edge = (d, node(base))
            if edge not in edges:
                edges.append(edge)
    _check_graph(len(names), edges)
    return names, edges


def hierarchy_enc(
    graph: Mapping[str, Sequence[str]],
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientRoleHierarchy:
    names, edges = hierarchy_layout(graph)
    nodes = tuple(
        ClientHierarchyNode(
            cipher=client_enc(element(ROLE, name), key, params, rng=rng),
            trapdoor=client_td(element(ROLE, name), key, params, rng=rng),
        )
        for name in names
    )
    return ClientRoleHierarchy(nodes=nodes, edges=tuple(edges))


def hierarchy_reenc(
    hierarchy: ClientRoleHierarchy,
    admin_id: str,
    keystore: KeyStore,
    params: PublicParams,
) -> RoleHierarchyGraph:
    sk = keystore.get(admin_id)
    return RoleHierarchyGraph(
        nodes=tuple(
            HierarchyNode(
                cipher=server_reenc(n.cipher, sk, params),
                trapdoor=server_td(n.trapdoor, sk, params),
            )
            for n in hierarchy.nodes
        ),
        edges=hierarchy.edges,
    )


def hierarchy_deploy(
    graph: Mapping[str, Sequence[str]],
    admin_key: ClientKeySet,
    keystore: KeyStore,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> RoleHierarchyGraph:
    client = hierarchy_enc(graph, admin_key, params, rng=rng)
    return hierarchy_reenc(client, admin_key.user_id, keystore, params)


# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------


def role_activation_request(
    role: str,
    key: ClientKeySet,
    params: PublicParams,
    *,
    attributes: EncryptedAttributeList | None = None,
    rng: RandomSource | None = None,
) -> RoleActivationRequest:
    return RoleActivationRequest(
        requester_id=key.user_id,
        role=client_td(element(ROLE, role), key, params, rng=rng),
        attributes=attributes,
    )


def access_request_generate(
    role: str,
    action: str,
    target: str,
    key: ClientKeySet,
    params: PublicParams,
    *,
    attributes: EncryptedAttributeList | None = None,
    rng: RandomSource | None = None,
) -> AccessRequest:
    return AccessRequest(
        requester_id=key.user_id,
        role=client_td(element(ROLE, role), key, params, rng=rng),
        action=client_td(element(ACTION, action), key, params, rng=rng),
        target=client_td(element(TARGET, target), key, params, rng=rng),
        attributes=attributes,
    )


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def search_role(
    role_t: ServerTrapdoor,
    assignments: Iterable[RoleAssignment],
    params: PublicParams,
) -> list[tuple[RoleAssignment, ServerEncryptedElement]]:
    """Assignments holding the role, with the matching ciphertext."""
    found: list[tuple[RoleAssignment, ServerEncryptedElement]] = []
    for assignment in assignments:
        for cipher in assignment.roles:
            if match(cipher, role_t, params):
                found.append((assignment, cipher))
                break
    return found


def search_permission(
    role_t: ServerTrapdoor,
    action_t: ServerTrapdoor,
    target_t: ServerTrapdoor,
    assignments: Iterable[PermissionAssignment],
    params: PublicParams,
) -> list[PermissionAssignment]:
    """Assignments of the role that hold the (action, target) pair."""
    found: list[PermissionAssignment] = []
    for assignment in assignments:
        if not match(assignment.role, role_t, params):
            continue
        for action, target in assignment.permissions:
            if match(action, action_t, params) and match(target, target_t, params):
                found.append(assignment)
                break
    return found


def _granting(
    role_t: ServerTrapdoor,
    action_t: ServerTrapdoor,
    target_t: ServerTrapdoor,
    assignments: Sequence[PermissionAssignment],
    attribute_tds: Sequence[ServerTrapdoor],
    params: PublicParams,
) -> PermissionAssignment | None:
    for assignment in search_permission(role_t, action_t, target_t, assignments, params):
        if evaluate_condition(assignment.grant_condition, attribute_tds, params):
            return assignment
    return None


def search_role_hierarchy(
    role_t: ServerTrapdoor,
    action_t: ServerTrapdoor,
    target_t: ServerTrapdoor,
    hierarchy: RoleHierarchyGraph | None,
    assignments: Sequence[PermissionAssignment],
    attribute_tds: Sequence[ServerTrapdoor],
    params: PublicParams,
) -> PermissionAssignment | None:
    """Breadth-first walk from the requested role through its base roles.

    Each base node's stored trapdoor probes the permission repository; the
    first granting assignment wins.
    """
    if hierarchy is None:
        return None
    start = next(
        (i for i, n in enumerate(hierarchy.nodes) if match(n.cipher, role_t, params)),
        None,
    )
    if start is None:
        return None
    visited = {start}
    queue = deque(hierarchy.bases(start))
    while queue:
        index = queue.popleft()
        if index in visited:
            continue
        visited.add(index)
        probe = hierarchy.nodes[index].trapdoor
        granted = _granting(probe, action_t, target_t, assignments, attribute_tds, params)
        if granted is not None:
            return granted
        queue.extend(b for b in hierarchy.bases(index) if b not in visited)
    return None


# ---------------------------------------------------------------------------
# Activation and access
# ---------------------------------------------------------------------------


def activate_role(
    request: RoleActivationRequest,
    assignments: Iterable[RoleAssignment],
    session: ActiveRolesSession,
    keystore: KeyStore,
    params: PublicParams,
) -> bool:
    sk = keystore.get(request.requester_id)
    role_t = server_td(request.role, sk, params)
    own = [a for a in assignments if a.requester_id == request.requester_id]
    hits = search_role(role_t, own, params)
    if not hits:
        return False
    tds = server_attribute_trapdoors(request.attributes, keystore, params)
    for assignment, cipher in hits:
        if evaluate_condition(assignment.activation_condition, tds, params):
            if not any(match(a.cipher, role_t, params) for a in session.entries(request.requester_id)):
                session.append(request.requester_id, ActiveRole(role_t, cipher))
            return True
    return False


def access_request(
    request: AccessRequest,
    assignments: Sequence[PermissionAssignment],
    session: ActiveRolesSession,
    hierarchy: RoleHierarchyGraph | None,
    keystore: KeyStore,
    params: PublicParams,
) -> bool:
    return _access(request, assignments, session, hierarchy, keystore, params).permit


def _access(
    request: AccessRequest,
    assignments: Sequence[PermissionAssignment],
    session: ActiveRolesSession,
    hierarchy: RoleHierarchyGraph | None,
    keystore: KeyStore,
    params: PublicParams,
) -> Decision:
    sk = keystore.get(request.requester_id)
    role_t = server_td(request.role, sk, params)
    active = session.entries(request.requester_id)
    if not any(match(entry.cipher, role_t, params) for entry in active):
        return Decision.deny(ROLE_NOT_ACTIVE)
    action_t = server_td(request.action, sk, params)
    target_t = server_td(request.target, sk, params)
    tds = server_attribute_trapdoors(request.attributes, keystore, params)
    granted = _granting(role_t, action_t, target_t, assignments, tds, params)
    if granted is None:
        granted = search_role_hierarchy(
            role_t, action_t, target_t, hierarchy, assignments, tds, params
        )
    if granted is None:
        return Decision.deny(NO_MATCHING_PERMISSION)
    return Decision.grant([granted.assignment_id])


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class RBACEngine:
    """Role repositories, the hierarchy and the active-roles session.

    Activation and access for one requester run under that requester's
    lock; different requesters proceed independently.
    """

    def __init__(
        self,
        params: PublicParams,
        keystore: KeyStore,
        *,
        role_assignments: Iterable[RoleAssignment] = (),
        permission_assignments: Iterable[PermissionAssignment] = (),
        hierarchy: RoleHierarchyGraph | None = None,
        session: ActiveRolesSession | None = None,
        ids: IdSequence | None = None,
    ) -> None:
        self.params = params
        self.keystore = keystore
        self.ids = ids or IdSequence()
        self.role_assignments: Collection[RoleAssignment] = Collection(
            (a.assignment_id, a) for a in role_assignments
        )
        self.permission_assignments: Collection[PermissionAssignment] = Collection(
            (a.assignment_id, a) for a in permission_assignments
        )
        self.hierarchy = hierarchy
        self.session = session or ActiveRolesSession()
        self._requester_locks = KeyedLocks()
        self._hierarchy_lock = threading.Lock()

    def assign_roles(self, admin_id: str, assignment: ClientRoleAssignment) -> RoleAssignment:
        self.keystore.get(admin_id)
        deployed = role_assignment_reenc(
            assignment, admin_id, self.keystore, self.params, self.ids.next("roles")
        )
        self.role_assignments.put(deployed.assignment_id, deployed)
        return deployed

    def assign_permissions(
        self, admin_id: str, assignment: ClientPermissionAssignment
    ) -> PermissionAssignment:
        self.keystore.get(admin_id)
        deployed = permission_assignment_reenc(
            assignment, admin_id, self.keystore, self.params, self.ids.next("permissions")
        )
        self.permission_assignments.put(deployed.assignment_id, deployed)
        return deployed

    def deploy_hierarchy(self, admin_id: str, hierarchy: ClientRoleHierarchy) -> RoleHierarchyGraph:
        deployed = hierarchy_reenc(hierarchy, admin_id, self.keystore, self.params)
        with self._hierarchy_lock:
            self.hierarchy = deployed
        _telemetry.log("info", "role hierarchy deployed", nodes=len(deployed.nodes))
        return deployed

    def activate_role(self, request: RoleActivationRequest) -> Decision:
        with self._requester_locks.hold(request.requester_id):
            granted = activate_role(
                request,
                self.role_assignments.snapshot(),
                self.session,
                self.keystore,
                self.params,
            )
        return Decision.grant() if granted else Decision.deny(ROLE_NOT_ASSIGNED)

    def deactivate_role(self, request: RoleActivationRequest) -> bool:
        with self._requester_locks.hold(request.requester_id):
            sk = self.keystore.get(request.requester_id)
            role_t = server_td(request.role, sk, self.params)
            active = self.session.entries(request.requester_id)
            kept = [a for a in active if not match(a.cipher, role_t, self.params)]
            self.session.replace(request.requester_id, kept)
            return len(kept) < len(active)

    def clear_session(self, requester_id: str) -> int:
        with self._requester_locks.hold(requester_id):
            return self.session.clear(requester_id)

    def access_request(self, request: AccessRequest) -> Decision:
        with self._requester_locks.hold(request.requester_id):
            return _access(
                request,
                self.permission_assignments.snapshot(),
                self.session,
                self.hierarchy,
                self.keystore,
                self.params,
            )
