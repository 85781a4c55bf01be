"""Policy decision point composing the three encrypted engines.

All engines share one set of public parameters, one key store and one id
sequence. With a :class:`FileStore` attached, every write verb persists the
collections it touched before returning.
"""

from __future__ import annotations

import os
import threading
from typing import Iterable

from . import _telemetry
from .constraint_engine import (
    ClientConstraint,
    ConstraintEngine,
    ConstraintTree,
    EgrantRequest,
    SessionRecord,
)
from .errors import ConfigurationError
from .locking import IdSequence
from .policy import Decision
from .policy_engine import (
    ClientPolicy,
    EncryptedAttributeList,
    EncryptedPolicy,
    EncryptedRequestTuple,
    PolicyEngine,
)
from .rbac_engine import (
    AccessRequest,
    ClientPermissionAssignment,
    ClientRoleAssignment,
    ClientRoleHierarchy,
    PermissionAssignment,
    RBACEngine,
    RoleActivationRequest,
    RoleAssignment,
    RoleHierarchyGraph,
)
from .sde import KeyStore, PublicParams, ServerKeySet
from .store import (
    CONSTRAINTS,
    HIERARCHY,
    HISTORY,
    KEYSTORE,
    PERMISSION_ASSIGNMENTS,
    POLICIES,
    ROLE_ASSIGNMENTS,
    SEQUENCE,
    SESSIONS,
    FileStore,
    StoreRoot,
)


class PolicyDecisionPoint:
    """Server-side entry point for every verb the service exposes."""

    def __init__(self, root: StoreRoot, *, store: FileStore | None = None) -> None:
        self.params = root.params
        self.keystore = root.keystore
        self.store = store
        self.ids = IdSequence(root.sequence)
        self.policy_engine = PolicyEngine(
            self.params, self.keystore, policies=root.policies, ids=self.ids
        )
        self.rbac_engine = RBACEngine(
            self.params,
            self.keystore,
            role_assignments=root.role_assignments,
            permission_assignments=root.permission_assignments,
            hierarchy=root.hierarchy,
            session=root.sessions,
            ids=self.ids,
        )
        self.constraint_engine = ConstraintEngine(
            self.params,
            self.keystore,
            constraints=root.constraints,
            history=root.history,
            ids=self.ids,
        )
        self._persist_lock = threading.Lock()

    @classmethod
    def in_memory(
        cls, params: PublicParams, keys: Iterable[ServerKeySet] = ()
    ) -> "PolicyDecisionPoint":
        return cls(StoreRoot(params=params, keystore=KeyStore(keys)))

    @classmethod
    def open(cls, path: str | os.PathLike[str]) -> "PolicyDecisionPoint":
        store = FileStore(path)
        if not store.exists():
            raise ConfigurationError(
                f"No store at {store.path}; import a server key first to create one"
            )
        return cls(store.load(), store=store)

    @classmethod
    def create(cls, path: str | os.PathLike[str], params: PublicParams) -> "PolicyDecisionPoint":
        store = FileStore(path)
        return cls(store.initialize(params), store=store)

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def snapshot(self) -> StoreRoot:
        return StoreRoot(
            params=self.params,
            keystore=self.keystore,
            policies=list(self.policy_engine.policies()),
            role_assignments=list(self.rbac_engine.role_assignments.snapshot()),
            permission_assignments=list(self.rbac_engine.permission_assignments.snapshot()),
            hierarchy=self.rbac_engine.hierarchy,
            constraints=list(self.constraint_engine.constraints()),
            sessions=self.rbac_engine.session,
            history=self.constraint_engine.history,
            sequence=self.ids.state(),
        )

    def _persist(self, *collections: str) -> None:
        if self.store is None:
            return
        with self._persist_lock:
            self.store.save(self.snapshot(), collections)

    # ------------------------------------------------------------------
    # Keys
    # ------------------------------------------------------------------

    def import_key(self, key: ServerKeySet, *, replace: bool = False) -> None:
        if not 0 <= key.x2 < self.params.q:
            raise ConfigurationError(f"Server key for {key.user_id!r} is outside this group")
        self.keystore.add(key, replace=replace)
        self._persist(KEYSTORE)
        _telemetry.log("info", "server key imported", user=key.user_id)

    def revoke_user(self, user_id: str) -> bool:
        removed = self.policy_engine.revoke_user(user_id)
        if removed:
            self._persist(KEYSTORE)
        return removed

    # ------------------------------------------------------------------
    # Policies
    # ------------------------------------------------------------------

    def deploy_policy(self, admin_id: str, client_policy: ClientPolicy) -> EncryptedPolicy:
        policy = self.policy_engine.deploy_policy(admin_id, client_policy)
        self._persist(POLICIES, SEQUENCE)
        return policy

    def delete_policy(self, policy_id: str) -> bool:
        removed = self.policy_engine.delete_policy(policy_id)
        if removed:
            self._persist(POLICIES)
        return removed

    def evaluate_request(
        self,
        request: EncryptedRequestTuple,
        attributes: EncryptedAttributeList | None = None,
    ) -> Decision:
        return self.policy_engine.evaluate_request(request, attributes)

    # ------------------------------------------------------------------
    # RBAC
    # ------------------------------------------------------------------

    def assign_roles(self, admin_id: str, assignment: ClientRoleAssignment) -> RoleAssignment:
        deployed = self.rbac_engine.assign_roles(admin_id, assignment)
        self._persist(ROLE_ASSIGNMENTS, SEQUENCE)
        return deployed

    def assign_permissions(
        self, admin_id: str, assignment: ClientPermissionAssignment
    ) -> PermissionAssignment:
        deployed = self.rbac_engine.assign_permissions(admin_id, assignment)
        self._persist(PERMISSION_ASSIGNMENTS, SEQUENCE)
        return deployed

    def deploy_hierarchy(self, admin_id: str, hierarchy: ClientRoleHierarchy) -> RoleHierarchyGraph:
        deployed = self.rbac_engine.deploy_hierarchy(admin_id, hierarchy)
        self._persist(HIERARCHY)
        return deployed

    def activate_role(self, request: RoleActivationRequest) -> Decision:
        decision = self.rbac_engine.activate_role(request)
        if decision.permit:
            self._persist(SESSIONS)
        return decision

    def deactivate_role(self, request: RoleActivationRequest) -> bool:
        removed = self.rbac_engine.deactivate_role(request)
        if removed:
            self._persist(SESSIONS)
        return removed

    def clear_session(self, requester_id: str) -> int:
        cleared = self.rbac_engine.clear_session(requester_id)
        if cleared:
            self._persist(SESSIONS)
        return cleared

    def access_request(self, request: AccessRequest) -> Decision:
        return self.rbac_engine.access_request(request)

    # ------------------------------------------------------------------
    # Constraints
    # ------------------------------------------------------------------

    def deploy_constraint(self, admin_id: str, constraint: ClientConstraint) -> ConstraintTree:
        deployed = self.constraint_engine.deploy_constraint(admin_id, constraint)
        self._persist(CONSTRAINTS, SEQUENCE)
        return deployed

    def delete_constraint(self, constraint_id: str) -> bool:
        removed = self.constraint_engine.delete_constraint(constraint_id)
        if removed:
            self._persist(CONSTRAINTS)
        return removed

    def egrant_request(self, request: EgrantRequest) -> Decision:
        decision = self.constraint_engine.evaluate(request)
        if decision.permit:
            self._persist(HISTORY)
        return decision

    def dump_history(self, requester_id: str) -> tuple[SessionRecord, ...]:
        return self.constraint_engine.dump_history(requester_id)
