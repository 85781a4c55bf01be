"""Tests for the cleartext reference engine."""

from __future__ import annotations

import pytest

from blindpdp.constraint_engine import chinese_wall_constraint, hbdsod_constraint
from blindpdp.dsl import parse_condition, parse_policy
from blindpdp.policy import (
    CONSTRAINT_VIOLATION,
    NO_MATCHING_PERMISSION,
    NO_MATCHING_POLICY,
    ROLE_NOT_ACTIVE,
    ROLE_NOT_ASSIGNED,
    AttributeSet,
    Decision,
    SatTuple,
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
    condition_holds,
    inherited_roles,
)


class _World:
    def __init__(self) -> None:
        self.policies = ClearPolicyDB()
        self.rbac = ClearRBACDB()
        self.constraints = ClearConstraintDB()
        self.session = ClearSessionDB()

    def decide(self, request) -> Decision:
        return cleartext_decide(
            self.policies, self.rbac, self.constraints, self.session, request
        )


@pytest.fixture
def world() -> _World:
    return _World()


def _attrs(*items: str) -> AttributeSet:
    return AttributeSet.parse(items)


class TestConditionHolds:
    def test_no_condition(self):
        assert condition_holds(None, None)

    def test_numeric_arithmetic(self):
        cond = parse_condition("and(Location=ward, AT>9#5, AT<17#5)")
        assert condition_holds(cond, _attrs("Location=ward", "AT=10#5"))
        assert not condition_holds(cond, _attrs("Location=ward", "AT=17#5"))
        assert not condition_holds(cond, _attrs("Location=ward"))

    def test_width_must_agree(self):
        cond = parse_condition("AT>9#5")
        assert not condition_holds(cond, _attrs("AT=10#6"))

    def test_degenerate_comparison_ignores_attribute(self):
        assert condition_holds(parse_condition("AT>=0#5"), None)


class TestPolicies:
    def test_grant_and_deny(self, world):
        spec = parse_policy(
            "if and(Location=Cardiology-ward, AT>9#5, AT<17#5) "
            "then can <Cardiologist, read, health-record>"
        )
        world.policies.policies.append(ClearPolicy(spec.tuple, spec.condition))
        t = SatTuple("Cardiologist", "read", "health-record")
        granted = world.decide(PolicyRequest(t, _attrs("Location=Cardiology-ward", "AT=10#5")))
        assert granted == Decision.grant()
        denied = world.decide(PolicyRequest(t, _attrs("Location=Cardiology-ward", "AT=20#5")))
        assert denied == Decision.deny(NO_MATCHING_POLICY)

    def test_tuple_must_match_exactly(self, world):
        world.policies.policies.append(ClearPolicy(SatTuple("Doctor", "read", "chart")))
        assert world.decide(PolicyRequest(SatTuple("Doctor", "read", "chart")))
        assert not world.decide(PolicyRequest(SatTuple("Doctor", "write", "chart")))

    def test_any_policy_suffices(self, world):
        t = SatTuple("Doctor", "read", "chart")
        world.policies.policies.append(ClearPolicy(t, parse_condition("Shift=night")))
        world.policies.policies.append(ClearPolicy(t, parse_condition("Shift=day")))
        assert world.decide(PolicyRequest(t, _attrs("Shift=day")))

    def test_empty_store_denies(self, world):
        assert world.decide(PolicyRequest(SatTuple("a", "b", "c"))).reason == NO_MATCHING_POLICY


class TestRoles:
    @pytest.fixture
    def hospital(self, world) -> _World:
        world.rbac.role_assignments.append(
            ClearRoleAssignment("alice", ["Cardiologist"], parse_condition("Location=ward"))
        )
        world.rbac.permission_assignments.append(
            ClearPermissionAssignment("Doctor", [("read", "chart"), ("write", "chart")])
        )
        world.rbac.hierarchy["Cardiologist"] = ["Doctor"]
        return world

    def test_activation_needs_condition(self, hospital):
        denied = hospital.decide(ActivationRequest("alice", "Cardiologist"))
        assert denied.reason == ROLE_NOT_ASSIGNED
        assert hospital.decide(ActivationRequest("alice", "Cardiologist", _attrs("Location=ward")))
        assert hospital.session.active_roles == {"alice": ["Cardiologist"]}

    def test_unassigned_role(self, hospital):
        assert hospital.decide(ActivationRequest("alice", "Doctor")).reason == ROLE_NOT_ASSIGNED

    def test_access_requires_active_role(self, hospital):
        request = RoleAccessRequest("alice", "Cardiologist", "read", "chart")
        assert hospital.decide(request).reason == ROLE_NOT_ACTIVE

    def test_inherited_permission(self, hospital):
        hospital.decide(ActivationRequest("alice", "Cardiologist", _attrs("Location=ward")))
        assert hospital.decide(RoleAccessRequest("alice", "Cardiologist", "write", "chart"))
        denied = hospital.decide(RoleAccessRequest("alice", "Cardiologist", "delete", "chart"))
        assert denied.reason == NO_MATCHING_PERMISSION

    def test_inherited_roles_order(self):
        hierarchy = {"A": ["B", "C"], "B": ["D"], "C": ["D"]}
        assert inherited_roles(hierarchy, "A") == ["A", "B", "C", "D"]
        assert inherited_roles(hierarchy, "D") == ["D"]


class TestConstraints:
    def test_hbdsod(self, world):
        world.constraints.constraints.append(hbdsod_constraint(["Issue", "Approve"], "PO"))

        def po(requester, action, instance):
            return world.decide(
                ConstrainedRequest(requester, "Clerk", action, "PO", instance)
            )

        assert po("clerk", "Issue", "#123")
        assert po("clerk", "Approve", "#123").reason == CONSTRAINT_VIOLATION
        assert po("clerk", "Approve", "#124")
        assert po("clerk2", "Approve", "#123")
        assert po("clerk", "Issue", "#123")
        assert po("clerk", "Read", "#123")
        assert po("clerk2", "Issue", "#123").reason == CONSTRAINT_VIOLATION
        assert len(world.session.history["clerk"]) == 4

    def test_hbdsod_deny_repeat(self, world):
        world.constraints.constraints.append(
            hbdsod_constraint(["Issue", "Approve"], "PO", deny_repeat=True)
        )
        first = ConstrainedRequest("clerk", "Clerk", "Issue", "PO", "#1")
        assert world.decide(first)
        assert world.decide(first).reason == CONSTRAINT_VIOLATION

    def test_hbdsod_context_binding(self, world):
        world.constraints.constraints.append(
            hbdsod_constraint(["Issue", "Approve"], "PO", ["Branch=north"], bind_instance=False)
        )
        north = _attrs("Branch=north")
        assert world.decide(ConstrainedRequest("c", "Clerk", "Issue", "PO", "#1", context=north))
        other = world.decide(ConstrainedRequest("c", "Clerk", "Approve", "PO", "#2", context=north))
        assert other.reason == CONSTRAINT_VIOLATION
        south = _attrs("Branch=south")
        assert world.decide(ConstrainedRequest("c", "Clerk", "Approve", "PO", "#3", context=south))

    def test_chinese_wall(self, world):
        world.constraints.constraints.append(
            chinese_wall_constraint("Bank", [["Google"], ["Microsoft"]])
        )

        def read(requester, company):
            return world.decide(
                ConstrainedRequest(requester, "Analyst", "read", "Bank", "r1", (company,))
            )

        assert read("analyst", "Google")
        assert read("analyst", "Microsoft").reason == CONSTRAINT_VIOLATION
        assert read("analyst", "Google")
        assert read("analyst", "Apple")
        assert read("analyst2", "Microsoft")

    def test_denied_requests_are_not_recorded(self, world):
        world.constraints.constraints.append(
            chinese_wall_constraint("Bank", [["a"], ["b"]], by_instance=True)
        )
        world.decide(ConstrainedRequest("u", "R", "read", "Bank", "a"))
        world.decide(ConstrainedRequest("u", "R", "read", "Bank", "b"))
        assert len(world.session.history["u"]) == 1

    def test_unsupported_request(self, world):
        with pytest.raises(TypeError):
            world.decide(object())
