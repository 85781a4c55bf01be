"""Encrypted decisions must equal the cleartext reference engine's.

Every script is played twice: through :class:`PolicyClient` against an
in-memory decision point, and through :class:`OracleWorld`. Outcomes are
compared step by step with deployed ids blanked.
"""

from __future__ import annotations

import random

import pytest

from blindpdp.client import InProcessClient
from blindpdp.pdp import PolicyDecisionPoint
from blindpdp.service import PolicyDecisionService

from testsupport.scenarios import (
    OracleWorld,
    chinese_wall_script,
    comparable,
    expected_mismatches,
    hospital_script,
    policy_clients,
    purchase_order_script,
    random_constraint_world,
    random_policy_world,
    random_rbac_world,
    run_encrypted,
)

pytestmark = pytest.mark.integration

WORLD_SEEDS = range(8)
ACCEPTANCE_WORLDS = {"policies": 500, "rbac": 300, "constraints": 300}
GENERATORS = {
    "policies": random_policy_world,
    "rbac": random_rbac_world,
    "constraints": random_constraint_world,
}
CHUNK = 50
TRANSPORTS = ("in-process", "stream", "http")


async def _play(steps, ring, transport):
    outcomes = await run_encrypted(steps, policy_clients(ring, transport))
    assert comparable(outcomes) == OracleWorld().run(steps)
    return outcomes


# ---------------------------------------------------------------------------
# Scripted scenarios
# ---------------------------------------------------------------------------


class TestScripts:
    @pytest.mark.parametrize("kind", TRANSPORTS)
    async def test_hospital(self, ring, service, connect, kind):
        steps = hospital_script()
        outcomes = await _play(steps, ring, await connect(kind, service))
        assert expected_mismatches(steps, outcomes) == []

    @pytest.mark.parametrize("kind", TRANSPORTS)
    async def test_purchase_order(self, ring, service, connect, kind):
        steps = purchase_order_script()
        outcomes = await _play(steps, ring, await connect(kind, service))
        assert expected_mismatches(steps, outcomes) == []
        assert len(service.pdp.dump_history("clerk")) == 4

    @pytest.mark.parametrize("depth", [0, 1, 2, 3])
    async def test_chinese_wall(self, ring, service, connect, depth):
        steps = chinese_wall_script(depth)
        outcomes = await _play(steps, ring, await connect("in-process", service))
        assert expected_mismatches(steps, outcomes) == []


# ---------------------------------------------------------------------------
# Randomized worlds
# ---------------------------------------------------------------------------


class TestRandomWorlds:
    @pytest.mark.parametrize("seed", WORLD_SEEDS)
    async def test_policies(self, ring, service, connect, seed):
        steps = random_policy_world(random.Random(seed))
        await _play(steps, ring, await connect("in-process", service))

    @pytest.mark.parametrize("seed", WORLD_SEEDS)
    async def test_rbac(self, ring, service, connect, seed):
        steps = random_rbac_world(random.Random(seed))
        await _play(steps, ring, await connect("in-process", service))

    @pytest.mark.parametrize("seed", WORLD_SEEDS)
    async def test_constraints(self, ring, service, connect, seed):
        steps = random_constraint_world(random.Random(seed))
        await _play(steps, ring, await connect("in-process", service))

    def test_worlds_make_both_decisions(self):
        """The generators produce permits and denies, not one or the other."""
        permits = set()
        for seed in WORLD_SEEDS:
            steps = random_policy_world(random.Random(seed), policies=6, requests=20)
            outcomes = OracleWorld().run(steps)
            permits.update(o[1] for o in outcomes if o[0] == "decision")
        assert permits == {True, False}


# ---------------------------------------------------------------------------
# Full-size runs
# ---------------------------------------------------------------------------


async def _disagrees(steps, ring) -> bool:
    pdp = PolicyDecisionPoint.in_memory(ring.params, ring.servers.values())
    transport = InProcessClient(PolicyDecisionService(pdp, test_mode=True))
    try:
        outcomes = await run_encrypted(steps, policy_clients(ring, transport))
    finally:
        await transport.close()
    return comparable(outcomes) != OracleWorld().run(steps)


@pytest.mark.acceptance
@pytest.mark.parametrize(
    ("kind", "first"),
    [(kind, first) for kind, total in ACCEPTANCE_WORLDS.items() for first in range(0, total, CHUNK)],
)
async def test_acceptance_worlds(ring, kind, first):
    generate = GENERATORS[kind]
    seeds = range(first, first + CHUNK)
    disagreeing = [seed for seed in seeds if await _disagrees(generate(random.Random(seed)), ring)]
    assert disagreeing == []
