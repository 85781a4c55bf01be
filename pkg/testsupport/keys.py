"""Key material for tests.

Group generation is the slow part of every test that needs distinct
elements, so the mid-size group is built once per process and shared.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from blindpdp.sde import (
    ClientKeySet,
    KeyStore,
    MasterSecretKey,
    PublicParams,
    ServerKeySet,
    client_enc,
    client_td,
    init,
    keygen,
    match,
    server_reenc,
    server_td,
    toy_params,
)
from blindpdp.tkma import issue_rng

__all__ = (
    "MID_BITS",
    "MID_SUBGROUP_BITS",
    "TEST_SEED",
    "cross_user_failures",
    "KeyRing",
    "key_ring",
    "mid_group",
    "mid_ring",
    "toy_ring",
)

# 512-bit modulus, 160-bit subgroup: collisions between distinct elements
# are out of reach while exponentiation stays cheap.
MID_BITS = 512
MID_SUBGROUP_BITS = 160
TEST_SEED = 20240611


@lru_cache(maxsize=None)
def mid_group(seed: int = TEST_SEED) -> tuple[PublicParams, MasterSecretKey]:
    return init(MID_BITS, seed, subgroup_bits=MID_SUBGROUP_BITS)


@dataclass
class KeyRing:
    """Issued key pairs for a fixed set of users."""

    params: PublicParams
    msk: MasterSecretKey
    clients: dict[str, ClientKeySet] = field(default_factory=dict)
    servers: dict[str, ServerKeySet] = field(default_factory=dict)

    def issue(self, user_id: str, *, seed: int = TEST_SEED) -> ClientKeySet:
        client, server = keygen(self.msk, self.params, user_id, rng=issue_rng(seed, user_id))
        self.clients[user_id] = client
        self.servers[user_id] = server
        return client

    def keystore(self) -> KeyStore:
        return KeyStore(self.servers.values())

    def __getitem__(self, user_id: str) -> ClientKeySet:
        return self.clients[user_id]


def key_ring(
    params: PublicParams,
    msk: MasterSecretKey,
    user_ids: Iterable[str],
    *,
    seed: int = TEST_SEED,
) -> KeyRing:
    ring = KeyRing(params, msk)
    for user_id in user_ids:
        ring.issue(user_id, seed=seed)
    return ring


def mid_ring(*user_ids: str, seed: int = TEST_SEED) -> KeyRing:
    params, msk = mid_group()
    return key_ring(params, msk, user_ids, seed=seed)


def toy_ring(*user_ids: str, seed: int = TEST_SEED) -> KeyRing:
    params, msk = toy_params()
    return key_ring(params, msk, user_ids, seed=seed)


def cross_user_failures(
    params: PublicParams, msk: MasterSecretKey, pairs: int, *, seed: int = TEST_SEED
) -> list[tuple[str, str]]:
    """Encrypt as one random user and search as another, ``pairs`` times.

    Each round also searches with a different element, which must not
    match. Returns the (element, other) rounds that went wrong.
    """
    rng = random.Random(seed)
    users = [keygen(msk, params, f"user-{i}", rng=rng) for i in range(16)]
    failures: list[tuple[str, str]] = []
    for _ in range(pairs):
        (ka, sa), (kb, sb) = rng.sample(users, 2)
        first, second = (f"element-{n}" for n in rng.sample(range(1 << 32), 2))
        c = server_reenc(client_enc(first, ka, params, rng=rng), sa, params)
        same = server_td(client_td(first, kb, params, rng=rng), sb, params)
        other = server_td(client_td(second, kb, params, rng=rng), sb, params)
        if not match(c, same, params) or match(c, other, params):
            failures.append((first, second))
    return failures
