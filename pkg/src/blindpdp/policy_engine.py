"""Encrypted ⟨S, A, T⟩ policies with encrypted condition trees.

Deployment is two rounds: the administrator client-encrypts the tuple and
every condition leaf, the server re-encrypts them with the administrator's
server key. Requests arrive as client trapdoors, which the server turns
into master-keyed trapdoors and matches against the stored ciphertexts.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import _telemetry
from .locking import Collection, IdSequence
from .policy import (
    NO_MATCHING_POLICY,
    AttributeSet,
    Decision,
    SatTuple,
    TreeNode,
    compile_condition,
    evaluate_tree,
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
    match_any,
    server_reenc,
    server_td,
)

ClientTuple = tuple[ClientEncryptedElement, ClientEncryptedElement, ClientEncryptedElement]
ServerTuple = tuple[ServerEncryptedElement, ServerEncryptedElement, ServerEncryptedElement]


@dataclass(frozen=True)
class ClientPolicy:
    """Administrator-side output of the first deployment round."""

    tuple: ClientTuple
    condition: TreeNode | None = None


@dataclass(frozen=True)
class EncryptedPolicy:
    policy_id: str
    tuple: ServerTuple
    condition: TreeNode | None = None


@dataclass(frozen=True)
class EncryptedRequestTuple:
    requester_id: str
    trapdoors: tuple[ClientTrapdoor, ClientTrapdoor, ClientTrapdoor]


@dataclass(frozen=True)
class EncryptedAttributeList:
    source_id: str
    items: tuple[ClientTrapdoor, ...] = ()


# ---------------------------------------------------------------------------
# Deployment
# ---------------------------------------------------------------------------


def condition_enc(
    tree: TreeNode,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> TreeNode:
    """Compile numeric leaves, fold constants, client-encrypt every leaf.

    Leaves carrying the same element share one ciphertext, so a compiled
    comparison over s bits costs at most 2s encryptions.
    """
    compiled = compile_condition(tree)
    encrypt = functools.cache(lambda e: client_enc(e, key, params, rng=rng))
    return compiled.map_leaves(encrypt)


def condition_reenc(
    tree: TreeNode, admin_id: str, keystore: KeyStore, params: PublicParams
) -> TreeNode:
    sk = keystore.get(admin_id)
    reencrypt = functools.cache(lambda c: server_reenc(c, sk, params))
    return tree.map_leaves(reencrypt)


def sat_enc(
    t: SatTuple,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientTuple:
    s, a, tg = (client_enc(e, key, params, rng=rng) for e in t.elements())
    return (s, a, tg)


def sat_reenc(
    ct: ClientTuple, admin_id: str, keystore: KeyStore, params: PublicParams
) -> ServerTuple:
    sk = keystore.get(admin_id)
    s, a, t = (server_reenc(c, sk, params) for c in ct)
    return (s, a, t)


def policy_enc(
    t: SatTuple,
    condition: TreeNode | None,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientPolicy:
    return ClientPolicy(
        tuple=sat_enc(t, key, params, rng=rng),
        condition=(
            None if condition is None else condition_enc(condition, key, params, rng=rng)
        ),
    )


def policy_reenc(
    client_policy: ClientPolicy,
    admin_id: str,
    keystore: KeyStore,
    params: PublicParams,
    policy_id: str,
) -> EncryptedPolicy:
    condition = client_policy.condition
    return EncryptedPolicy(
        policy_id=policy_id,
        tuple=sat_reenc(client_policy.tuple, admin_id, keystore, params),
        condition=(
            None
            if condition is None
            else condition_reenc(condition, admin_id, keystore, params)
        ),
    )


# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------


def sat_request(
    t: SatTuple,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> EncryptedRequestTuple:
    s, a, tg = (client_td(e, key, params, rng=rng) for e in t.elements())
    return EncryptedRequestTuple(key.user_id, (s, a, tg))


def attributes_request(
    attrs: AttributeSet,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> EncryptedAttributeList:
    """One trapdoor per string attribute, ``bits`` per numeric attribute."""
    items = tuple(client_td(e, key, params, rng=rng) for e in attrs.elements())
    return EncryptedAttributeList(source_id=key.user_id, items=items)


def sat_search(
    req: EncryptedRequestTuple,
    store: Iterable[EncryptedPolicy],
    keystore: KeyStore,
    params: PublicParams,
) -> list[str]:
    """Ids of every stored policy whose S, A and T all match the request."""
    sk = keystore.get(req.requester_id)
    ts, ta, tt = (server_td(td, sk, params) for td in req.trapdoors)
    hits: list[str] = []
    for policy in store:
        s, a, t = policy.tuple
        if match(s, ts, params) and match(a, ta, params) and match(t, tt, params):
            hits.append(policy.policy_id)
    return hits


def server_attribute_trapdoors(
    attrs: EncryptedAttributeList | None, keystore: KeyStore, params: PublicParams
) -> list[ServerTrapdoor]:
    if attrs is None:
        return []
    sk = keystore.get(attrs.source_id)
    return [server_td(td, sk, params) for td in attrs.items]


def evaluate_condition(
    condition: TreeNode | None,
    trapdoors: Sequence[ServerTrapdoor],
    params: PublicParams,
) -> bool:
    """A leaf is true when some attribute trapdoor matches its ciphertext.

    Evaluation runs on a private copy so one stored tree can be evaluated
    by many requests at once. Each distinct ciphertext is matched once.
    """
    if condition is None:
        return True
    tree = condition.copy()
    return evaluate_tree(tree, functools.cache(lambda c: match_any(c, trapdoors, params)))


def condition_evaluation(
    attrs: EncryptedAttributeList | None,
    policy: EncryptedPolicy,
    keystore: KeyStore,
    params: PublicParams,
) -> bool:
    tds = server_attribute_trapdoors(attrs, keystore, params)
    return evaluate_condition(policy.condition, tds, params)


def user_revocation(user_id: str, keystore: KeyStore) -> bool:
    return keystore.remove(user_id)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class PolicyEngine:
    """Policy store plus the search and condition-evaluation phases."""

    def __init__(
        self,
        params: PublicParams,
        keystore: KeyStore,
        *,
        policies: Iterable[EncryptedPolicy] = (),
        ids: IdSequence | None = None,
    ) -> None:
        self.params = params
        self.keystore = keystore
        self.ids = ids or IdSequence()
        self.store: Collection[EncryptedPolicy] = Collection(
            (p.policy_id, p) for p in policies
        )

    def deploy_policy(self, admin_id: str, client_policy: ClientPolicy) -> EncryptedPolicy:
        # resolve the admin before burning an id
        self.keystore.get(admin_id)
        policy = policy_reenc(
            client_policy, admin_id, self.keystore, self.params, self.ids.next("policy")
        )
        self.store.put(policy.policy_id, policy)
        _telemetry.log("info", "policy deployed", policy_id=policy.policy_id, admin=admin_id)
        return policy

    def delete_policy(self, policy_id: str) -> bool:
        return self.store.remove(policy_id)

    def policies(self) -> tuple[EncryptedPolicy, ...]:
        return self.store.snapshot()

    def evaluate_request(
        self,
        request: EncryptedRequestTuple,
        attributes: EncryptedAttributeList | None = None,
    ) -> Decision:
        """Permit iff some matching policy has a satisfied condition."""
        snapshot = self.store.snapshot()
        hits = sat_search(request, snapshot, self.keystore, self.params)
        if not hits:
            return Decision.deny(NO_MATCHING_POLICY)
        by_id = {p.policy_id: p for p in snapshot}
        tds = server_attribute_trapdoors(attributes, self.keystore, self.params)
        permitted = [
            pid for pid in hits if evaluate_condition(by_id[pid].condition, tds, self.params)
        ]
        if not permitted:
            return Decision.deny(NO_MATCHING_POLICY)
        return Decision.grant(permitted)

    def revoke_user(self, user_id: str) -> bool:
        removed = user_revocation(user_id, self.keystore)
        _telemetry.log("info", "user revoked", user=user_id, removed=removed)
        return removed
