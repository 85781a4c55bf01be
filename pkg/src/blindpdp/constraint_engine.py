"""History-based dynamic constraints over encrypted requests.

Two constraint kinds are supported:

* ``hbdsod``: a user may perform at most ``max_actions`` of a group of
  conflicting actions (or roles) on the same object instance. Tree shape:
  ``and(or(member, member, ...), objtype, context...)``.
* ``cw`` (Chinese Wall): once a user has accessed one branch of a
  conflict-of-interest class, every other branch is closed to them. Tree
  shape: ``or(and(objtype, domain-1, ..., domain-Z), ...)``, or
  ``or(and(objtype, instance), ...)`` when conflicts are between objects.

Constraint leaves store both a ciphertext and a trapdoor. The ciphertexts
are matched against the request's trapdoors to decide whether a constraint
applies; the trapdoors are matched against the ciphertexts in the
requester's access history to find a violation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import _telemetry
from .errors import InvalidConstraintError
from .locking import Collection, IdSequence, KeyedLocks
from .policy import (
    ACTION,
    CONSTRAINT_VIOLATION,
    CONTEXT,
    INSTANCE,
    OBJTYPE,
    OR,
    ROLE,
    AttributeSet,
    Decision,
    LabeledElement,
    TreeNode,
    and_,
    domain_label,
    domain_level,
    evaluate_tree,
    leaf,
    or_,
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

HBDSOD = "hbdsod"
CHINESE_WALL = "cw"
CONSTRAINT_KINDS = (HBDSOD, CHINESE_WALL)

_REQUIRED_LABELS = (ROLE, ACTION, OBJTYPE, INSTANCE)


# ---------------------------------------------------------------------------
# Cleartext constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintOptions:
    """Cleartext knobs the server reads next to the encrypted tree."""

    max_actions: int = 1
    deny_repeat: bool = False
    bind_instance: bool = True
    group_label: str = ACTION


def _label(node: TreeNode) -> str:
    return node.payload.label


def validate_constraint_shape(kind: str, tree: TreeNode, options: ConstraintOptions) -> None:
    """Check a constraint tree whose leaf payloads carry a ``label``."""
    if kind == HBDSOD:
        _validate_hbdsod(tree, options)
    elif kind == CHINESE_WALL:
        _validate_chinese_wall(tree)
    else:
        raise InvalidConstraintError(f"unknown constraint kind {kind!r}")


def _validate_hbdsod(tree: TreeNode, options: ConstraintOptions) -> None:
    if options.group_label not in (ACTION, ROLE):
        raise InvalidConstraintError("the conflicting group must be actions or roles")
    if tree.kind != "gate" or tree.threshold != len(tree.children):
        raise InvalidConstraintError("an hbdsod constraint is an and-gate")
    groups = [c for c in tree.children if c.kind == "gate"]
    leaves = [c for c in tree.children if c.kind == "leaf"]
    if len(groups) != 1 or len(groups) + len(leaves) != len(tree.children):
        raise InvalidConstraintError("an hbdsod constraint has exactly one member group")
    group = groups[0]
    if group.gate != OR or any(m.kind != "leaf" for m in group.children):
        raise InvalidConstraintError("the member group is an or-gate over leaves")
    if len(group.children) < 2:
        raise InvalidConstraintError("the member group needs at least two members")
    if any(_label(m) != options.group_label for m in group.children):
        raise InvalidConstraintError(f"group members must be labelled {options.group_label}")
    labels = [_label(c) for c in leaves]
    if labels.count(OBJTYPE) != 1:
        raise InvalidConstraintError("an hbdsod constraint binds exactly one object type")
    if any(label not in (OBJTYPE, CONTEXT) for label in labels):
        raise InvalidConstraintError("binding leaves are the object type and context")
    # a repeat counts as a performed member, so a wider allowance never applies
    if options.deny_repeat and options.max_actions != 1:
        raise InvalidConstraintError("deny_repeat requires max_actions=1")
    limit = len(group.children) - 1
    if not 1 <= options.max_actions <= limit:
        raise InvalidConstraintError(f"max_actions must lie in 1..{limit}")


def _validate_chinese_wall(tree: TreeNode) -> None:
    if tree.kind != "gate" or tree.gate != OR or len(tree.children) < 2:
        raise InvalidConstraintError("a chinese wall is an or-gate over at least two branches")
    shapes = set()
    for branch in tree.children:
        if branch.kind != "gate" or branch.threshold != len(branch.children):
            raise InvalidConstraintError("every chinese wall branch is an and-gate")
        if any(c.kind != "leaf" for c in branch.children):
            raise InvalidConstraintError("chinese wall branches hold leaves only")
        labels = [_label(c) for c in branch.children]
        if labels.count(OBJTYPE) != 1:
            raise InvalidConstraintError("every branch binds exactly one object type")
        rest = [label for label in labels if label != OBJTYPE]
        if rest == [INSTANCE]:
            shapes.add(0)
            continue
        levels = sorted(domain_level(label) or 0 for label in rest)
        if not levels or levels != list(range(1, len(levels) + 1)):
            raise InvalidConstraintError(
                "branch domains must be contiguous levels from 1, or a single instance"
            )
        shapes.add(len(levels))
    if len(shapes) != 1:
        raise InvalidConstraintError("all branches need the same depth")


@dataclass
class ConstraintSpec:
    """A cleartext constraint; leaf payloads are ``LabeledElement``."""

    kind: str
    tree: TreeNode
    options: ConstraintOptions = field(default_factory=ConstraintOptions)

    def __post_init__(self) -> None:
        validate_constraint_shape(self.kind, self.tree, self.options)


def hbdsod_constraint(
    members: Sequence[str],
    objtype: str,
    context: Sequence[str] = (),
    *,
    max_actions: int = 1,
    deny_repeat: bool = False,
    bind_instance: bool = True,
    group_label: str = ACTION,
) -> ConstraintSpec:
    group = or_(*(leaf(LabeledElement(group_label, m)) for m in members))
    tree = and_(
        group,
        leaf(LabeledElement(OBJTYPE, objtype)),
        *(leaf(LabeledElement(CONTEXT, c)) for c in context),
    )
    options = ConstraintOptions(
        max_actions=max_actions,
        deny_repeat=deny_repeat,
        bind_instance=bind_instance,
        group_label=group_label,
    )
    return ConstraintSpec(HBDSOD, tree, options)


def chinese_wall_constraint(
    objtype: str,
    branches: Sequence[Sequence[str]],
    *,
    by_instance: bool = False,
) -> ConstraintSpec:
    """Each branch is a domain path (``["Google", "Marketing"]``) or, with
    ``by_instance``, a single object instance."""
    built: list[TreeNode] = []
    for path in branches:
        if by_instance:
            if len(path) != 1:
                raise InvalidConstraintError("instance branches name exactly one instance")
            tail = [leaf(LabeledElement(INSTANCE, path[0]))]
        else:
            tail = [
                leaf(LabeledElement(domain_label(level), value))
                for level, value in enumerate(path, start=1)
            ]
        built.append(and_(leaf(LabeledElement(OBJTYPE, objtype)), *tail))
    return ConstraintSpec(CHINESE_WALL, or_(*built))


# ---------------------------------------------------------------------------
# Encrypted constraints, requests and history
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClientConstraintLeaf:
    label: str
    cipher: ClientEncryptedElement
    trapdoor: ClientTrapdoor


@dataclass(frozen=True)
class ConstraintLeaf:
    label: str
    cipher: ServerEncryptedElement
    trapdoor: ServerTrapdoor


@dataclass(frozen=True)
class ClientConstraint:
    kind: str
    tree: TreeNode
    options: ConstraintOptions = field(default_factory=ConstraintOptions)

    def __post_init__(self) -> None:
        validate_constraint_shape(self.kind, self.tree, self.options)


@dataclass(frozen=True)
class ConstraintTree:
    constraint_id: str
    kind: str
    tree: TreeNode
    options: ConstraintOptions = field(default_factory=ConstraintOptions)

    def __post_init__(self) -> None:
        validate_constraint_shape(self.kind, self.tree, self.options)


@dataclass(frozen=True)
class RequestElement:
    label: str
    trapdoor: ClientTrapdoor
    cipher: ClientEncryptedElement


@dataclass(frozen=True)
class EgrantRequest:
    requester_id: str
    elements: tuple[RequestElement, ...]

    def __post_init__(self) -> None:
        labels = [e.label for e in self.elements]
        for required in _REQUIRED_LABELS:
            if labels.count(required) != 1:
                raise InvalidConstraintError(f"request needs exactly one {required} element")
        levels = sorted(domain_level(label) or 0 for label in labels if domain_level(label))
        if levels != list(range(1, len(levels) + 1)):
            raise InvalidConstraintError("request domain levels must be contiguous from 1")
        for label in labels:
            if label not in _REQUIRED_LABELS and label != CONTEXT and not domain_level(label):
                raise InvalidConstraintError(f"unknown request label {label!r}")


@dataclass(frozen=True)
class SessionRecord:
    """Server-encrypted elements of one granted request."""

    elements: tuple[tuple[str, ServerEncryptedElement], ...]

    def ciphers(self, label: str) -> list[ServerEncryptedElement]:
        return [c for lab, c in self.elements if lab == label]


class AccessHistory:
    """Append-only per-requester record lists."""

    def __init__(self, records: Mapping[str, Iterable[SessionRecord]] | None = None) -> None:
        self._records: dict[str, tuple[SessionRecord, ...]] = {
            requester: tuple(recs) for requester, recs in (records or {}).items()
        }
        self._lock = threading.Lock()

    def records(self, requester_id: str) -> tuple[SessionRecord, ...]:
        return self._records.get(requester_id, ())

    def requesters(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    def append(self, requester_id: str, record: SessionRecord) -> None:
        with self._lock:
            self._records[requester_id] = self.records(requester_id) + (record,)

    def __len__(self) -> int:
        with self._lock:
            records = list(self._records.values())
        return sum(len(recs) for recs in records)


def constraint_enc(
    spec: ConstraintSpec,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> ClientConstraint:
    def encrypt(item: LabeledElement) -> ClientConstraintLeaf:
        e = item.element
        return ClientConstraintLeaf(
            label=item.label,
            cipher=client_enc(e, key, params, rng=rng),
            trapdoor=client_td(e, key, params, rng=rng),
        )

    return ClientConstraint(spec.kind, spec.tree.map_leaves(encrypt), spec.options)


def constraint_reenc(
    constraint: ClientConstraint,
    admin_id: str,
    keystore: KeyStore,
    params: PublicParams,
    constraint_id: str,
) -> ConstraintTree:
    sk = keystore.get(admin_id)

    def reencrypt(item: ClientConstraintLeaf) -> ConstraintLeaf:
        return ConstraintLeaf(
            label=item.label,
            cipher=server_reenc(item.cipher, sk, params),
            trapdoor=server_td(item.trapdoor, sk, params),
        )

    return ConstraintTree(
        constraint_id, constraint.kind, constraint.tree.map_leaves(reencrypt), constraint.options
    )


def constraint_deploy(
    spec: ConstraintSpec,
    admin_key: ClientKeySet,
    keystore: KeyStore,
    params: PublicParams,
    *,
    constraint_id: str,
    rng: RandomSource | None = None,
) -> ConstraintTree:
    client = constraint_enc(spec, admin_key, params, rng=rng)
    return constraint_reenc(client, admin_key.user_id, keystore, params, constraint_id)


def request_labels(
    role: str,
    action: str,
    objtype: str,
    instance: str,
    domains: Sequence[str] = (),
    context: AttributeSet | None = None,
) -> list[LabeledElement]:
    labeled = [
        LabeledElement(ROLE, role),
        LabeledElement(ACTION, action),
        LabeledElement(OBJTYPE, objtype),
        LabeledElement(INSTANCE, instance),
    ]
    labeled.extend(
        LabeledElement(domain_label(level), d) for level, d in enumerate(domains, start=1)
    )
    if context is not None:
        labeled.extend(LabeledElement(CONTEXT, e) for e in context.elements())
    return labeled


def request_generate(
    role: str,
    action: str,
    objtype: str,
    instance: str,
    domains: Sequence[str],
    context: AttributeSet | None,
    key: ClientKeySet,
    params: PublicParams,
    *,
    rng: RandomSource | None = None,
) -> EgrantRequest:
    """Trapdoor and ciphertext for every labelled request element."""
    elements = tuple(
        RequestElement(
            label=item.label,
            trapdoor=client_td(item.element, key, params, rng=rng),
            cipher=client_enc(item.element, key, params, rng=rng),
        )
        for item in request_labels(role, action, objtype, instance, domains, context)
    )
    return EgrantRequest(key.user_id, elements)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

RequestTrapdoors = Mapping[str, Sequence[ServerTrapdoor]]


def _evaluated(
    constraint: ConstraintTree, trapdoors: RequestTrapdoors, params: PublicParams
) -> TreeNode:
    tree = constraint.tree.copy()
    # every leaf is decided: the violation probe reads the unmatched ones
    evaluate_tree(
        tree,
        lambda lf: match_any(lf.cipher, trapdoors.get(lf.label, ()), params),
        short_circuit=False,
    )
    return tree


def check_tree_satisfiability(
    constraint: ConstraintTree | None,
    trapdoors: RequestTrapdoors,
    params: PublicParams,
) -> bool:
    """True when the request falls under the constraint.

    A missing constraint is satisfied by every request.
    """
    if constraint is None:
        return True
    return bool(_evaluated(constraint, trapdoors, params).decision)


def _record_has(
    record: SessionRecord, label: str, trapdoor: ServerTrapdoor, params: PublicParams
) -> bool:
    return any(match(c, trapdoor, params) for c in record.ciphers(label))


def _hbdsod_violated(
    evaluated: TreeNode,
    options: ConstraintOptions,
    trapdoors: RequestTrapdoors,
    records: Sequence[SessionRecord],
    params: PublicParams,
) -> bool:
    group = next(c for c in evaluated.children if c.kind == "gate")
    members = [
        (i, m.payload.trapdoor)
        for i, m in enumerate(group.children)
        if options.deny_repeat or not m.decision
    ]
    bindings = [(OBJTYPE, trapdoors[OBJTYPE][0])]
    if options.bind_instance:
        bindings.append((INSTANCE, trapdoors[INSTANCE][0]))
    bindings.extend(
        (CONTEXT, c.payload.trapdoor)
        for c in evaluated.children
        if c.kind == "leaf" and c.payload.label == CONTEXT
    )
    performed: set[int] = set()
    for record in records:
        if not all(_record_has(record, label, t, params) for label, t in bindings):
            continue
        for index, trapdoor in members:
            if index not in performed and _record_has(
                record, options.group_label, trapdoor, params
            ):
                performed.add(index)
        if len(performed) >= options.max_actions:
            return True
    return False


def _chinese_wall_violated(
    evaluated: TreeNode, records: Sequence[SessionRecord], params: PublicParams
) -> bool:
    closed = [b for b in evaluated.children if not b.decision]
    for record in records:
        for branch in closed:
            if all(
                _record_has(record, lf.payload.label, lf.payload.trapdoor, params)
                for lf in branch.children
            ):
                return True
    return False


def constraint_eval_session_up(
    request: EgrantRequest,
    constraints: Iterable[ConstraintTree],
    history: AccessHistory,
    keystore: KeyStore,
    params: PublicParams,
) -> bool:
    """Decide a request and, when granted, append it to the history.

    Must run inside the requester's critical section.
    """
    sk = keystore.get(request.requester_id)
    trapdoors: dict[str, list[ServerTrapdoor]] = {}
    for item in request.elements:
        trapdoors.setdefault(item.label, []).append(server_td(item.trapdoor, sk, params))
    records = history.records(request.requester_id)

    for constraint in constraints:
        evaluated = _evaluated(constraint, trapdoors, params)
        if not evaluated.decision:
            continue
        if constraint.kind == HBDSOD:
            violated = _hbdsod_violated(
                evaluated, constraint.options, trapdoors, records, params
            )
        else:
            violated = _chinese_wall_violated(evaluated, records, params)
        if violated:
            _telemetry.log(
                "info",
                "constraint violated",
                requester=request.requester_id,
                constraint_id=constraint.constraint_id,
            )
            return False

    record = SessionRecord(
        tuple((item.label, server_reenc(item.cipher, sk, params)) for item in request.elements)
    )
    history.append(request.requester_id, record)
    return True


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class ConstraintEngine:
    """Constraint store plus the access history.

    Each requester's evaluate-then-append runs under that requester's lock,
    so concurrent requests of one user are decided one after the other.
    """

    def __init__(
        self,
        params: PublicParams,
        keystore: KeyStore,
        *,
        constraints: Iterable[ConstraintTree] = (),
        history: AccessHistory | None = None,
        ids: IdSequence | None = None,
    ) -> None:
        self.params = params
        self.keystore = keystore
        self.ids = ids or IdSequence()
        self.store: Collection[ConstraintTree] = Collection(
            (c.constraint_id, c) for c in constraints
        )
        self.history = history or AccessHistory()
        self._requester_locks = KeyedLocks()

    def deploy_constraint(self, admin_id: str, constraint: ClientConstraint) -> ConstraintTree:
        self.keystore.get(admin_id)
        deployed = constraint_reenc(
            constraint, admin_id, self.keystore, self.params, self.ids.next("constraint")
        )
        self.store.put(deployed.constraint_id, deployed)
        _telemetry.log(
            "info", "constraint deployed", constraint_id=deployed.constraint_id, kind=deployed.kind
        )
        return deployed

    def delete_constraint(self, constraint_id: str) -> bool:
        return self.store.remove(constraint_id)

    def constraints(self) -> tuple[ConstraintTree, ...]:
        return self.store.snapshot()

    def evaluate(self, request: EgrantRequest) -> Decision:
        with self._requester_locks.hold(request.requester_id):
            granted = constraint_eval_session_up(
                request, self.store.snapshot(), self.history, self.keystore, self.params
            )
        return Decision.grant() if granted else Decision.deny(CONSTRAINT_VIOLATION)

    def dump_history(self, requester_id: str) -> tuple[SessionRecord, ...]:
        return self.history.records(requester_id)
