"""Document codec for keys, ciphertexts, trees, stores and wire payloads.

Big integers are lowercase big-endian hex without leading zeros, digests
are lowercase hex. Documents are dumped with sorted keys, so
dump -> load -> dump is byte-identical.
"""

from __future__ import annotations

import json
import re
from contextlib import contextmanager
from typing import Any, Callable, Iterator

from .constraint_engine import (
    ClientConstraint,
    ClientConstraintLeaf,
    ConstraintLeaf,
    ConstraintOptions,
    ConstraintTree,
    EgrantRequest,
    RequestElement,
    SessionRecord,
)
from .errors import Error, StoreFormatError
from .policy import AND, OR, THRESHOLD, Decision, TreeNode, const, leaf
from .policy_engine import (
    ClientPolicy,
    EncryptedAttributeList,
    EncryptedPolicy,
    EncryptedRequestTuple,
)
from .rbac_engine import (
    AccessRequest,
    ActiveRole,
    ClientHierarchyNode,
    ClientPermissionAssignment,
    ClientRoleAssignment,
    ClientRoleHierarchy,
    HierarchyNode,
    PermissionAssignment,
    RoleActivationRequest,
    RoleAssignment,
    RoleHierarchyGraph,
)
from .sde import (
    ClientEncryptedElement,
    ClientKeySet,
    ClientTrapdoor,
    MasterSecretKey,
    PublicParams,
    ServerEncryptedElement,
    ServerKeySet,
    ServerTrapdoor,
)

Document = dict[str, Any]

_HEX_INT = re.compile(r"^(0|[1-9a-f][0-9a-f]*)$")
_HEX_BYTES = re.compile(r"^([0-9a-f]{2})*$")


def dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise StoreFormatError(f"Invalid JSON document: {e}") from e


@contextmanager
def _loading(what: str) -> Iterator[None]:
    try:
        yield
    except Error:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, IndexError) as e:
        raise StoreFormatError(f"Malformed {what} document: {e!r}") from e


def encode_int(n: int) -> str:
    if n < 0:
        raise ValueError("negative integers are not serialized")
    return format(n, "x")


def decode_int(text: str) -> int:
    if not isinstance(text, str) or not _HEX_INT.match(text):
        raise StoreFormatError(f"Expected lowercase hex integer, got {text!r}")
    return int(text, 16)


def encode_bytes(data: bytes) -> str:
    return data.hex()


def decode_bytes(text: str) -> bytes:
    if not isinstance(text, str) or not _HEX_BYTES.match(text):
        raise StoreFormatError(f"Expected lowercase hex digest, got {text!r}")
    return bytes.fromhex(text)


def _optional(value: Any, fn: Callable[[Any], Any]) -> Any:
    return None if value is None else fn(value)


class DocumentCodec:
    """Converts engine objects to and from JSON-ready documents."""

    # -- key material -------------------------------------------------------

    def dump_params(self, params: PublicParams) -> Document:
        return {
            "p": encode_int(params.p),
            "q": encode_int(params.q),
            "g": encode_int(params.g),
            "h": encode_int(params.h),
            "hash_id": params.hash_id,
            "prf_id": params.prf_id,
            "security_bits": params.security_bits,
        }

    def load_params(self, doc: Document) -> PublicParams:
        with _loading("params"):
            params = PublicParams(
                p=decode_int(doc["p"]),
                q=decode_int(doc["q"]),
                g=decode_int(doc["g"]),
                h=decode_int(doc["h"]),
                hash_id=doc["hash_id"],
                prf_id=doc["prf_id"],
                security_bits=int(doc["security_bits"]),
            )
        try:
            params.validate()
        except Error as e:
            raise StoreFormatError(f"Inconsistent public parameters: {e}") from e
        return params

    def dump_msk(self, msk: MasterSecretKey) -> Document:
        return {"x": encode_int(msk.x), "s": encode_bytes(msk.s)}

    def load_msk(self, doc: Document) -> MasterSecretKey:
        with _loading("master key"):
            return MasterSecretKey(x=decode_int(doc["x"]), s=decode_bytes(doc["s"]))

    def dump_client_key(self, key: ClientKeySet) -> Document:
        return {"user_id": key.user_id, "x1": encode_int(key.x1), "s": encode_bytes(key.s)}

    def load_client_key(self, doc: Document) -> ClientKeySet:
        with _loading("client key"):
            return ClientKeySet(
                user_id=str(doc["user_id"]),
                x1=decode_int(doc["x1"]),
                s=decode_bytes(doc["s"]),
            )

    def dump_server_key(self, key: ServerKeySet) -> Document:
        return {"user_id": key.user_id, "x2": encode_int(key.x2)}

    def load_server_key(self, doc: Document) -> ServerKeySet:
        with _loading("server key"):
            return ServerKeySet(user_id=str(doc["user_id"]), x2=decode_int(doc["x2"]))

    # -- ciphertexts and trapdoors ---------------------------------------------

    def dump_client_cipher(self, c: ClientEncryptedElement) -> Document:
        return {
            "c1_hat": encode_int(c.c1_hat),
            "c2_hat": encode_int(c.c2_hat),
            "c3_hat": encode_bytes(c.c3_hat),
        }

    def load_client_cipher(self, doc: Document) -> ClientEncryptedElement:
        with _loading("client ciphertext"):
            return ClientEncryptedElement(
                c1_hat=decode_int(doc["c1_hat"]),
                c2_hat=decode_int(doc["c2_hat"]),
                c3_hat=decode_bytes(doc["c3_hat"]),
            )

    def dump_cipher(self, c: ServerEncryptedElement) -> Document:
        return {"c1": encode_int(c.c1), "c2": encode_bytes(c.c2)}

    def load_cipher(self, doc: Document) -> ServerEncryptedElement:
        with _loading("ciphertext"):
            return ServerEncryptedElement(c1=decode_int(doc["c1"]), c2=decode_bytes(doc["c2"]))

    def dump_client_trapdoor(self, t: ClientTrapdoor) -> Document:
        return {"t1": encode_int(t.t1), "t2": encode_int(t.t2)}

    def load_client_trapdoor(self, doc: Document) -> ClientTrapdoor:
        with _loading("client trapdoor"):
            return ClientTrapdoor(t1=decode_int(doc["t1"]), t2=decode_int(doc["t2"]))

    def dump_trapdoor(self, t: ServerTrapdoor) -> Document:
        return {"t": encode_int(t.t)}

    def load_trapdoor(self, doc: Document) -> ServerTrapdoor:
        with _loading("trapdoor"):
            return ServerTrapdoor(t=decode_int(doc["t"]))

    # -- trees --------------------------------------------------------------

    def dump_tree(self, node: TreeNode, dump_leaf: Callable[[Any], Any]) -> Document:
        if node.kind == "leaf":
            return {"leaf": dump_leaf(node.payload)}
        if node.kind == "const":
            return {"const": bool(node.value)}
        doc: Document = {
            "gate": node.gate,
            "children": [self.dump_tree(c, dump_leaf) for c in node.children],
        }
        if node.gate == THRESHOLD:
            doc["k"] = node.k
        return doc

    def load_tree(self, doc: Document, load_leaf: Callable[[Any], Any]) -> TreeNode:
        with _loading("tree"):
            if "leaf" in doc:
                return leaf(load_leaf(doc["leaf"]))
            if "const" in doc:
                if not isinstance(doc["const"], bool):
                    raise StoreFormatError("const nodes hold a boolean")
                return const(doc["const"])
            gate = doc["gate"]
            if gate not in (AND, OR, THRESHOLD):
                raise StoreFormatError(f"unknown gate {gate!r}")
            return TreeNode(
                "gate",
                gate=gate,
                k=int(doc["k"]) if gate == THRESHOLD else None,
                children=[self.load_tree(c, load_leaf) for c in doc["children"]],
            )

    def _dump_condition(self, tree: TreeNode | None) -> Document | None:
        return _optional(tree, lambda t: self.dump_tree(t, self.dump_cipher))

    def _load_condition(self, doc: Document | None) -> TreeNode | None:
        return _optional(doc, lambda d: self.load_tree(d, self.load_cipher))

    def _dump_client_condition(self, tree: TreeNode | None) -> Document | None:
        return _optional(tree, lambda t: self.dump_tree(t, self.dump_client_cipher))

    def _load_client_condition(self, doc: Document | None) -> TreeNode | None:
        return _optional(doc, lambda d: self.load_tree(d, self.load_client_cipher))

    # -- policies -------------------------------------------------------------

    def dump_client_policy(self, policy: ClientPolicy) -> Document:
        return {
            "tuple": [self.dump_client_cipher(c) for c in policy.tuple],
            "condition": self._dump_client_condition(policy.condition),
        }

    def load_client_policy(self, doc: Document) -> ClientPolicy:
        with _loading("client policy"):
            s, a, t = (self.load_client_cipher(c) for c in doc["tuple"])
            return ClientPolicy((s, a, t), self._load_client_condition(doc.get("condition")))

    def dump_policy(self, policy: EncryptedPolicy) -> Document:
        return {
            "policy_id": policy.policy_id,
            "tuple": [self.dump_cipher(c) for c in policy.tuple],
            "condition": self._dump_condition(policy.condition),
        }

    def load_policy(self, doc: Document) -> EncryptedPolicy:
        with _loading("policy"):
            s, a, t = (self.load_cipher(c) for c in doc["tuple"])
            return EncryptedPolicy(
                policy_id=str(doc["policy_id"]),
                tuple=(s, a, t),
                condition=self._load_condition(doc.get("condition")),
            )

    def dump_request_tuple(self, req: EncryptedRequestTuple) -> Document:
        return {
            "requester_id": req.requester_id,
            "trapdoors": [self.dump_client_trapdoor(t) for t in req.trapdoors],
        }

    def load_request_tuple(self, doc: Document) -> EncryptedRequestTuple:
        with _loading("request"):
            s, a, t = (self.load_client_trapdoor(d) for d in doc["trapdoors"])
            return EncryptedRequestTuple(str(doc["requester_id"]), (s, a, t))

    def dump_attributes(self, attrs: EncryptedAttributeList | None) -> Document | None:
        if attrs is None:
            return None
        return {
            "source_id": attrs.source_id,
            "items": [self.dump_client_trapdoor(t) for t in attrs.items],
        }

    def load_attributes(self, doc: Document | None) -> EncryptedAttributeList | None:
        if doc is None:
            return None
        with _loading("attribute list"):
            return EncryptedAttributeList(
                source_id=str(doc["source_id"]),
                items=tuple(self.load_client_trapdoor(t) for t in doc["items"]),
            )

    # -- rbac ---------------------------------------------------------------

    def dump_client_role_assignment(self, ra: ClientRoleAssignment) -> Document:
        return {
            "requester_id": ra.requester_id,
            "roles": [self.dump_client_cipher(c) for c in ra.roles],
            "activation_condition": self._dump_client_condition(ra.activation_condition),
        }

    def load_client_role_assignment(self, doc: Document) -> ClientRoleAssignment:
        with _loading("role assignment"):
            return ClientRoleAssignment(
                requester_id=str(doc["requester_id"]),
                roles=tuple(self.load_client_cipher(c) for c in doc["roles"]),
                activation_condition=self._load_client_condition(doc.get("activation_condition")),
            )

    def dump_role_assignment(self, ra: RoleAssignment) -> Document:
        return {
            "assignment_id": ra.assignment_id,
            "requester_id": ra.requester_id,
            "roles": [self.dump_cipher(c) for c in ra.roles],
            "activation_condition": self._dump_condition(ra.activation_condition),
        }

    def load_role_assignment(self, doc: Document) -> RoleAssignment:
        with _loading("role assignment"):
            return RoleAssignment(
                assignment_id=str(doc["assignment_id"]),
                requester_id=str(doc["requester_id"]),
                roles=tuple(self.load_cipher(c) for c in doc["roles"]),
                activation_condition=self._load_condition(doc.get("activation_condition")),
            )

    def dump_client_permission_assignment(self, pa: ClientPermissionAssignment) -> Document:
        return {
            "role": self.dump_client_cipher(pa.role),
            "permissions": [
                [self.dump_client_cipher(a), self.dump_client_cipher(t)]
                for a, t in pa.permissions
            ],
            "grant_condition": self._dump_client_condition(pa.grant_condition),
        }

    def load_client_permission_assignment(self, doc: Document) -> ClientPermissionAssignment:
        with _loading("permission assignment"):
            return ClientPermissionAssignment(
                role=self.load_client_cipher(doc["role"]),
                permissions=tuple(
                    (self.load_client_cipher(a), self.load_client_cipher(t))
                    for a, t in doc["permissions"]
                ),
                grant_condition=self._load_client_condition(doc.get("grant_condition")),
            )

    def dump_permission_assignment(self, pa: PermissionAssignment) -> Document:
        return {
            "assignment_id": pa.assignment_id,
            "role": self.dump_cipher(pa.role),
            "permissions": [[self.dump_cipher(a), self.dump_cipher(t)] for a, t in pa.permissions],
            "grant_condition": self._dump_condition(pa.grant_condition),
        }

    def load_permission_assignment(self, doc: Document) -> PermissionAssignment:
        with _loading("permission assignment"):
            return PermissionAssignment(
                assignment_id=str(doc["assignment_id"]),
                role=self.load_cipher(doc["role"]),
                permissions=tuple(
                    (self.load_cipher(a), self.load_cipher(t)) for a, t in doc["permissions"]
                ),
                grant_condition=self._load_condition(doc.get("grant_condition")),
            )

    def dump_client_hierarchy(self, h: ClientRoleHierarchy) -> Document:
        return {
            "nodes": [
                {
                    "cipher": self.dump_client_cipher(n.cipher),
                    "trapdoor": self.dump_client_trapdoor(n.trapdoor),
                }
                for n in h.nodes
            ],
            "edges": [list(e) for e in h.edges],
        }

    def load_client_hierarchy(self, doc: Document) -> ClientRoleHierarchy:
        with _loading("role hierarchy"):
            return ClientRoleHierarchy(
                nodes=tuple(
                    ClientHierarchyNode(
                        cipher=self.load_client_cipher(n["cipher"]),
                        trapdoor=self.load_client_trapdoor(n["trapdoor"]),
                    )
                    for n in doc["nodes"]
                ),
                edges=tuple((int(d), int(b)) for d, b in doc["edges"]),
            )

    def dump_hierarchy(self, h: RoleHierarchyGraph) -> Document:
        return {
            "nodes": [
                {"cipher": self.dump_cipher(n.cipher), "trapdoor": self.dump_trapdoor(n.trapdoor)}
                for n in h.nodes
            ],
            "edges": [list(e) for e in h.edges],
        }

    def load_hierarchy(self, doc: Document) -> RoleHierarchyGraph:
        with _loading("role hierarchy"):
            return RoleHierarchyGraph(
                nodes=tuple(
                    HierarchyNode(
                        cipher=self.load_cipher(n["cipher"]),
                        trapdoor=self.load_trapdoor(n["trapdoor"]),
                    )
                    for n in doc["nodes"]
                ),
                edges=tuple((int(d), int(b)) for d, b in doc["edges"]),
            )

    def dump_active_role(self, role: ActiveRole) -> Document:
        return {"trapdoor": self.dump_trapdoor(role.trapdoor), "cipher": self.dump_cipher(role.cipher)}

    def load_active_role(self, doc: Document) -> ActiveRole:
        with _loading("active role"):
            return ActiveRole(
                trapdoor=self.load_trapdoor(doc["trapdoor"]),
                cipher=self.load_cipher(doc["cipher"]),
            )

    def dump_activation_request(self, req: RoleActivationRequest) -> Document:
        return {
            "requester_id": req.requester_id,
            "role": self.dump_client_trapdoor(req.role),
            "attributes": self.dump_attributes(req.attributes),
        }

    def load_activation_request(self, doc: Document) -> RoleActivationRequest:
        with _loading("activation request"):
            return RoleActivationRequest(
                requester_id=str(doc["requester_id"]),
                role=self.load_client_trapdoor(doc["role"]),
                attributes=self.load_attributes(doc.get("attributes")),
            )

    def dump_access_request(self, req: AccessRequest) -> Document:
        return {
            "requester_id": req.requester_id,
            "role": self.dump_client_trapdoor(req.role),
            "action": self.dump_client_trapdoor(req.action),
            "target": self.dump_client_trapdoor(req.target),
            "attributes": self.dump_attributes(req.attributes),
        }

    def load_access_request(self, doc: Document) -> AccessRequest:
        with _loading("access request"):
            return AccessRequest(
                requester_id=str(doc["requester_id"]),
                role=self.load_client_trapdoor(doc["role"]),
                action=self.load_client_trapdoor(doc["action"]),
                target=self.load_client_trapdoor(doc["target"]),
                attributes=self.load_attributes(doc.get("attributes")),
            )

    # -- constraints ------------------------------------------------------------

    def dump_options(self, options: ConstraintOptions) -> Document:
        return {
            "max_actions": options.max_actions,
            "deny_repeat": options.deny_repeat,
            "bind_instance": options.bind_instance,
            "group_label": options.group_label,
        }

    def load_options(self, doc: Document) -> ConstraintOptions:
        with _loading("constraint options"):
            return ConstraintOptions(
                max_actions=int(doc["max_actions"]),
                deny_repeat=bool(doc["deny_repeat"]),
                bind_instance=bool(doc["bind_instance"]),
                group_label=str(doc["group_label"]),
            )

    def _dump_client_leaf(self, item: ClientConstraintLeaf) -> Document:
        return {
            "label": item.label,
            "cipher": self.dump_client_cipher(item.cipher),
            "trapdoor": self.dump_client_trapdoor(item.trapdoor),
        }

    def _load_client_leaf(self, doc: Document) -> ClientConstraintLeaf:
        return ClientConstraintLeaf(
            label=str(doc["label"]),
            cipher=self.load_client_cipher(doc["cipher"]),
            trapdoor=self.load_client_trapdoor(doc["trapdoor"]),
        )

    def _dump_leaf(self, item: ConstraintLeaf) -> Document:
        return {
            "label": item.label,
            "cipher": self.dump_cipher(item.cipher),
            "trapdoor": self.dump_trapdoor(item.trapdoor),
        }

    def _load_leaf(self, doc: Document) -> ConstraintLeaf:
        return ConstraintLeaf(
            label=str(doc["label"]),
            cipher=self.load_cipher(doc["cipher"]),
            trapdoor=self.load_trapdoor(doc["trapdoor"]),
        )

    def dump_client_constraint(self, c: ClientConstraint) -> Document:
        return {
            "kind": c.kind,
            "tree": self.dump_tree(c.tree, self._dump_client_leaf),
            "options": self.dump_options(c.options),
        }

    def load_client_constraint(self, doc: Document) -> ClientConstraint:
        with _loading("constraint"):
            return ClientConstraint(
                kind=str(doc["kind"]),
                tree=self.load_tree(doc["tree"], self._load_client_leaf),
                options=self.load_options(doc["options"]),
            )

    def dump_constraint(self, c: ConstraintTree) -> Document:
        return {
            "constraint_id": c.constraint_id,
            "kind": c.kind,
            "tree": self.dump_tree(c.tree, self._dump_leaf),
            "options": self.dump_options(c.options),
        }

    def load_constraint(self, doc: Document) -> ConstraintTree:
        with _loading("constraint"):
            return ConstraintTree(
                constraint_id=str(doc["constraint_id"]),
                kind=str(doc["kind"]),
                tree=self.load_tree(doc["tree"], self._load_leaf),
                options=self.load_options(doc["options"]),
            )

    def dump_egrant_request(self, req: EgrantRequest) -> Document:
        return {
            "requester_id": req.requester_id,
            "elements": [
                {
                    "label": e.label,
                    "trapdoor": self.dump_client_trapdoor(e.trapdoor),
                    "cipher": self.dump_client_cipher(e.cipher),
                }
                for e in req.elements
            ],
        }

    def load_egrant_request(self, doc: Document) -> EgrantRequest:
        with _loading("constrained request"):
            return EgrantRequest(
                requester_id=str(doc["requester_id"]),
                elements=tuple(
                    RequestElement(
                        label=str(e["label"]),
                        trapdoor=self.load_client_trapdoor(e["trapdoor"]),
                        cipher=self.load_client_cipher(e["cipher"]),
                    )
                    for e in doc["elements"]
                ),
            )

    def dump_record(self, record: SessionRecord) -> Document:
        return {
            "elements": [
                {"label": label, "cipher": self.dump_cipher(c)} for label, c in record.elements
            ]
        }

    def load_record(self, doc: Document) -> SessionRecord:
        with _loading("history record"):
            return SessionRecord(
                tuple((str(e["label"]), self.load_cipher(e["cipher"])) for e in doc["elements"])
            )

    # -- decisions ------------------------------------------------------------

    def dump_decision(self, decision: Decision) -> Document:
        return {
            "permit": decision.permit,
            "reason": decision.reason,
            "matched": list(decision.matched),
        }

    def load_decision(self, doc: Document) -> Decision:
        with _loading("decision"):
            return Decision(
                permit=bool(doc["permit"]),
                reason=doc.get("reason"),
                matched=tuple(doc.get("matched", ())),
            )
