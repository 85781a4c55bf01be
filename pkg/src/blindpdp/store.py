"""Directory-backed store: one JSON document per collection.

Every document is tagged with ``blindpdp/<collection>/v1``. Writes go to a
temporary file in the same directory, are fsynced and then renamed over the
old image, so a reader sees either the previous or the new document.
The master secret key never enters this directory.
"""

from __future__ import annotations

import contextlib
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .codec import DocumentCodec, dumps, loads
from .constraint_engine import AccessHistory, ConstraintTree
from .errors import StoreFormatError
from .policy_engine import EncryptedPolicy
from .rbac_engine import (
    ActiveRolesSession,
    PermissionAssignment,
    RoleAssignment,
    RoleHierarchyGraph,
)
from .sde import KeyStore, PublicParams

PARAMS = "params"
KEYSTORE = "keystore"
POLICIES = "policies"
ROLE_ASSIGNMENTS = "role-assignments"
PERMISSION_ASSIGNMENTS = "permission-assignments"
HIERARCHY = "hierarchy"
CONSTRAINTS = "constraints"
SESSIONS = "sessions"
HISTORY = "history"
SEQUENCE = "sequence"

COLLECTIONS = (
    PARAMS,
    KEYSTORE,
    POLICIES,
    ROLE_ASSIGNMENTS,
    PERMISSION_ASSIGNMENTS,
    HIERARCHY,
    CONSTRAINTS,
    SESSIONS,
    HISTORY,
    SEQUENCE,
)


def format_tag(collection: str) -> str:
    return f"blindpdp/{collection}/v1"


@dataclass
class StoreRoot:
    """Everything the service persists, decoded."""

    params: PublicParams
    keystore: KeyStore = field(default_factory=KeyStore)
    policies: list[EncryptedPolicy] = field(default_factory=list)
    role_assignments: list[RoleAssignment] = field(default_factory=list)
    permission_assignments: list[PermissionAssignment] = field(default_factory=list)
    hierarchy: RoleHierarchyGraph | None = None
    constraints: list[ConstraintTree] = field(default_factory=list)
    sessions: ActiveRolesSession = field(default_factory=ActiveRolesSession)
    history: AccessHistory = field(default_factory=AccessHistory)
    sequence: dict[str, int] = field(default_factory=dict)


def atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def read_tagged(path: Path, collection: str) -> Any:
    """Body of a tagged document; ``StoreFormatError`` on a foreign file."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StoreFormatError(f"Cannot read {path}: {e}") from e
    doc = loads(text)
    if not isinstance(doc, dict) or doc.get("format") != format_tag(collection):
        raise StoreFormatError(f"{path} is not a {format_tag(collection)} document")
    if "items" not in doc:
        raise StoreFormatError(f"{path} has no items")
    return doc["items"]


def write_tagged(path: Path, collection: str, items: Any) -> None:
    atomic_write_text(path, dumps({"format": format_tag(collection), "items": items}))


class FileStore:
    """A store directory holding one document per collection."""

    def __init__(self, path: str | os.PathLike[str], *, codec: DocumentCodec | None = None) -> None:
        self.path = Path(path)
        self.codec = codec or DocumentCodec()

    def document_path(self, collection: str) -> Path:
        if collection not in COLLECTIONS:
            raise StoreFormatError(f"Unknown collection {collection!r}")
        return self.path / f"{collection}.json"

    def exists(self) -> bool:
        return self.document_path(PARAMS).is_file()

    def read(self, collection: str) -> Any:
        path = self.document_path(collection)
        if not path.is_file():
            return None
        return read_tagged(path, collection)

    def write(self, collection: str, items: Any) -> None:
        write_tagged(self.document_path(collection), collection, items)

    def load_params(self) -> PublicParams:
        items = self.read(PARAMS)
        if items is None:
            raise StoreFormatError(f"{self.path} holds no public parameters")
        return self.codec.load_params(items)

    def initialize(self, params: PublicParams) -> StoreRoot:
        """Create an empty store, or open an existing one with equal params."""
        self.path.mkdir(parents=True, exist_ok=True)
        if self.exists():
            if self.load_params() != params:
                raise StoreFormatError(
                    f"{self.path} was initialized with different public parameters"
                )
            return self.load()
        root = StoreRoot(params=params)
        self.save(root)
        return root

    def load(self) -> StoreRoot:
        codec = self.codec
        root = StoreRoot(params=self.load_params())
        root.keystore = KeyStore(codec.load_server_key(d) for d in self.read(KEYSTORE) or ())
        root.policies = [codec.load_policy(d) for d in self.read(POLICIES) or ()]
        root.role_assignments = [
            codec.load_role_assignment(d) for d in self.read(ROLE_ASSIGNMENTS) or ()
        ]
        root.permission_assignments = [
            codec.load_permission_assignment(d)
            for d in self.read(PERMISSION_ASSIGNMENTS) or ()
        ]
        hierarchy = self.read(HIERARCHY)
        root.hierarchy = None if hierarchy is None else codec.load_hierarchy(hierarchy)
        root.constraints = [codec.load_constraint(d) for d in self.read(CONSTRAINTS) or ()]
        root.sessions = ActiveRolesSession(
            {
                requester: [codec.load_active_role(d) for d in roles]
                for requester, roles in (self.read(SESSIONS) or {}).items()
            }
        )
        root.history = AccessHistory(
            {
                requester: [codec.load_record(d) for d in records]
                for requester, records in (self.read(HISTORY) or {}).items()
            }
        )
        sequence = self.read(SEQUENCE) or {}
        if not isinstance(sequence, dict):
            raise StoreFormatError("sequence document must map prefixes to counters")
        root.sequence = {str(k): int(v) for k, v in sequence.items()}
        return root

    def encode(self, root: StoreRoot, collection: str) -> Any:
        codec = self.codec
        if collection == PARAMS:
            return codec.dump_params(root.params)
        if collection == KEYSTORE:
            return [codec.dump_server_key(k) for k in root.keystore]
        if collection == POLICIES:
            return [codec.dump_policy(p) for p in root.policies]
        if collection == ROLE_ASSIGNMENTS:
            return [codec.dump_role_assignment(a) for a in root.role_assignments]
        if collection == PERMISSION_ASSIGNMENTS:
            return [codec.dump_permission_assignment(a) for a in root.permission_assignments]
        if collection == HIERARCHY:
            return None if root.hierarchy is None else codec.dump_hierarchy(root.hierarchy)
        if collection == CONSTRAINTS:
            return [codec.dump_constraint(c) for c in root.constraints]
        if collection == SESSIONS:
            return {
                requester: [codec.dump_active_role(r) for r in root.sessions.entries(requester)]
                for requester in root.sessions.requesters()
            }
        if collection == HISTORY:
            return {
                requester: [codec.dump_record(r) for r in root.history.records(requester)]
                for requester in root.history.requesters()
            }
        if collection == SEQUENCE:
            return dict(sorted(root.sequence.items()))
        raise StoreFormatError(f"Unknown collection {collection!r}")

    def save(self, root: StoreRoot, collections: Iterable[str] = COLLECTIONS) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        for collection in collections:
            self.write(collection, self.encode(root, collection))

    def dump(self) -> dict[str, Any]:
        """Raw tagged documents, for inspection tools."""
        out: dict[str, Any] = {}
        for collection in COLLECTIONS:
            path = self.document_path(collection)
            if path.is_file():
                out[collection] = loads(path.read_text(encoding="utf-8"))
        return out
