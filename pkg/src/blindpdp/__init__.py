"""Policy decision point over encrypted policies, roles and constraints."""

from __future__ import annotations

__version__ = "0.1.0"

# Searchable encryption core
from .sde import (
    ClientEncryptedElement,
    ClientKeySet,
    ClientTrapdoor,
    KeyStore,
    MasterSecretKey,
    PublicParams,
    ServerEncryptedElement,
    ServerKeySet,
    ServerTrapdoor,
    client_enc,
    client_td,
    init,
    keygen,
    match,
    server_reenc,
    server_td,
    toy_params,
)

# Cleartext policy model
from .policy import (
    AttributeSet,
    Decision,
    LabeledElement,
    NumericComparison,
    SatTuple,
    TreeNode,
    and_,
    compile_condition,
    compile_numeric_comparison,
    encode_numeric_attribute,
    evaluate_tree,
    kofn,
    leaf,
    or_,
)
from .dsl import PolicySpec, format_condition, format_policy, parse_condition, parse_policy
from .reference import cleartext_decide

# Engines
from .policy_engine import PolicyEngine
from .rbac_engine import RBACEngine
from .constraint_engine import (
    ConstraintEngine,
    ConstraintOptions,
    ConstraintSpec,
    chinese_wall_constraint,
    hbdsod_constraint,
)
from .pdp import PolicyDecisionPoint

# Store and service
from .store import FileStore, StoreRoot
from .tkma import TkmaState, tkma_init, tkma_issue, tkma_revoke
from .config import ServiceConfig
from .service import PolicyDecisionService, serve
from .client import (
    AsyncPolicyHTTPClient,
    AsyncPolicyStreamClient,
    InProcessClient,
    PolicyClient,
    create_policy_client,
)
from .instrumentation import OperationCounter, count_operations

# Exceptions
from .errors import (
    AlreadyIssuedError,
    ConfigurationError,
    DuplicateAttributeError,
    EngineError,
    Error,
    GenerationFailedError,
    InterfaceError,
    InvalidConstraintError,
    InvalidHierarchyError,
    InvalidTreeError,
    NumericRangeError,
    PolicySyntaxError,
    ProtocolError,
    ServiceConnectionError,
    StoreFormatError,
    UserNotFoundError,
    Warning,
)

__all__ = [
    # Version
    "__version__",
    # Searchable encryption
    "PublicParams",
    "MasterSecretKey",
    "ClientKeySet",
    "ServerKeySet",
    "ClientEncryptedElement",
    "ServerEncryptedElement",
    "ClientTrapdoor",
    "ServerTrapdoor",
    "KeyStore",
    "init",
    "toy_params",
    "keygen",
    "client_enc",
    "server_reenc",
    "client_td",
    "server_td",
    "match",
    # Policy model
    "TreeNode",
    "SatTuple",
    "NumericComparison",
    "AttributeSet",
    "LabeledElement",
    "Decision",
    "leaf",
    "and_",
    "or_",
    "kofn",
    "evaluate_tree",
    "compile_condition",
    "compile_numeric_comparison",
    "encode_numeric_attribute",
    "PolicySpec",
    "parse_policy",
    "parse_condition",
    "format_policy",
    "format_condition",
    "cleartext_decide",
    # Engines
    "PolicyEngine",
    "RBACEngine",
    "ConstraintEngine",
    "ConstraintOptions",
    "ConstraintSpec",
    "hbdsod_constraint",
    "chinese_wall_constraint",
    "PolicyDecisionPoint",
    # Store and service
    "FileStore",
    "StoreRoot",
    "TkmaState",
    "tkma_init",
    "tkma_issue",
    "tkma_revoke",
    "ServiceConfig",
    "PolicyDecisionService",
    "serve",
    "PolicyClient",
    "InProcessClient",
    "AsyncPolicyStreamClient",
    "AsyncPolicyHTTPClient",
    "create_policy_client",
    "OperationCounter",
    "count_operations",
    # Exceptions
    "Error",
    "Warning",
    "InterfaceError",
    "EngineError",
    "ConfigurationError",
    "PolicySyntaxError",
    "StoreFormatError",
    "ProtocolError",
    "ServiceConnectionError",
    "UserNotFoundError",
    "GenerationFailedError",
    "InvalidTreeError",
    "InvalidHierarchyError",
    "InvalidConstraintError",
    "AlreadyIssuedError",
    "NumericRangeError",
    "DuplicateAttributeError",
]
