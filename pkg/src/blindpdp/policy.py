"""Cleartext policy structures.

Condition trees, SAT tuples, the bag-of-bits encoding of bounded integers and
the k-of-n tree evaluator shared by every engine. The encrypted engines map
the payloads of these trees through their encryption rounds; the structure
itself is never hidden.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Literal

from .errors import (
    DuplicateAttributeError,
    InvalidTreeError,
    NumericRangeError,
    PolicySyntaxError,
)

# ---------------------------------------------------------------------------
# Element canonicalization
# ---------------------------------------------------------------------------

SUBJECT = "subject"
ACTION = "action"
TARGET = "target"
ROLE = "role"
OBJTYPE = "objtype"
INSTANCE = "instance"
CONTEXT = "context"

ELEMENT_KINDS = frozenset({SUBJECT, ACTION, TARGET, ROLE, OBJTYPE, INSTANCE})
_DOMAIN_LABEL = re.compile(r"^domain-([1-9][0-9]*)$")


def domain_label(level: int) -> str:
    if level < 1:
        raise ValueError("domain levels start at 1")
    return f"domain-{level}"


def domain_level(label: str) -> int | None:
    m = _DOMAIN_LABEL.match(label)
    return int(m.group(1)) if m else None


def element(kind: str, value: str) -> str:
    """Domain-separated element string ``kind|value``.

    A role named ``read`` and an action named ``read`` become different
    elements and never match each other.
    """
    if kind not in ELEMENT_KINDS and domain_level(kind) is None:
        raise ValueError(f"unknown element kind {kind!r}")
    if not value:
        raise ValueError(f"empty {kind} value")
    return f"{kind}|{value}"


@dataclass(frozen=True)
class LabeledElement:
    """An element tagged with the request slot it belongs to."""

    label: str
    value: str

    @property
    def element(self) -> str:
        if self.label == CONTEXT:
            return self.value
        return element(self.label, self.value)


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------

AND = "and"
OR = "or"
THRESHOLD = "threshold"
_GATES = frozenset({AND, OR, THRESHOLD})

NodeKind = Literal["leaf", "gate", "const"]


@dataclass
class TreeNode:
    """AND / OR / k-of-n tree node.

    ``decision`` is transient evaluation state and is ignored by equality.
    """

    kind: NodeKind
    gate: str | None = None
    k: int | None = None
    children: list[TreeNode] = field(default_factory=list)
    payload: Any = None
    value: bool | None = None
    decision: bool | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind == "leaf":
            if self.children:
                raise InvalidTreeError("leaves have no children")
            if self.payload is None:
                raise InvalidTreeError("leaves need a payload")
        elif self.kind == "gate":
            if self.gate not in _GATES:
                raise InvalidTreeError(f"unknown gate {self.gate!r}")
            if not self.children:
                raise InvalidTreeError(f"{self.gate} gate needs at least one child")
            if self.gate == THRESHOLD:
                if self.k is None or not 1 <= self.k <= len(self.children):
                    raise InvalidTreeError(
                        f"threshold k={self.k} outside 1..{len(self.children)}"
                    )
            elif self.k is not None:
                raise InvalidTreeError(f"{self.gate} gate takes no k")
        elif self.kind == "const":
            if not isinstance(self.value, bool):
                raise InvalidTreeError("constant nodes carry a boolean value")
        else:
            raise InvalidTreeError(f"unknown node kind {self.kind!r}")

    @property
    def threshold(self) -> int:
        """Number of true children needed: n for AND, 1 for OR."""
        if self.gate == AND:
            return len(self.children)
        if self.gate == OR:
            return 1
        assert self.k is not None
        return self.k

    def leaves(self) -> Iterator[TreeNode]:
        if self.kind == "leaf":
            yield self
        for child in self.children:
            yield from child.leaves()

    def leaf_count(self) -> int:
        return sum(1 for _ in self.leaves())

    def reset(self) -> None:
        self.decision = None
        for child in self.children:
            child.reset()

    def copy(self) -> TreeNode:
        """Structural copy; payloads are shared, decisions are not."""
        return self.map_leaves(lambda payload: payload)

    def map_leaves(self, fn: Callable[[Any], Any]) -> TreeNode:
        """Same gates, arity and order, with every leaf payload replaced."""
        if self.kind == "leaf":
            return TreeNode("leaf", payload=fn(self.payload))
        if self.kind == "const":
            return TreeNode("const", value=self.value)
        return TreeNode(
            "gate",
            gate=self.gate,
            k=self.k,
            children=[child.map_leaves(fn) for child in self.children],
        )


def leaf(payload: Any) -> TreeNode:
    return TreeNode("leaf", payload=payload)


def const(value: bool) -> TreeNode:
    return TreeNode("const", value=value)


def and_(*children: TreeNode) -> TreeNode:
    return TreeNode("gate", gate=AND, children=list(children))


def or_(*children: TreeNode) -> TreeNode:
    return TreeNode("gate", gate=OR, children=list(children))


def kofn(k: int, *children: TreeNode) -> TreeNode:
    return TreeNode("gate", gate=THRESHOLD, k=k, children=list(children))


def _gate_for(k: int, children: list[TreeNode]) -> TreeNode:
    if len(children) == 1:
        return children[0]
    if k == len(children):
        return and_(*children)
    if k == 1:
        return or_(*children)
    return kofn(k, *children)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _decide(
    node: TreeNode, leaf_decider: Callable[[Any], bool], short_circuit: bool
) -> bool:
    if node.kind == "const":
        node.decision = node.value
    elif node.kind == "leaf":
        node.decision = bool(leaf_decider(node.payload))
    else:
        k = node.threshold
        n = len(node.children)
        true_count = false_count = 0
        for child in node.children:
            if _decide(child, leaf_decider, short_circuit):
                true_count += 1
            else:
                false_count += 1
            if short_circuit and (true_count >= k or false_count > n - k):
                break
        node.decision = true_count >= k
    assert node.decision is not None
    return node.decision


def evaluate_tree(
    root: TreeNode,
    leaf_decider: Callable[[Any], bool],
    *,
    short_circuit: bool = True,
) -> bool:
    """Evaluate a k-of-n tree bottom-up.

    Decisions from a previous run are cleared first. With
    ``short_circuit`` a gate stops deciding children once k of them are
    true or n-k+1 are false; the skipped children keep ``decision=None``.
    """
    root.reset()
    return _decide(root, leaf_decider, short_circuit)


def simplify(node: TreeNode) -> TreeNode:
    """Remove constant nodes by boolean absorption.

    In a k-of-n gate a true constant lowers k by one and a false constant
    is dropped. The result is either constant-free or a single constant.
    """
    if node.kind != "gate":
        return node.copy()
    k = node.threshold
    remaining: list[TreeNode] = []
    for child in node.children:
        reduced = simplify(child)
        if reduced.kind == "const":
            if reduced.value:
                k -= 1
        else:
            remaining.append(reduced)
    if k <= 0:
        return const(True)
    if k > len(remaining):
        return const(False)
    return _gate_for(k, remaining)


# ---------------------------------------------------------------------------
# Bag-of-bits numeric comparisons
# ---------------------------------------------------------------------------

_OPERATORS = {"<": "<", ">": ">", "<=": "<=", ">=": ">=", "=": "=", "≤": "<=", "≥": ">="}
_ATTRIBUTE_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def _check_name(name: str) -> None:
    if not _ATTRIBUTE_NAME.match(name):
        raise PolicySyntaxError(f"invalid attribute name {name!r}")


def _check_range(name: str, value: int, bits: int) -> None:
    if bits < 1:
        raise NumericRangeError(f"{name}: bit width must be at least 1")
    if not 0 <= value < (1 << bits):
        raise NumericRangeError(f"{name}={value} does not fit in {bits} bits")


@dataclass(frozen=True)
class NumericComparison:
    """``name op value#bits``."""

    name: str
    op: str
    value: int
    bits: int

    def __post_init__(self) -> None:
        _check_name(self.name)
        try:
            object.__setattr__(self, "op", _OPERATORS[self.op])
        except KeyError:
            raise PolicySyntaxError(f"unknown comparison operator {self.op!r}") from None
        _check_range(self.name, self.value, self.bits)

    def holds(self, w: int) -> bool:
        v = self.value
        return {
            "<": w < v,
            ">": w > v,
            "<=": w <= v,
            ">=": w >= v,
            "=": w == v,
        }[self.op]

    @property
    def constant(self) -> bool | None:
        """Truth value when the comparison ignores the attribute, else None."""
        top = (1 << self.bits) - 1
        if (self.op == ">=" and self.value == 0) or (self.op == "<=" and self.value == top):
            return True
        if (self.op == "<" and self.value == 0) or (self.op == ">" and self.value == top):
            return False
        return None

    def __str__(self) -> str:
        return f"{self.name}{self.op}{self.value}#{self.bits}"


def bit_pattern(name: str, bits: int, position: int, bit: int) -> str:
    """``name:**b**``: bit *position* (0 = most significant) fixed to *bit*."""
    return f"{name}:{'*' * position}{bit}{'*' * (bits - position - 1)}"


def _bit(value: int, bits: int, position: int) -> int:
    return (value >> (bits - position - 1)) & 1


def encode_numeric_attribute(name: str, value: int, bits: int) -> list[str]:
    _check_range(name, value, bits)
    return [bit_pattern(name, bits, i, _bit(value, bits, i)) for i in range(bits)]


def _prefix_branches(name: str, value: int, bits: int, greater: bool) -> TreeNode:
    # one branch per position where w can first differ from value in the
    # required direction
    pivot = 0 if greater else 1
    branches: list[TreeNode] = []
    for i in range(bits):
        if _bit(value, bits, i) != pivot:
            continue
        leaves = [leaf(bit_pattern(name, bits, j, _bit(value, bits, j))) for j in range(i)]
        leaves.append(leaf(bit_pattern(name, bits, i, 1 - pivot)))
        branches.append(leaves[0] if len(leaves) == 1 else and_(*leaves))
    if not branches:
        return const(False)
    return branches[0] if len(branches) == 1 else or_(*branches)


def compile_numeric_comparison(c: NumericComparison) -> TreeNode:
    """Compile a comparison into a tree over single-bit pattern leaves.

    Degenerate comparisons compile to a constant node.
    """
    constant = c.constant
    if constant is not None:
        return const(constant)
    if c.op == ">":
        return _prefix_branches(c.name, c.value, c.bits, greater=True)
    if c.op == "<":
        return _prefix_branches(c.name, c.value, c.bits, greater=False)
    if c.op == ">=":
        return _prefix_branches(c.name, c.value - 1, c.bits, greater=True)
    if c.op == "<=":
        return _prefix_branches(c.name, c.value + 1, c.bits, greater=False)
    return and_(*(leaf(e) for e in encode_numeric_attribute(c.name, c.value, c.bits)))


def compile_condition(tree: TreeNode) -> TreeNode:
    """Expand numeric leaves and fold constants away."""

    def expand(node: TreeNode) -> TreeNode:
        if node.kind == "leaf":
            if isinstance(node.payload, NumericComparison):
                return compile_numeric_comparison(node.payload)
            return leaf(node.payload)
        if node.kind == "const":
            return const(bool(node.value))
        return TreeNode(
            "gate",
            gate=node.gate,
            k=node.k,
            children=[expand(child) for child in node.children],
        )

    return simplify(expand(tree))


# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SatTuple:
    """⟨subject, action, target⟩."""

    subject: str
    action: str
    target: str

    def __post_init__(self) -> None:
        if not (self.subject and self.action and self.target):
            raise ValueError("subject, action and target must all be non-empty")

    def elements(self) -> tuple[str, str, str]:
        return (
            element(SUBJECT, self.subject),
            element(ACTION, self.action),
            element(TARGET, self.target),
        )


_NUMERIC_VALUE = re.compile(r"^([0-9]+)#([0-9]+)$")


@dataclass
class AttributeSet:
    """Contextual attributes of one request; one value per name."""

    strings: dict[str, str] = field(default_factory=dict)
    numerics: dict[str, tuple[int, int]] = field(default_factory=dict)

    def _claim(self, name: str) -> None:
        _check_name(name)
        if name in self.strings or name in self.numerics:
            raise DuplicateAttributeError(f"attribute {name!r} given twice")

    def add_string(self, name: str, value: str) -> AttributeSet:
        self._claim(name)
        if not value:
            raise ValueError(f"attribute {name!r} has an empty value")
        self.strings[name] = value
        return self

    def add_numeric(self, name: str, value: int, bits: int) -> AttributeSet:
        self._claim(name)
        _check_range(name, value, bits)
        self.numerics[name] = (value, bits)
        return self

    @classmethod
    def parse(cls, items: Iterable[str]) -> AttributeSet:
        """Build from ``name=value`` and ``name=value#bits`` strings."""
        attrs = cls()
        for item in items:
            name, sep, value = item.partition("=")
            if not sep:
                raise PolicySyntaxError(f"expected name=value, got {item!r}")
            m = _NUMERIC_VALUE.match(value)
            if m:
                attrs.add_numeric(name, int(m.group(1)), int(m.group(2)))
            else:
                attrs.add_string(name, value)
        return attrs

    def elements(self) -> list[str]:
        out = [f"{name}={value}" for name, value in self.strings.items()]
        for name, (value, bits) in self.numerics.items():
            out.extend(encode_numeric_attribute(name, value, bits))
        return out

    def __len__(self) -> int:
        return len(self.strings) + len(self.numerics)


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------

NO_MATCHING_POLICY = "no-matching-policy"
ROLE_NOT_ASSIGNED = "role-not-assigned"
ROLE_NOT_ACTIVE = "role-not-active"
NO_MATCHING_PERMISSION = "no-matching-permission"
CONSTRAINT_VIOLATION = "constraint-violation"


@dataclass(frozen=True)
class Decision:
    permit: bool
    reason: str | None = None
    matched: tuple[str, ...] = ()

    @classmethod
    def deny(cls, reason: str, matched: Iterable[str] = ()) -> Decision:
        return cls(False, reason, tuple(matched))

    @classmethod
    def grant(cls, matched: Iterable[str] = ()) -> Decision:
        return cls(True, None, tuple(matched))

    def __bool__(self) -> bool:
        return self.permit
