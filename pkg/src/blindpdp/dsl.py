"""Text form of policies and conditions.

    if and(Location=Cardiology-ward, AT>9#5, AT<17#5) then can <Cardiologist, read, health-record>
    can <Doctor, read, health-record>

Conditions nest ``and(...)``, ``or(...)`` and ``kofn(k, ...)`` over string
predicates ``name=value`` and numeric predicates ``name op value#bits``.
Numeric predicates stay uncompiled in the parsed tree; see
:func:`blindpdp.policy.compile_condition`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PolicySyntaxError
from .policy import (
    AND,
    OR,
    NumericComparison,
    SatTuple,
    TreeNode,
    and_,
    const,
    kofn,
    leaf,
    or_,
)

_POLICY = re.compile(
    r"^\s*(?:if\s+(?P<cond>.+?)\s+then\s+)?can\s*[<⟨](?P<tuple>[^<>⟨⟩]*)[>⟩]\s*$",
    re.DOTALL,
)

_TOKEN = re.compile(
    r"""
    \s*(?:
        (?P<lparen>\()
      | (?P<rparen>\))
      | (?P<comma>,)
      | (?P<pred>[A-Za-z_][A-Za-z0-9_.\-]*\s*(?:<=|>=|≤|≥|<|>|=)\s*[^\s,()]+)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*|[0-9]+)
    )
    """,
    re.VERBOSE,
)

_PREDICATE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_.\-]*)\s*(?P<op><=|>=|≤|≥|<|>|=)\s*(?P<value>\S+)$"
)
_NUMERIC = re.compile(r"^([0-9]+)#([0-9]+)$")


@dataclass
class PolicySpec:
    """A cleartext authorization policy before encryption."""

    tuple: SatTuple
    condition: TreeNode | None = None


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise PolicySyntaxError("unexpected character", position=pos)
        kind = m.lastgroup
        assert kind is not None
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = _tokenize(text)
        self._i = 0
        self._end = len(text)

    def _peek(self) -> tuple[str, str, int] | None:
        return self._tokens[self._i] if self._i < len(self._tokens) else None

    def _next(self, expected: str | None = None) -> tuple[str, str, int]:
        token = self._peek()
        if token is None:
            raise PolicySyntaxError("unexpected end of condition", position=self._end)
        if expected is not None and token[0] != expected:
            raise PolicySyntaxError(f"expected {expected}, got {token[1]!r}", position=token[2])
        self._i += 1
        return token

    def parse(self) -> TreeNode:
        node = self._condition()
        token = self._peek()
        if token is not None:
            raise PolicySyntaxError(f"trailing input {token[1]!r}", position=token[2])
        return node

    def _condition(self) -> TreeNode:
        kind, text, pos = self._next()
        if kind == "pred":
            return _predicate(text, pos)
        if kind != "word":
            raise PolicySyntaxError(f"unexpected {text!r}", position=pos)
        word = text.lower()
        if word in ("true", "false"):
            return const(word == "true")
        if word not in (AND, OR, "kofn"):
            raise PolicySyntaxError(f"unknown operator {text!r}", position=pos)
        self._next("lparen")
        k: int | None = None
        if word == "kofn":
            _, digits, kpos = self._next("word")
            if not digits.isdigit():
                raise PolicySyntaxError("kofn needs an integer k", position=kpos)
            k = int(digits)
            self._next("comma")
        children = [self._condition()]
        while self._peek() is not None and self._peek()[0] == "comma":  # type: ignore[index]
            self._next("comma")
            children.append(self._condition())
        self._next("rparen")
        if word == AND:
            return and_(*children)
        if word == OR:
            return or_(*children)
        assert k is not None
        return kofn(k, *children)


def _predicate(text: str, pos: int) -> TreeNode:
    m = _PREDICATE.match(text)
    if m is None:
        raise PolicySyntaxError(f"malformed predicate {text!r}", position=pos)
    name, op, value = m.group("name"), m.group("op"), m.group("value")
    numeric = _NUMERIC.match(value)
    if numeric:
        return leaf(NumericComparison(name, op, int(numeric.group(1)), int(numeric.group(2))))
    if op != "=":
        raise PolicySyntaxError(
            f"numeric predicate {text!r} needs a value#bits operand", position=pos
        )
    return leaf(f"{name}={value}")


def parse_condition(text: str) -> TreeNode:
    return _Parser(text).parse()


def parse_policy(text: str) -> PolicySpec:
    m = _POLICY.match(text)
    if m is None:
        raise PolicySyntaxError("expected 'if <condition> then can <S, A, T>'")
    parts = [part.strip() for part in m.group("tuple").split(",")]
    if len(parts) != 3 or not all(parts):
        raise PolicySyntaxError("a policy tuple has exactly three non-empty parts")
    cond = m.group("cond")
    return PolicySpec(SatTuple(*parts), parse_condition(cond) if cond else None)


def format_condition(node: TreeNode) -> str:
    if node.kind == "const":
        return "true" if node.value else "false"
    if node.kind == "leaf":
        return str(node.payload)
    inner = ", ".join(format_condition(child) for child in node.children)
    if node.gate == AND or node.gate == OR:
        return f"{node.gate}({inner})"
    return f"kofn({node.k}, {inner})"


def format_policy(spec: PolicySpec) -> str:
    t = spec.tuple
    body = f"can <{t.subject}, {t.action}, {t.target}>"
    if spec.condition is None:
        return body
    return f"if {format_condition(spec.condition)} then {body}"
