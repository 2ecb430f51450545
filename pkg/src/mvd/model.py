"""Core multiverse model: decisions, options, assignments, and constraints.

Decisions come in two kinds: a Placeholder decision substitutes a short
inline text at `{{name}}` sites, a Block decision selects one of several
alternative code regions. A constraint guards a single (decision, option)
pair with a boolean condition over other decisions; an assignment is
admissible when every constraint whose target it selects evaluates true.

All values here are immutable after construction and safe to share.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .exceptions import UnknownDecision

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def is_valid_name(name: str) -> bool:
    """Identifier rule for decision and option names."""
    return bool(IDENT_RE.fullmatch(name))


class DecisionKind(Enum):
    PLACEHOLDER = "placeholder"
    BLOCK = "block"


@dataclass(frozen=True)
class OptionSpec:
    """One alternative of a decision.

    For a Placeholder decision, ``payload`` is the literal substitution text
    (no line breaks). For a Block decision, ``payload`` is the option's code
    body as a tuple of source lines (may be empty).
    """

    name: str
    payload: object  # str for placeholders, tuple[str, ...] for blocks

    def __post_init__(self):
        if not is_valid_name(self.name):
            raise ValueError(f"invalid option name: {self.name!r}")


@dataclass(frozen=True)
class Decision:
    name: str
    kind: DecisionKind
    options: tuple[OptionSpec, ...]

    def __post_init__(self):
        if not is_valid_name(self.name):
            raise ValueError(f"invalid decision name: {self.name!r}")
        if not self.options:
            raise ValueError(f"decision {self.name!r} has no options")
        seen = set()
        for opt in self.options:
            if opt.name in seen:
                raise ValueError(
                    f"duplicate option {opt.name!r} in decision {self.name!r}"
                )
            seen.add(opt.name)
            if self.kind is DecisionKind.PLACEHOLDER:
                if not isinstance(opt.payload, str):
                    raise ValueError("placeholder payload must be a string")
                if "\n" in opt.payload or "\r" in opt.payload:
                    raise ValueError(
                        f"placeholder option {self.name}.{opt.name} contains a line break"
                    )

    def option_names(self) -> list[str]:
        return [o.name for o in self.options]

    def option(self, name: str) -> OptionSpec:
        for o in self.options:
            if o.name == name:
                return o
        raise KeyError(f"{self.name} has no option {name!r}")


@dataclass(frozen=True)
class Assignment:
    """A total binding of every decision to one of its options."""

    bindings: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "bindings", dict(self.bindings))

    def __getitem__(self, decision: str) -> str:
        return self.bindings[decision]

    def __iter__(self):
        return iter(self.bindings.items())

    def __hash__(self):
        return hash(tuple(sorted(self.bindings.items())))

    def __eq__(self, other):
        return isinstance(other, Assignment) and self.bindings == other.bindings


# --- Condition expressions ---------------------------------------------------
#
# Grammar (whitespace-insensitive):
#   expr    := or_term
#   or_term := and_term ("or" and_term)*
#   and_term:= not_term ("and" not_term)*
#   not_term:= "not" not_term | atom
#   atom    := IDENT ("==" | "!=") STRING | "(" expr ")"
# STRING is a single- or double-quoted option name.


class ConditionExpr:
    """Base class for condition expression nodes."""

    def evaluate(self, assignment: Assignment) -> bool:
        raise NotImplementedError

    def decisions(self) -> set[str]:
        """Every decision name referenced anywhere in the expression."""
        raise NotImplementedError


@dataclass(frozen=True)
class Comparison(ConditionExpr):
    decision: str
    option: str
    negated: bool = False  # True for !=

    def evaluate(self, assignment: Assignment) -> bool:
        try:
            bound = assignment[self.decision]
        except KeyError:
            raise UnknownDecision(
                f"condition references unbound decision {self.decision!r}"
            ) from None
        eq = bound == self.option
        return not eq if self.negated else eq

    def decisions(self) -> set[str]:
        return {self.decision}

    def __str__(self):
        op = "!=" if self.negated else "=="
        return f'{self.decision} {op} "{self.option}"'


@dataclass(frozen=True)
class Not(ConditionExpr):
    operand: ConditionExpr

    def evaluate(self, assignment: Assignment) -> bool:
        return not self.operand.evaluate(assignment)

    def decisions(self) -> set[str]:
        return self.operand.decisions()

    def __str__(self):
        return f"not ({self.operand})"


@dataclass(frozen=True)
class And(ConditionExpr):
    operands: tuple[ConditionExpr, ...]

    def evaluate(self, assignment: Assignment) -> bool:
        return all(op.evaluate(assignment) for op in self.operands)

    def decisions(self) -> set[str]:
        out: set[str] = set()
        for op in self.operands:
            out |= op.decisions()
        return out

    def __str__(self):
        return " and ".join(f"({op})" for op in self.operands)


@dataclass(frozen=True)
class Or(ConditionExpr):
    operands: tuple[ConditionExpr, ...]

    def evaluate(self, assignment: Assignment) -> bool:
        return any(op.evaluate(assignment) for op in self.operands)

    def decisions(self) -> set[str]:
        out: set[str] = set()
        for op in self.operands:
            out |= op.decisions()
        return out

    def __str__(self):
        return " or ".join(f"({op})" for op in self.operands)


class ConditionSyntaxError(ValueError):
    """Raised when a condition string cannot be parsed."""


_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>==|!=)
      | (?P<lparen>\()
      | (?P<rparen>\))
      | (?P<string>"[^"]*"|'[^']*')
    )""",
    re.VERBOSE,
)


def _tokenize_condition(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ConditionSyntaxError(f"unexpected input at {rest[:20]!r}")
        pos = m.end()
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "ident" and value in ("and", "or", "not"):
            kind = value
        tokens.append((kind, value))
    return tokens


class _ConditionParser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str) -> str:
        tok = self.peek()
        if tok is None or tok[0] != kind:
            got = tok[1] if tok else "end of input"
            raise ConditionSyntaxError(f"expected {kind}, got {got!r}")
        self.pos += 1
        return tok[1]

    def parse(self) -> ConditionExpr:
        expr = self.or_term()
        if self.peek() is not None:
            raise ConditionSyntaxError(
                f"trailing input after expression: {self.peek()[1]!r}"
            )
        return expr

    def or_term(self) -> ConditionExpr:
        terms = [self.and_term()]
        while self.peek() and self.peek()[0] == "or":
            self.take("or")
            terms.append(self.and_term())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def and_term(self) -> ConditionExpr:
        terms = [self.not_term()]
        while self.peek() and self.peek()[0] == "and":
            self.take("and")
            terms.append(self.not_term())
        return terms[0] if len(terms) == 1 else And(tuple(terms))

    def not_term(self) -> ConditionExpr:
        if self.peek() and self.peek()[0] == "not":
            self.take("not")
            return Not(self.not_term())
        return self.atom()

    def atom(self) -> ConditionExpr:
        tok = self.peek()
        if tok is None:
            raise ConditionSyntaxError("unexpected end of condition")
        if tok[0] == "lparen":
            self.take("lparen")
            inner = self.or_term()
            self.take("rparen")
            return inner
        if tok[0] == "ident":
            name = self.take("ident")
            op = self.take("op")
            raw = self.take("string")
            return Comparison(name, raw[1:-1], negated=(op == "!="))
        raise ConditionSyntaxError(f"unexpected token {tok[1]!r}")


def parse_condition(text: str) -> ConditionExpr:
    """Parse a condition string like ``model != "bayesian" or cutoff == "low"``."""
    tokens = _tokenize_condition(text)
    if not tokens:
        raise ConditionSyntaxError("empty condition")
    return _ConditionParser(tokens).parse()


@dataclass(frozen=True)
class Constraint:
    """Guard: option ``option`` of ``decision`` is admissible only when
    ``condition`` holds. Multiple constraints on one target conjoin."""

    decision: str
    option: str
    condition: ConditionExpr
    source: str = ""  # original condition text, kept for template rewrites


def eval_condition(expr: ConditionExpr, assignment: Assignment) -> bool:
    """Standard boolean evaluation; ``d == "o"`` is true iff the assignment
    binds d to o. Raises UnknownDecision on an unbound reference."""
    return expr.evaluate(assignment)


def assignment_admissible(
    constraints: Sequence[Constraint], assignment: Assignment
) -> bool:
    """True iff every constraint whose target the assignment selects holds.

    Vacuously true with no constraints; a constraint whose target option is
    not selected does not apply.
    """
    for c in constraints:
        if assignment[c.decision] == c.option:
            if not eval_condition(c.condition, assignment):
                return False
    return True
