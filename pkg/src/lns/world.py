"""Formal vocabulary of a reasoning world: facts, rules, expressions, queries.

Facts are ground; rules use placeholder variables (``entity_1``, ``entity_2``,
...) that a :data:`Binding` maps onto concrete entity names.  Everything here
is immutable.  The canonical text form looks like::

    is(Arvie, whole, 6475)
    resubmit(Arvie, Ruperta)
    is(entity_1, rental, -9) and defuse(entity_1, entity_2) => is(entity_2, technical, min(3 * entity_2[retained] + 8, -4))
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

AGG_OPS = ("max", "min", "addition", "subtraction")

Binding = Mapping[str, str]
Lookup = Callable[[str, str], int]


class WorldError(Exception):
    pass


class MissingAttribute(WorldError, KeyError):
    def __init__(self, entity: str, attribute: str):
        super().__init__(entity, attribute)
        self.entity = entity
        self.attribute = attribute

    def __str__(self) -> str:
        return f"no known value for {self.attribute} of {self.entity}"


class ValueOverflow(WorldError, ArithmeticError):
    pass


class UnboundVariable(WorldError, KeyError):
    pass


class ParseError(WorldError, ValueError):
    pass


def check_value(v: int) -> int:
    if not INT64_MIN <= v <= INT64_MAX:
        raise ValueOverflow(f"value {v} outside signed 64-bit range")
    return v


def _fold(s: str) -> str:
    return s.casefold()


# --------------------------------------------------------------------- facts


@dataclass(frozen=True, eq=False)
class AttrFact:
    entity: str
    attribute: str
    value: int

    @property
    def key(self) -> tuple[str, str]:
        return (_fold(self.entity), _fold(self.attribute))

    def _cmp(self) -> tuple:
        return ("is", _fold(self.entity), _fold(self.attribute), self.value)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AttrFact) and self._cmp() == other._cmp()

    def __hash__(self) -> int:
        return hash(self._cmp())

    def __str__(self) -> str:
        return f"is({self.entity}, {self.attribute}, {self.value})"


@dataclass(frozen=True, eq=False)
class RelFact:
    relation: str
    subject: str
    object: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (_fold(self.relation), _fold(self.subject), _fold(self.object))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RelFact) and self.key == other.key

    def __hash__(self) -> int:
        return hash(("rel",) + self.key)

    def __str__(self) -> str:
        return f"{self.relation}({self.subject}, {self.object})"


Fact = Union[AttrFact, RelFact]


# --------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Constant:
    c: int

    def __str__(self) -> str:
        return str(self.c)


@dataclass(frozen=True)
class Retrieval:
    var: str
    attribute: str

    def __str__(self) -> str:
        return f"{self.var}[{self.attribute}]"


@dataclass(frozen=True)
class Calculation:
    """``k * var[attribute] + b``; a negative ``b`` prints as a subtraction."""

    k: int
    var: str
    attribute: str
    b: int

    def __str__(self) -> str:
        head = f"{self.k} * {self.var}[{self.attribute}]"
        if self.b > 0:
            return f"{head} + {self.b}"
        if self.b < 0:
            return f"{head} - {-self.b}"
        return head


@dataclass(frozen=True)
class Aggregation:
    op: str
    left: "Expression"
    right: "Expression"

    def __post_init__(self) -> None:
        if self.op not in AGG_OPS:
            raise ValueError(f"unknown aggregation operator {self.op!r}")
        for child in (self.left, self.right):
            if isinstance(child, Aggregation):
                raise ValueError("aggregation children cannot be aggregations")

    def __str__(self) -> str:
        return f"{self.op}({self.left}, {self.right})"


Expression = Union[Constant, Retrieval, Calculation, Aggregation]


def operands(expr: Expression) -> list[tuple[str, str]]:
    """(var, attribute) pairs the expression reads, in first-use order, deduplicated."""
    out: list[tuple[str, str]] = []

    def walk(e: Expression) -> None:
        if isinstance(e, (Retrieval, Calculation)):
            pair = (e.var, e.attribute)
            if pair not in out:
                out.append(pair)
        elif isinstance(e, Aggregation):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return out


def eval_expression(expr: Expression, binding: Binding, lookup: Lookup) -> int:
    """Evaluate ``expr`` with placeholders resolved through ``binding``.

    ``lookup(entity, attribute)`` must return the known value or raise
    :class:`MissingAttribute` (any ``KeyError`` is converted).
    """
    if isinstance(expr, Constant):
        return check_value(expr.c)
    if isinstance(expr, (Retrieval, Calculation)):
        try:
            entity = binding[expr.var]
        except KeyError:
            raise UnboundVariable(expr.var) from None
        try:
            x = lookup(entity, expr.attribute)
        except MissingAttribute:
            raise
        except KeyError:
            raise MissingAttribute(entity, expr.attribute) from None
        if isinstance(expr, Retrieval):
            return check_value(x)
        return check_value(expr.k * x + expr.b)
    if isinstance(expr, Aggregation):
        left = eval_expression(expr.left, binding, lookup)
        right = eval_expression(expr.right, binding, lookup)
        if expr.op == "max":
            return max(left, right)
        if expr.op == "min":
            return min(left, right)
        if expr.op == "addition":
            return check_value(left + right)
        return check_value(left - right)
    raise TypeError(f"not an expression: {expr!r}")


# ------------------------------------------------------------ atoms & rules


@dataclass(frozen=True)
class AttrAtom:
    var: str
    attribute: str
    value: int

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.var,)

    def __str__(self) -> str:
        return f"is({self.var}, {self.attribute}, {self.value})"


@dataclass(frozen=True)
class RelAtom:
    relation: str
    subject_var: str
    object_var: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.subject_var, self.object_var)

    def __str__(self) -> str:
        return f"{self.relation}({self.subject_var}, {self.object_var})"


@dataclass(frozen=True)
class AttrConclusion:
    var: str
    attribute: str
    expr: Expression

    @property
    def variables(self) -> tuple[str, ...]:
        out = [self.var]
        for v, _ in operands(self.expr):
            if v not in out:
                out.append(v)
        return tuple(out)

    def __str__(self) -> str:
        return f"is({self.var}, {self.attribute}, {self.expr})"


Atom = Union[AttrAtom, RelAtom]
Conclusion = Union[AttrConclusion, RelAtom]


@dataclass(frozen=True)
class Rule:
    condition: tuple[Atom, ...]
    conclusion: Conclusion
    id: int = 0

    def condition_variables(self) -> list[str]:
        out: list[str] = []
        for atom in self.condition:
            for v in atom.variables:
                if v not in out:
                    out.append(v)
        return out

    def operands(self) -> list[tuple[str, str]]:
        if isinstance(self.conclusion, AttrConclusion):
            return operands(self.conclusion.expr)
        return []

    def __str__(self) -> str:
        cond = " and ".join(str(a) for a in self.condition)
        return f"{cond} => {self.conclusion}"


@dataclass(frozen=True)
class Query:
    entity: str
    attribute: str

    def __str__(self) -> str:
        return f"is({self.entity}, {self.attribute}, ?)"


def rule_well_formed(rule: Rule) -> bool:
    if not rule.condition:
        return False
    bound = set(rule.condition_variables())
    return set(rule.conclusion.variables) <= bound


def substitute(item: Atom | Conclusion, binding: Binding, value: int | None = None) -> Fact:
    """Ground ``item`` under ``binding``.

    Attribute conclusions need the already evaluated ``value``.
    """

    def bound(var: str) -> str:
        try:
            return binding[var]
        except KeyError:
            raise UnboundVariable(var) from None

    if isinstance(item, RelAtom):
        return RelFact(item.relation, bound(item.subject_var), bound(item.object_var))
    if isinstance(item, AttrAtom):
        return AttrFact(bound(item.var), item.attribute, item.value)
    if isinstance(item, AttrConclusion):
        if value is None:
            raise ValueError("attribute conclusion needs an evaluated value")
        return AttrFact(bound(item.var), item.attribute, value)
    raise TypeError(f"cannot substitute {item!r}")


def canonical_variables(rule: Rule) -> Rule:
    """Rename placeholders to entity_1, entity_2, ... in first-occurrence order."""
    order = rule.condition_variables()
    for v in rule.conclusion.variables:
        if v not in order:
            order.append(v)
    mapping = {v: f"entity_{i}" for i, v in enumerate(order, 1)}
    if all(k == v for k, v in mapping.items()):
        return rule
    return rename_rule(rule, mapping)


def rename_rule(rule: Rule, mapping: Mapping[str, str]) -> Rule:
    def ren_expr(e: Expression) -> Expression:
        if isinstance(e, Retrieval):
            return Retrieval(mapping[e.var], e.attribute)
        if isinstance(e, Calculation):
            return Calculation(e.k, mapping[e.var], e.attribute, e.b)
        if isinstance(e, Aggregation):
            return Aggregation(e.op, ren_expr(e.left), ren_expr(e.right))
        return e

    def ren(a):
        if isinstance(a, AttrAtom):
            return AttrAtom(mapping[a.var], a.attribute, a.value)
        if isinstance(a, RelAtom):
            return RelAtom(a.relation, mapping[a.subject_var], mapping[a.object_var])
        return AttrConclusion(mapping[a.var], a.attribute, ren_expr(a.expr))

    return Rule(tuple(ren(a) for a in rule.condition), ren(rule.conclusion), rule.id)


# ------------------------------------------------------- canonical text I/O

_TOKEN = re.compile(r"\s*(?:(=>)|(\d+)|([A-Za-z_][A-Za-z0-9_]*)|([()\[\],*+\-?]))")


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: list[str] = []
        pos = 0
        stripped = text.rstrip()
        while pos < len(stripped):
            m = _TOKEN.match(stripped, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character at {pos} in {text!r}")
            self.items.append(m.group(m.lastindex))
            pos = m.end()
        self.i = 0

    def peek(self, ahead: int = 0) -> str | None:
        j = self.i + ahead
        return self.items[j] if j < len(self.items) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of {self.text!r}")
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise ParseError(f"expected {tok!r}, got {got!r} in {self.text!r}")

    def ident(self) -> str:
        tok = self.next()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            raise ParseError(f"expected a name, got {tok!r} in {self.text!r}")
        return tok

    def number(self) -> int:
        neg = False
        if self.peek() == "-":
            self.next()
            neg = True
        tok = self.next()
        if not tok.isdigit():
            raise ParseError(f"expected a number, got {tok!r} in {self.text!r}")
        return -int(tok) if neg else int(tok)

    def done(self) -> None:
        if self.peek() is not None:
            raise ParseError(f"trailing input {self.peek()!r} in {self.text!r}")


def _parse_expr(t: _Tokens, allow_agg: bool = True) -> Expression:
    tok = t.peek()
    if tok in AGG_OPS and t.peek(1) == "(":
        if not allow_agg:
            raise ParseError("nested aggregation is not supported")
        op = t.next()
        t.expect("(")
        left = _parse_expr(t, allow_agg=False)
        t.expect(",")
        right = _parse_expr(t, allow_agg=False)
        t.expect(")")
        return Aggregation(op, left, right)
    k: int | None = None
    if tok == "-" or (tok is not None and tok.isdigit()):
        num = t.number()
        if t.peek() != "*":
            return Constant(num)
        t.next()
        k = num
    var = t.ident()
    t.expect("[")
    attr = t.ident()
    t.expect("]")
    b: int | None = None
    if t.peek() in ("+", "-") and t.peek(1) is not None and t.peek(1).isdigit():
        sign = t.next()
        b = int(t.next()) * (1 if sign == "+" else -1)
    if k is None and b is None:
        return Retrieval(var, attr)
    return Calculation(1 if k is None else k, var, attr, 0 if b is None else b)


def _parse_atom(t: _Tokens) -> Atom | AttrConclusion | AttrFact | RelFact:
    head = t.ident()
    t.expect("(")
    first = t.ident()
    t.expect(",")
    if head == "is":
        attr = t.ident()
        t.expect(",")
        expr = _parse_expr(t)
        t.expect(")")
        if isinstance(expr, Constant):
            return AttrAtom(first, attr, expr.c)
        return AttrConclusion(first, attr, expr)
    second = t.ident()
    t.expect(")")
    return RelAtom(head, first, second)


def parse_fact(text: str) -> Fact:
    t = _Tokens(text)
    atom = _parse_atom(t)
    t.done()
    if isinstance(atom, AttrAtom):
        return AttrFact(atom.var, atom.attribute, check_value(atom.value))
    if isinstance(atom, RelAtom):
        return RelFact(atom.relation, atom.subject_var, atom.object_var)
    raise ParseError(f"facts carry plain numbers, not expressions: {text!r}")


def parse_expression(text: str) -> Expression:
    t = _Tokens(text)
    e = _parse_expr(t)
    t.done()
    return e


def parse_rule(text: str, rule_id: int = 0) -> Rule:
    t = _Tokens(text)
    cond: list[Atom] = []
    while True:
        atom = _parse_atom(t)
        if isinstance(atom, AttrConclusion):
            raise ParseError(f"condition atoms carry plain numbers: {text!r}")
        cond.append(atom)
        tok = t.next()
        if tok == "=>":
            break
        if tok != "and":
            raise ParseError(f"expected 'and' or '=>', got {tok!r} in {text!r}")
    concl = _parse_atom(t)
    t.done()
    if isinstance(concl, AttrAtom):
        concl = AttrConclusion(concl.var, concl.attribute, Constant(concl.value))
    return Rule(tuple(cond), concl, rule_id)


# ------------------------------------------------------ structured (JSON) form


def expr_to_dict(e: Expression) -> dict[str, Any]:
    if isinstance(e, Constant):
        return {"type": "constant", "c": e.c}
    if isinstance(e, Retrieval):
        return {"type": "retrieval", "var": e.var, "attribute": e.attribute}
    if isinstance(e, Calculation):
        return {"type": "calculation", "k": e.k, "var": e.var, "attribute": e.attribute, "b": e.b}
    return {"type": "aggregation", "op": e.op, "left": expr_to_dict(e.left), "right": expr_to_dict(e.right)}


def expr_from_dict(d: Mapping[str, Any]) -> Expression:
    kind = d["type"]
    if kind == "constant":
        return Constant(d["c"])
    if kind == "retrieval":
        return Retrieval(d["var"], d["attribute"])
    if kind == "calculation":
        return Calculation(d["k"], d["var"], d["attribute"], d["b"])
    if kind == "aggregation":
        return Aggregation(d["op"], expr_from_dict(d["left"]), expr_from_dict(d["right"]))
    raise ValueError(f"unknown expression type {kind!r}")


def fact_to_dict(f: Fact) -> dict[str, Any]:
    if isinstance(f, AttrFact):
        return {"type": "attribute", "entity": f.entity, "attribute": f.attribute, "value": f.value}
    return {"type": "relation", "relation": f.relation, "subject": f.subject, "object": f.object}


def fact_from_dict(d: Mapping[str, Any]) -> Fact:
    if d["type"] == "attribute":
        return AttrFact(d["entity"], d["attribute"], d["value"])
    return RelFact(d["relation"], d["subject"], d["object"])


def _atom_to_dict(a) -> dict[str, Any]:
    if isinstance(a, AttrAtom):
        return {"type": "attribute", "var": a.var, "attribute": a.attribute, "value": a.value}
    if isinstance(a, RelAtom):
        return {"type": "relation", "relation": a.relation, "subject": a.subject_var, "object": a.object_var}
    return {"type": "attribute", "var": a.var, "attribute": a.attribute, "expr": expr_to_dict(a.expr)}


def _atom_from_dict(d: Mapping[str, Any]):
    if d["type"] == "relation":
        return RelAtom(d["relation"], d["subject"], d["object"])
    if "expr" in d:
        return AttrConclusion(d["var"], d["attribute"], expr_from_dict(d["expr"]))
    return AttrAtom(d["var"], d["attribute"], d["value"])


def rule_to_dict(r: Rule) -> dict[str, Any]:
    return {
        "condition": [_atom_to_dict(a) for a in r.condition],
        "conclusion": _atom_to_dict(r.conclusion),
    }


def rule_from_dict(d: Mapping[str, Any], rule_id: int = 0) -> Rule:
    return Rule(
        tuple(_atom_from_dict(a) for a in d["condition"]),
        _atom_from_dict(d["conclusion"]),
        rule_id,
    )


def iter_numbers(text: str) -> Iterator[str]:
    """Numeric literals in canonical text; a minus glued to digits is a sign."""
    for m in re.finditer(r"(?<![\w\]])-?\d+", text):
        yield m.group(0)
