"""Forward-chaining closure with attribute-uniqueness conflict detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

from .world import (
    AttrAtom,
    AttrConclusion,
    AttrFact,
    Fact,
    MissingAttribute,
    RelAtom,
    RelFact,
    Rule,
    ValueOverflow,
    eval_expression,
    substitute,
)


def _fold(s: str) -> str:
    return s.casefold()


@dataclass(frozen=True)
class Conflict:
    entity: str
    attribute: str
    existing: int
    derived: int

    @property
    def key(self) -> tuple[str, str]:
        return (_fold(self.entity), _fold(self.attribute))


class ConflictError(Exception):
    def __init__(self, conflict: Conflict):
        super().__init__(
            f"{conflict.attribute} of {conflict.entity}: {conflict.existing} vs {conflict.derived}"
        )
        self.conflict = conflict


class FactSet:
    """Indexed set of ground facts; at most one value per (entity, attribute)."""

    def __init__(self, facts: Iterable[Fact] = ()):
        self._attrs: dict[tuple[str, str], AttrFact] = {}
        self._rels: dict[tuple[str, str, str], RelFact] = {}
        self._by_attr: dict[str, list[AttrFact]] = {}
        self._by_rel: dict[str, list[RelFact]] = {}
        self.rounds = 0
        for f in facts:
            self.add(f)

    def copy(self) -> "FactSet":
        new = FactSet.__new__(FactSet)
        new._attrs = dict(self._attrs)
        new._rels = dict(self._rels)
        new._by_attr = {k: list(v) for k, v in self._by_attr.items()}
        new._by_rel = {k: list(v) for k, v in self._by_rel.items()}
        new.rounds = self.rounds
        return new

    def add(self, fact: Fact) -> bool:
        """Insert ``fact``; False if already present.  Raises ConflictError on a clash."""
        if isinstance(fact, AttrFact):
            old = self._attrs.get(fact.key)
            if old is not None:
                if old.value != fact.value:
                    raise ConflictError(Conflict(old.entity, old.attribute, old.value, fact.value))
                return False
            self._attrs[fact.key] = fact
            self._by_attr.setdefault(fact.key[1], []).append(fact)
            return True
        if fact.key in self._rels:
            return False
        self._rels[fact.key] = fact
        self._by_rel.setdefault(fact.key[0], []).append(fact)
        return True

    def value(self, entity: str, attribute: str) -> int:
        try:
            return self._attrs[(_fold(entity), _fold(attribute))].value
        except KeyError:
            raise MissingAttribute(entity, attribute) from None

    def get_attr(self, entity: str, attribute: str) -> AttrFact | None:
        return self._attrs.get((_fold(entity), _fold(attribute)))

    def has_key(self, key: tuple) -> bool:
        return key in self._attrs if len(key) == 2 else key in self._rels

    def with_attribute(self, attribute: str) -> list[AttrFact]:
        return self._by_attr.get(_fold(attribute), [])

    def with_relation(self, relation: str) -> list[RelFact]:
        return self._by_rel.get(_fold(relation), [])

    def __contains__(self, fact: object) -> bool:
        if isinstance(fact, AttrFact):
            return self._attrs.get(fact.key) == fact
        if isinstance(fact, RelFact):
            return fact.key in self._rels
        return False

    def __iter__(self) -> Iterator[Fact]:
        yield from self._attrs.values()
        yield from self._rels.values()

    def __len__(self) -> int:
        return len(self._attrs) + len(self._rels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FactSet) and set(self) == set(other)

    def __repr__(self) -> str:
        return f"FactSet({len(self._attrs)} attribute facts, {len(self._rels)} relation facts)"


# ------------------------------------------------------------------ matching

# A slot is something a binding must satisfy: a condition atom, or an operand
# read ("var", attribute) that must resolve to a known value.
_Slot = Union[AttrAtom, RelAtom, tuple]


def _slots(rule: Rule, require_operands: bool) -> list[_Slot]:
    slots: list[_Slot] = list(rule.condition)
    if require_operands:
        covered = {(a.var, _fold(a.attribute)) for a in rule.condition if isinstance(a, AttrAtom)}
        for var, attr in rule.operands():
            if (var, _fold(attr)) not in covered:
                slots.append((var, attr))
    return slots


def _candidates(slot: _Slot, source: FactSet | Sequence[Fact]) -> Iterable[Fact]:
    if isinstance(source, FactSet):
        if isinstance(slot, RelAtom):
            return source.with_relation(slot.relation)
        attr = slot.attribute if isinstance(slot, AttrAtom) else slot[1]
        return source.with_attribute(attr)
    if isinstance(slot, RelAtom):
        rel = _fold(slot.relation)
        return [f for f in source if isinstance(f, RelFact) and f.key[0] == rel]
    attr = _fold(slot.attribute if isinstance(slot, AttrAtom) else slot[1])
    return [f for f in source if isinstance(f, AttrFact) and f.key[1] == attr]


def _unify(slot: _Slot, fact: Fact, binding: dict[str, str]) -> dict[str, str] | None:
    if isinstance(slot, RelAtom):
        pairs = ((slot.subject_var, fact.subject), (slot.object_var, fact.object))
    elif isinstance(slot, AttrAtom):
        if fact.value != slot.value:
            return None
        pairs = ((slot.var, fact.entity),)
    else:
        pairs = ((slot[0], fact.entity),)
    out = binding
    for var, ent in pairs:
        cur = out.get(var)
        if cur is None:
            if out is binding:
                out = dict(binding)
            out[var] = ent
        elif _fold(cur) != _fold(ent):
            return None
    return out


def _join(
    slots: list[_Slot], sources: list[FactSet | Sequence[Fact]], binding: dict[str, str]
) -> Iterator[dict[str, str]]:
    if not slots:
        yield binding
        return
    slot, rest = slots[0], slots[1:]
    for fact in _candidates(slot, sources[0]):
        b = _unify(slot, fact, binding)
        if b is not None:
            yield from _join(rest, sources[1:], b)


def _binding_key(rule: Rule, binding: dict[str, str]) -> tuple:
    return tuple(_fold(binding[v]) for v in rule.condition_variables())


def match_rule(rule: Rule, known: FactSet, require_operands: bool = True) -> list[dict[str, str]]:
    """All bindings satisfying every condition atom (and, by default, whose
    expression operands are known), sorted by the bound entities."""
    slots = _slots(rule, require_operands)
    found = {}
    for b in _join(slots, [known] * len(slots), {}):
        found.setdefault(_binding_key(rule, b), b)
    return [found[k] for k in sorted(found)]


def _delta_bindings(rule: Rule, known: FactSet, delta: Sequence[Fact]) -> list[dict[str, str]]:
    """Bindings that use at least one fact from ``delta`` (semi-naive step)."""
    slots = _slots(rule, True)
    found = {}
    for i in range(len(slots)):
        order = [slots[i]] + slots[:i] + slots[i + 1 :]
        sources = [delta] + [known] * (len(slots) - 1)
        for b in _join(order, sources, {}):
            found.setdefault(_binding_key(rule, b), b)
    return [found[k] for k in sorted(found)]


def apply_rule(rule: Rule, binding: dict[str, str], known: FactSet) -> Fact:
    concl = rule.conclusion
    if isinstance(concl, AttrConclusion):
        value = eval_expression(concl.expr, binding, known.value)
        return substitute(concl, binding, value)
    return substitute(concl, binding)


# ------------------------------------------------------------------- closure


def _saturate(
    known: FactSet,
    rules: Sequence[Rule],
    delta: Sequence[Fact],
    fresh_rules: Sequence[Rule] = (),
) -> FactSet | Conflict:
    rounds = 0
    old_rules = list(rules)
    fresh_rules = list(fresh_rules)
    while True:
        rounds += 1
        derived: dict[tuple, Fact] = {}
        conflicts: list[Conflict] = []
        work = [(r, _delta_bindings(r, known, delta) if delta else []) for r in old_rules]
        # fresh rules see every fact once; afterwards they join the semi-naive pool
        work += [(r, match_rule(r, known)) for r in fresh_rules]
        old_rules += fresh_rules
        fresh_rules = []
        for rule, bindings in work:
            for b in bindings:
                fact = apply_rule(rule, b, known)
                if isinstance(fact, AttrFact):
                    old = known.get_attr(fact.entity, fact.attribute)
                    if old is not None:
                        if old.value != fact.value:
                            conflicts.append(Conflict(old.entity, old.attribute, old.value, fact.value))
                        continue
                    prev = derived.get(fact.key)
                    if prev is not None and prev.value != fact.value:
                        lo, hi = sorted((prev.value, fact.value))
                        conflicts.append(Conflict(prev.entity, prev.attribute, lo, hi))
                        continue
                elif fact in known:
                    continue
                derived.setdefault(fact.key, fact)
        if conflicts:
            return min(conflicts, key=lambda c: (c.key, c.existing, c.derived))
        if not derived:
            known.rounds = rounds
            return known
        delta = list(derived.values())
        for f in delta:
            known.add(f)


def closure(facts: FactSet | Iterable[Fact], rules: Sequence[Rule]) -> FactSet | Conflict:
    """Least fixpoint of rule application, or the first uniqueness Conflict.

    A conflict is reported for the smallest clashing (entity, attribute) pair
    among those found in the earliest conflicting round, so the outcome does
    not depend on rule order.  ``rounds`` on the result counts iterations,
    including the final one that derives nothing.
    """
    known = FactSet()
    seed = list(facts)
    try:
        for f in seed:
            known.add(f)
    except ConflictError as exc:
        return exc.conflict
    return _saturate(known, [], [], list(rules))


def extend_closure(
    base: FactSet,
    rules: Sequence[Rule],
    new_facts: Iterable[Fact] = (),
    new_rules: Sequence[Rule] = (),
) -> FactSet | Conflict:
    """Closure after adding facts/rules to a world whose closure is ``base``.

    ``rules`` are the rules ``base`` is already closed under.  ``base`` is
    not modified.
    """
    known = base.copy()
    delta = []
    try:
        for f in new_facts:
            if known.add(f):
                delta.append(f)
    except ConflictError as exc:
        return exc.conflict
    return _saturate(known, list(rules), delta, list(new_rules))


def check_consistency(
    candidate: Fact | Rule, facts: Iterable[Fact], rules: Sequence[Rule]
) -> bool:
    if isinstance(candidate, Rule):
        facts, rules = list(facts), list(rules) + [candidate]
    else:
        facts, rules = list(facts) + [candidate], list(rules)
    try:
        return not isinstance(closure(facts, rules), Conflict)
    except ValueOverflow:
        return False
