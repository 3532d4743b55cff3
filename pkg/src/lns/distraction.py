"""Pad a constructed world with irrelevant facts and rules."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .config import SynthesisConfig
from .dag import RETRY_BUDGET, SynthesisExhausted, sample_expression
from .engine import Conflict, FactSet, extend_closure
from .vocab import WorldElements
from .world import (
    AttrAtom,
    AttrConclusion,
    AttrFact,
    Fact,
    RelAtom,
    RelFact,
    Rule,
    ValueOverflow,
    canonical_variables,
    operands,
    rule_well_formed,
)


@dataclass
class PaddedWorld:
    facts: list[Fact]
    rules: list[Rule]
    closure: FactSet
    distractor_facts: list[Fact]
    distractor_rules: list[Rule]


def random_fact(elements: WorldElements, config: SynthesisConfig, rng: random.Random) -> Fact:
    if elements.relations and rng.random() < 0.5:
        a, b = rng.sample(elements.entities, 2)
        return RelFact(rng.choice(elements.relations), a, b)
    value = rng.randint(config.operand_min, config.operand_max)
    return AttrFact(rng.choice(elements.entities), rng.choice(elements.attributes), value)


def random_rule(elements: WorldElements, config: SynthesisConfig, rng: random.Random, rule_id: int = 0) -> Rule:
    """A rule drawn from the same distributions the DAG constructor uses."""
    n = rng.randint(config.condition_min, config.condition_max)
    n_vars = 0
    condition = []

    def var(reuse_ok: bool = True) -> str:
        nonlocal n_vars
        if n_vars and (n_vars >= len(elements.entities) or (reuse_ok and rng.random() < 0.5)):
            return f"entity_{rng.randint(1, n_vars)}"
        n_vars += 1
        return f"entity_{n_vars}"

    for _ in range(n):
        if elements.relations and rng.random() < 0.5:
            a = var()
            b = var()
            while b == a:
                b = var(reuse_ok=n_vars > 1)
            condition.append(RelAtom(rng.choice(elements.relations), a, b))
        else:
            value = rng.randint(config.operand_min, config.operand_max)
            condition.append(AttrAtom(var(), rng.choice(elements.attributes), value))

    variables = list(dict.fromkeys(v for atom in condition for v in atom.variables))
    if len(variables) >= 2 and elements.relations and rng.random() < 0.5:
        a, b = rng.sample(variables, 2)
        conclusion = RelAtom(rng.choice(elements.relations), a, b)
    else:
        available = [(v, rng.choice(elements.attributes)) for v in variables]
        expr = sample_expression(config, available, rng)
        # never conclude a (var, attribute) the rule itself tests or reads
        used = {(a.var, a.attribute) for a in condition if isinstance(a, AttrAtom)} | set(operands(expr))
        target = rng.choice(variables)
        choices = [a for a in elements.attributes if (target, a) not in used]
        conclusion = AttrConclusion(target, rng.choice(choices), expr)
    return canonical_variables(Rule(tuple(condition), conclusion, rule_id))


def add_distractions(
    facts: list[Fact],
    rules: list[Rule],
    closure: FactSet,
    elements: WorldElements,
    config: SynthesisConfig,
    depth: int,
    rng: random.Random,
) -> PaddedWorld:
    """Add distractors until the world holds exactly the configured totals.

    Each candidate must keep the world conflict-free; a fact whose
    (entity, attribute) or relation triple is already known is rejected, so
    the query's value can never be restated or overridden.
    """
    want_facts, want_rules = config.n_facts(depth), config.n_rules(depth)
    if len(facts) > want_facts or len(rules) > want_rules:
        raise ValueError("reasoning DAG is larger than the configured totals")
    facts, rules = list(facts), list(rules)
    extra_facts: list[Fact] = []
    extra_rules: list[Rule] = []
    seen_rules = {str(canonical_variables(r)) for r in rules}
    todo = ["fact"] * (want_facts - len(facts)) + ["rule"] * (want_rules - len(rules))
    rng.shuffle(todo)
    for kind in todo:
        for _ in range(RETRY_BUDGET):
            try:
                if kind == "fact":
                    fact = random_fact(elements, config, rng)
                    if closure.has_key(fact.key):
                        continue
                    new = extend_closure(closure, rules, new_facts=[fact])
                else:
                    rule = random_rule(elements, config, rng, rule_id=len(rules) + 1)
                    text = str(rule)
                    if text in seen_rules or not rule_well_formed(rule):
                        continue
                    new = extend_closure(closure, rules, new_rules=[rule])
            except ValueOverflow:
                continue
            if isinstance(new, Conflict):
                continue
            closure = new
            if kind == "fact":
                facts.append(fact)
                extra_facts.append(fact)
            else:
                rules.append(rule)
                extra_rules.append(rule)
                seen_rules.add(text)
            break
        else:
            raise SynthesisExhausted(f"no consistent distractor {kind} after {RETRY_BUDGET} draws")
    return PaddedWorld(facts, rules, closure, extra_facts, extra_rules)
