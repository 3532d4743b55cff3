"""Backward construction of the reasoning DAG and its gold derivation.

Construction starts from the query and works downwards.  A goal is either
supported by a synthesized fact or by a synthesized rule whose condition
atoms (and expression operands not covered by the condition) become child
goals one level deeper.  Values flow upwards: a child is built before the
parent's rule is finalised, so condition atom values and the parent's
conclusion value are read off the children once they exist.

Every added fact or rule is checked against the closure of the world built
so far; anything that would give an (entity, attribute) pair two values is
discarded and re-drawn.  Facts and rules are charged against the configured
totals so the distraction stage can always pad up to them exactly.
"""

from __future__ import annotations

import graphlib
import random
from dataclasses import dataclass, field
from typing import Union

from .config import SynthesisConfig
from .engine import Conflict, FactSet, extend_closure
from .vocab import WorldElements
from .world import (
    AGG_OPS,
    Aggregation,
    AttrAtom,
    AttrConclusion,
    AttrFact,
    Calculation,
    Constant,
    Expression,
    Fact,
    Query,
    RelAtom,
    RelFact,
    Retrieval,
    Rule,
    ValueOverflow,
    eval_expression,
    operands,
    rule_well_formed,
    substitute,
)

RETRY_BUDGET = 64
RESTARTS = 16
RULE_PROBABILITY = 0.5
# Attempts (fact or rule draws) allowed in one construction before restarting.
WORK_BUDGET = 4000


class SynthesisExhausted(RuntimeError):
    pass


class _Retry(Exception):
    """A draw that cannot be used; the enclosing synthesis step re-draws."""


def _fold(s: str) -> str:
    return s.casefold()


# --------------------------------------------------------------------- goals


@dataclass(frozen=True)
class AttrGoal:
    entity: str
    attribute: str

    @property
    def key(self) -> tuple[str, str]:
        return (_fold(self.entity), _fold(self.attribute))

    def __str__(self) -> str:
        return f"is({self.entity}, {self.attribute}, ?)"


@dataclass(frozen=True)
class RelGoal:
    relation: str
    subject: str
    object: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (_fold(self.relation), _fold(self.subject), _fold(self.object))

    def __str__(self) -> str:
        return f"{self.relation}({self.subject}, {self.object})"


Goal = Union[AttrGoal, RelGoal]


def goal_of(fact: Fact) -> Goal:
    if isinstance(fact, AttrFact):
        return AttrGoal(fact.entity, fact.attribute)
    return RelGoal(fact.relation, fact.subject, fact.object)


# ---------------------------------------------------------------------- DAG


@dataclass(frozen=True)
class Leaf:
    fact: Fact


@dataclass(frozen=True)
class Derivation:
    rule: Rule
    binding: tuple[tuple[str, str], ...]
    premises: tuple[tuple, ...]
    fact: Fact


Node = Union[Leaf, Derivation]


@dataclass
class ReasoningDag:
    root: tuple
    nodes: dict[tuple, Node]

    def edges(self) -> list[tuple[tuple, tuple]]:
        return [
            (p, key)
            for key, node in self.nodes.items()
            if isinstance(node, Derivation)
            for p in node.premises
        ]

    def topological_order(self) -> list[tuple]:
        """Node keys with premises first; raises graphlib.CycleError on a cycle."""
        graph = {
            key: set(node.premises) if isinstance(node, Derivation) else set()
            for key, node in self.nodes.items()
        }
        return list(graphlib.TopologicalSorter(graph).static_order())

    def height(self, key: tuple | None = None) -> int:
        """Rule applications on the longest path below ``key`` (default: root)."""
        memo: dict[tuple, int] = {}
        for k in self.topological_order():
            node = self.nodes[k]
            if isinstance(node, Leaf):
                memo[k] = 0
            else:
                memo[k] = 1 + max(memo[p] for p in node.premises)
        return memo[self.root if key is None else key]

    def facts(self) -> list[Fact]:
        return [n.fact for n in self.nodes.values() if isinstance(n, Leaf)]

    def rules(self) -> list[Rule]:
        return [n.rule for n in self.nodes.values() if isinstance(n, Derivation)]


@dataclass(frozen=True)
class GoldStep:
    index: int
    rule_id: int
    dep_fact_ids: tuple[int, ...]
    dep_int_ids: tuple[int, ...]
    deps: tuple[str, ...]
    conclusion: Fact

    @property
    def rendered(self) -> str:
        return f"{' & '.join(self.deps)} => int_{self.index}: {statement(self.conclusion)}"


def statement(fact: Fact) -> str:
    if isinstance(fact, AttrFact):
        return f"{fact.entity}'s {fact.attribute} is {fact.value}"
    return f"{fact.relation} exists between {fact.subject} and {fact.object}"


def derive_gold(
    dag: ReasoningDag,
    fact_ids: dict[Fact, int] | None = None,
    rule_ids: dict[Rule, int] | None = None,
) -> tuple[list[GoldStep], int]:
    """Replay the DAG forwards into numbered steps; returns (steps, answer).

    Ids default to the order facts and rules appear in the DAG.
    """
    if fact_ids is None:
        fact_ids = {f: i for i, f in enumerate(dag.facts(), 1)}
    if rule_ids is None:
        rule_ids = {r: i for i, r in enumerate(dag.rules(), 1)}
    steps: list[GoldStep] = []
    step_of: dict[tuple, int] = {}

    def visit(key: tuple) -> None:
        node = dag.nodes[key]
        if isinstance(node, Leaf) or key in step_of:
            return
        for p in node.premises:
            visit(p)
        deps = [f"rule_{rule_ids[node.rule]}"]
        fids, iids = [], []
        for p in node.premises:
            pnode = dag.nodes[p]
            if isinstance(pnode, Leaf):
                fids.append(fact_ids[pnode.fact])
                deps.append(f"fact_{fids[-1]}")
            else:
                iids.append(step_of[p])
                deps.append(f"int_{iids[-1]}")
        index = len(steps) + 1
        steps.append(GoldStep(index, rule_ids[node.rule], tuple(fids), tuple(iids), tuple(deps), node.fact))
        step_of[key] = index

    visit(dag.root)
    if not steps:
        raise RuntimeError("gold derivation needs at least one rule")
    last = steps[-1].conclusion
    if not isinstance(last, AttrFact):
        raise RuntimeError("query conclusion must be an attribute fact")
    return steps, last.value


# --------------------------------------------------------------- expressions


def _uniform(rng: random.Random, config: SynthesisConfig) -> int:
    return rng.randint(config.operand_min, config.operand_max)


def sample_expression(
    config: SynthesisConfig, available: list[tuple[str, str]], rng: random.Random
) -> Expression:
    """Draw an expression over the (var, attribute) operand candidates in ``available``.

    A type that needs an operand falls back to a constant when ``available``
    is empty.
    """

    def leaf(kind: int) -> Expression:
        if kind == 0 or not available:
            return Constant(_uniform(rng, config))
        var, attr = rng.choice(available)
        if kind == 1:
            return Retrieval(var, attr)
        return Calculation(_uniform(rng, config), var, attr, _uniform(rng, config))

    kind = rng.choices(range(4), weights=config.expr_weights)[0]
    if kind < 3:
        return leaf(kind)
    op = rng.choice(AGG_OPS)
    left = leaf(rng.choices(range(3), weights=config.agg_weights)[0])
    right = leaf(rng.choices(range(3), weights=config.agg_weights)[0])
    return Aggregation(op, left, right)


# ------------------------------------------------------------ construction


@dataclass
class ConstructionState:
    facts: list[Fact] = field(default_factory=list)
    rules: list[Rule] = field(default_factory=list)
    closure: FactSet = field(default_factory=FactSet)
    nodes: dict[tuple, Node] = field(default_factory=dict)
    reserved: set[tuple] = field(default_factory=set)
    committed_facts: int = 0
    committed_rules: int = 0

    def snapshot(self) -> "ConstructionState":
        return ConstructionState(
            list(self.facts),
            list(self.rules),
            self.closure,
            dict(self.nodes),
            set(self.reserved),
            self.committed_facts,
            self.committed_rules,
        )

    def restore(self, snap: "ConstructionState") -> None:
        self.__dict__.update(snap.snapshot().__dict__)

    def is_free(self, key: tuple) -> bool:
        return key not in self.reserved and not self.closure.has_key(key)


@dataclass
class _Context:
    elements: WorldElements
    config: SynthesisConfig
    rng: random.Random
    depth: int
    budget_facts: int
    budget_rules: int
    work: int = 0

    def tick(self) -> None:
        self.work += 1
        if self.work > WORK_BUDGET:
            raise SynthesisExhausted("construction work budget exceeded")

    def chain_cost(self, height: int) -> tuple[int, int]:
        return self.config.min_dag_cost(height)


def build_node(goal: Goal, depth: int, must_extend: bool, state: ConstructionState, ctx: _Context) -> int:
    """Support ``goal`` with a fact or a rule; returns the realised subtree height.

    The caller has reserved the goal's minimal cost; it is released here and
    replaced by what is actually built.  ``must_extend`` marks the last
    pending node of the chain that has to reach the target depth.
    """
    remaining = ctx.depth - depth
    if must_extend:
        rr, rf = ctx.chain_cost(remaining)
    else:
        rr, rf = 0, 1
    state.committed_rules -= rr
    state.committed_facts -= rf

    if remaining == 0:
        synthesize_fact(goal, state, ctx)
        return 0
    if must_extend:
        return synthesize_rule(goal, depth, True, state, ctx)
    roll = ctx.rng.random()
    affordable = (
        state.committed_rules + 1 <= ctx.budget_rules
        and state.committed_facts + ctx.config.condition_min <= ctx.budget_facts
    )
    if roll < RULE_PROBABILITY and affordable:
        snap = state.snapshot()
        try:
            return synthesize_rule(goal, depth, False, state, ctx)
        except SynthesisExhausted:
            if ctx.work > WORK_BUDGET:
                raise
            state.restore(snap)
    synthesize_fact(goal, state, ctx)
    return 0


def synthesize_fact(goal: Goal, state: ConstructionState, ctx: _Context) -> None:
    if state.closure.has_key(goal.key):
        raise SynthesisExhausted(f"{goal} became derivable before it was supported")
    for _ in range(RETRY_BUDGET):
        ctx.tick()
        if isinstance(goal, AttrGoal):
            fact: Fact = AttrFact(goal.entity, goal.attribute, _uniform(ctx.rng, ctx.config))
        else:
            fact = RelFact(goal.relation, goal.subject, goal.object)
        try:
            new = extend_closure(state.closure, state.rules, new_facts=[fact])
        except ValueOverflow:
            continue
        if isinstance(new, Conflict):
            if isinstance(goal, RelGoal):
                break  # nothing left to re-draw
            continue
        state.facts.append(fact)
        state.nodes[goal.key] = Leaf(fact)
        state.closure = new
        state.committed_facts += 1
        return
    raise SynthesisExhausted(f"no consistent fact for {goal}")


@dataclass
class _Skeleton:
    condition: list  # AttrAtom with value None placeholder or RelAtom
    conclusion_var: str
    expr: Expression | None
    binding: dict[str, str]
    children: list[Goal]
    child_of_atom: list[Goal | None]


def synthesize_rule(goal: Goal, depth: int, must_extend: bool, state: ConstructionState, ctx: _Context) -> int:
    """Synthesize a rule concluding ``goal`` and recursively support its premises."""
    remaining = ctx.depth - depth
    for _ in range(RETRY_BUDGET):
        ctx.tick()
        snap = state.snapshot()
        try:
            return _try_rule(goal, depth, remaining, must_extend, state, ctx)
        except _Retry:
            state.restore(snap)
        except SynthesisExhausted:
            if ctx.work > WORK_BUDGET:
                raise
            state.restore(snap)
    raise SynthesisExhausted(f"no consistent rule for {goal}")


def _try_rule(goal, depth, remaining, must_extend, state, ctx) -> int:
    cfg, rng = ctx.config, ctx.rng
    last_cost = ctx.chain_cost(remaining - 1)[1] if must_extend else 1
    last_rules = ctx.chain_cost(remaining - 1)[0] if must_extend else 0
    spare = ctx.budget_facts - state.committed_facts
    max_children = spare - last_cost + 1
    if state.committed_rules + 1 + last_rules > ctx.budget_rules:
        raise _Retry
    n = rng.randint(cfg.condition_min, cfg.condition_max)
    n = min(n, max_children)
    if n < cfg.condition_min:
        raise _Retry

    sk = _draw_skeleton(goal, n, state, ctx, max_children)
    children = sk.children

    # reserve children: the last one carries the chain obligation
    for i, child in enumerate(children):
        state.reserved.add(child.key)
        must = must_extend and i == len(children) - 1
        r, f = ctx.chain_cost(remaining - 1) if must else (0, 1)
        state.committed_rules += r
        state.committed_facts += f
    state.committed_rules += 1
    if state.committed_facts > ctx.budget_facts or state.committed_rules > ctx.budget_rules:
        raise _Retry

    best = 0
    target = remaining - 1
    for i, child in enumerate(children):
        is_last = i == len(children) - 1
        must = must_extend and is_last and best < target
        if must_extend and is_last and not must:
            # an earlier sibling already reached the target depth
            r, f = ctx.chain_cost(target)
            state.committed_rules -= r
            state.committed_facts -= f - 1
        best = max(best, build_node(child, depth + 1, must, state, ctx))
    if must_extend and best != target:
        raise _Retry

    # values flow upward from the built children
    lookup = state.closure.value
    condition = []
    for atom in sk.condition:
        if isinstance(atom, AttrAtom):
            atom = AttrAtom(atom.var, atom.attribute, lookup(sk.binding[atom.var], atom.attribute))
        condition.append(atom)
    if isinstance(goal, AttrGoal):
        try:
            value = eval_expression(sk.expr, sk.binding, lookup)
        except ValueOverflow:
            raise _Retry from None
        conclusion = AttrConclusion(sk.conclusion_var, goal.attribute, sk.expr)
        fact: Fact = substitute(conclusion, sk.binding, value)
    else:
        subj_var, obj_var = sk.conclusion_var
        conclusion = RelAtom(goal.relation, subj_var, obj_var)
        fact = substitute(conclusion, sk.binding)
    rule = Rule(tuple(condition), conclusion)
    if not rule_well_formed(rule):
        raise _Retry

    try:
        new = extend_closure(state.closure, state.rules, new_rules=[rule])
    except ValueOverflow:
        raise _Retry from None
    if isinstance(new, Conflict) or fact not in new:
        raise _Retry

    premises = tuple(c.key for c in children)
    node = Derivation(rule, tuple(sorted(sk.binding.items())), premises, fact)
    trial = dict(state.nodes)
    trial[goal.key] = node
    try:
        graphlib.TopologicalSorter(
            {k: set(v.premises) if isinstance(v, Derivation) else set() for k, v in trial.items()}
        ).prepare()
    except graphlib.CycleError:
        raise _Retry from None
    state.rules.append(rule)
    state.nodes = trial
    state.closure = new
    return best + 1


def _draw_skeleton(goal: Goal, n: int, state: ConstructionState, ctx: _Context, max_children: int) -> _Skeleton:
    rng = ctx.rng
    E, A, R = ctx.elements.entities, ctx.elements.attributes, ctx.elements.relations
    binding: dict[str, str] = {}
    taken: set[tuple] = {goal.key}

    def new_var(entity: str) -> str:
        var = f"entity_{len(binding) + 1}"
        binding[var] = entity
        return var

    if isinstance(goal, AttrGoal):
        required = [new_var(goal.entity)]
        concl_var: object = required[0]
    else:
        required = [new_var(goal.subject), new_var(goal.object)]
        concl_var = (required[0], required[1])

    def fresh(key: tuple) -> bool:
        return key not in taken and state.is_free(key)

    def pick_var(forced: str | None) -> str | None:
        if forced is not None:
            return forced
        unused = [e for e in E if _fold(e) not in {_fold(x) for x in binding.values()}]
        if unused and rng.random() < 0.5:
            return new_var(rng.choice(unused))
        return rng.choice(list(binding))

    def attr_atom(var: str) -> AttrAtom | None:
        for _ in range(8):
            attr = rng.choice(A)
            key = (_fold(binding[var]), _fold(attr))
            if fresh(key):
                taken.add(key)
                return AttrAtom(var, attr, 0)
        return None

    def rel_atom(a: str, b: str) -> RelAtom | None:
        if _fold(binding[a]) == _fold(binding[b]) or not R:
            return None
        for _ in range(8):
            rel = rng.choice(R)
            key = (_fold(rel), _fold(binding[a]), _fold(binding[b]))
            if fresh(key):
                taken.add(key)
                return RelAtom(rel, a, b)
        return None

    condition: list = []
    for i in range(n):
        covered = {v for atom in condition for v in atom.variables}
        uncovered = [v for v in required if v not in covered]
        slots_left = n - i
        atom = None
        if len(uncovered) >= 2 and slots_left == 1:
            a, b = uncovered[0], uncovered[1]
            atom = rel_atom(a, b) if rng.random() < 0.5 else rel_atom(b, a)
        else:
            want_rel = bool(R) and rng.random() < 0.5
            anchor = uncovered[0] if uncovered else None
            if want_rel:
                first = anchor if anchor is not None else pick_var(None)
                if len(uncovered) >= 2 and rng.random() < 0.5:
                    other = uncovered[1]
                else:
                    other = pick_var(None)
                    if other == first:
                        unused = [e for e in E if _fold(e) not in {_fold(x) for x in binding.values()}]
                        other = new_var(rng.choice(unused)) if unused else None
                if other is not None:
                    atom = rel_atom(first, other) if rng.random() < 0.5 else rel_atom(other, first)
            if atom is None:
                atom = attr_atom(pick_var(anchor))
        if atom is None:
            raise _Retry
        condition.append(atom)

    children: list[Goal] = []
    for atom in condition:
        if isinstance(atom, AttrAtom):
            children.append(AttrGoal(binding[atom.var], atom.attribute))
        else:
            children.append(RelGoal(atom.relation, binding[atom.subject_var], binding[atom.object_var]))

    expr = None
    if isinstance(goal, AttrGoal):
        reuse = [(a.var, a.attribute) for a in condition if isinstance(a, AttrAtom)]
        extra: list[tuple[str, str]] = []
        spare = max_children - len(children)
        if spare > 0:
            for var in dict.fromkeys(v for atom in condition for v in atom.variables):
                for _ in range(8):
                    attr = rng.choice(A)
                    key = (_fold(binding[var]), _fold(attr))
                    if fresh(key) and (var, attr) not in extra:
                        extra.append((var, attr))
                        break
        for _ in range(8):
            expr = sample_expression(ctx.config, reuse + extra, rng)
            fresh_ops = [p for p in operands(expr) if p not in reuse]
            if len(fresh_ops) <= spare:
                break
        else:
            expr = sample_expression(ctx.config, reuse, rng)
            fresh_ops = []
        for var, attr in fresh_ops:
            taken.add((_fold(binding[var]), _fold(attr)))
            children.append(AttrGoal(binding[var], attr))

    return _Skeleton(condition, concl_var, expr, binding, children, [])


# ------------------------------------------------------------- entry point


@dataclass
class DagResult:
    dag: ReasoningDag
    facts: list[Fact]
    rules: list[Rule]
    closure: FactSet
    depth: int
    gold_steps: list[GoldStep]
    answer: int


def construct_dag(
    elements: WorldElements,
    query: Query,
    config: SynthesisConfig,
    rng: random.Random,
    depth: int | None = None,
) -> DagResult:
    """Build a reasoning DAG answering ``query`` at a sampled (or given) depth."""
    if depth is None:
        depth = rng.randint(config.depth_min, config.depth_max)
    last_error: Exception | None = None
    for _ in range(RESTARTS):
        ctx = _Context(
            elements, config, rng, depth, config.n_facts(depth), config.n_rules(depth)
        )
        state = ConstructionState()
        root = AttrGoal(query.entity, query.attribute)
        state.reserved.add(root.key)
        state.committed_rules, state.committed_facts = ctx.chain_cost(depth)
        try:
            height = build_node(root, 0, True, state, ctx)
        except SynthesisExhausted as exc:
            last_error = exc
            continue
        dag = ReasoningDag(root.key, state.nodes)
        if height != depth or dag.height() != depth:
            last_error = SynthesisExhausted(f"realised depth {height} != {depth}")
            continue
        steps, answer = derive_gold(dag)
        return DagResult(dag, state.facts, state.rules, state.closure, depth, steps, answer)
    raise SynthesisExhausted(f"gave up after {RESTARTS} restarts: {last_error}")
