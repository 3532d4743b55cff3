"""Transcript parsing and step-level verification for process/answer scoring."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence, Union

from .engine import ConflictError, FactSet, apply_rule, match_rule
from .lemma import normalize_token, tokens_match
from .llm import ChatClient, TransportError
from .world import AttrFact, Fact, Query, RelFact, Rule, ValueOverflow, MissingAttribute

__all__ = [
    "FactRef", "RuleRef", "IntRef", "AttrStatement", "RelStatement", "ParsedStep",
    "ReasoningSummary", "NoSummaryFound", "InvalidReason", "Verified", "Invalid",
    "EvalWorld", "Scores", "parse_summary", "parse_step", "extract_answer",
    "normalize_token", "verify_step", "score", "llm_extract", "read_summary", "summarize",
]

log = logging.getLogger(__name__)


# ----------------------------------------------------------------- types


@dataclass(frozen=True)
class FactRef:
    k: int

    def __str__(self) -> str:
        return f"fact_{self.k}"


@dataclass(frozen=True)
class RuleRef:
    k: int

    def __str__(self) -> str:
        return f"rule_{self.k}"


@dataclass(frozen=True)
class IntRef:
    n: int

    def __str__(self) -> str:
        return f"int_{self.n}"


Ref = Union[FactRef, RuleRef, IntRef]


@dataclass(frozen=True)
class AttrStatement:
    entity: str
    attribute: str
    value: int

    def __str__(self) -> str:
        return f"{self.entity}'s {self.attribute} is {self.value}"


@dataclass(frozen=True)
class RelStatement:
    relation: str
    subject: str
    object: str

    def __str__(self) -> str:
        return f"{self.relation} exists between {self.subject} and {self.object}"


Statement = Union[AttrStatement, RelStatement]


@dataclass(frozen=True)
class ParsedStep:
    index: int
    deps: tuple[Ref, ...]
    conclusion: Statement

    def __str__(self) -> str:
        return f"{' & '.join(map(str, self.deps))} => int_{self.index}: {self.conclusion}"


@dataclass
class ReasoningSummary:
    steps: list[ParsedStep] = field(default_factory=list)
    answer: int | None = None
    skipped: list[str] = field(default_factory=list)
    found: bool = True


class NoSummaryFound(ValueError):
    pass


class InvalidReason(str, enum.Enum):
    MISSING_RULE = "MissingRule"
    UNVERIFIED_DEPENDENCY = "UnverifiedDependency"
    CONDITION_UNSATISFIED = "ConditionUnsatisfied"
    WRONG_CONCLUSION = "WrongConclusion"
    DIRECTION_REVERSED = "DirectionReversed"


@dataclass(frozen=True)
class Verified:
    fact: Fact


@dataclass(frozen=True)
class Invalid:
    reason: InvalidReason
    detail: str = ""


@dataclass
class EvalWorld:
    """What a transcript is checked against."""

    facts: Mapping[int, Fact]
    rules: Mapping[int, Rule]
    query: Query
    answer: int
    gold: Sequence[Fact]


@dataclass
class Scores:
    process: Fraction
    answer: int
    results: list[tuple[ParsedStep, Verified | Invalid]] = field(default_factory=list)
    full_credit: bool = False

    @property
    def reasons(self) -> list[str]:
        return [f"int_{s.index}: {r.reason.value}" for s, r in self.results if isinstance(r, Invalid)]


# ---------------------------------------------------------------- parsing

_MINUS = str.maketrans({"\u2212": "-", "\u2013": "-"})
_BOXED = re.compile(r"\\boxed\s*\{([^{}]*)\}")
_REASONING = re.compile(r"^[\s>*#`]*reasoning\s*:?[\s*`]*", re.IGNORECASE)
_STOP = re.compile(r"^[\s>*#`]*answer\b", re.IGNORECASE)
_STEP = re.compile(
    r"^(?P<deps>[\w\s&,]+?)\s*=>\s*(?:int|fact_i)_?(?P<n>\d+)\s*:\s*(?P<concl>.+?)\s*$"
)
_REF = re.compile(r"^(?:(rule)_(\d+)|(fact)_i(\d+)|(int)_(\d+)|(fact)_(\d+))$")
_REL = re.compile(r"^(?P<rel>[\w-]+) exists between (?P<a>.+?) and (?P<b>.+)$")
_ATTR = re.compile(r"^(?P<ent>.+?)['\u2019]s (?P<attr>[\w-]+) is (?P<rest>.+)$")
_INT = re.compile(r"^[+-]?\d+$")


def _to_int(text: str) -> int | None:
    t = text.translate(_MINUS).replace(",", "").replace(" ", "").strip("*`.")
    return int(t) if _INT.match(t) else None


def extract_answer(text: str) -> int | None:
    matches = _BOXED.findall(text)
    return _to_int(matches[-1]) if matches else None


def _parse_ref(token: str) -> Ref | None:
    m = _REF.match(token.strip())
    if not m:
        return None
    g = m.groups()
    if g[0]:
        return RuleRef(int(g[1]))
    if g[2] or g[4]:
        return IntRef(int(g[3] or g[5]))
    return FactRef(int(g[7]))


def parse_statement(text: str) -> Statement | None:
    text = text.strip().strip("`*").rstrip(".").strip()
    m = _REL.match(text)
    if m:
        return RelStatement(m["rel"], m["a"].strip(), m["b"].strip())
    m = _ATTR.match(text)
    if m:
        rest = m["rest"]
        value = _to_int(rest.rsplit("=", 1)[-1])
        if value is None:
            return None
        return AttrStatement(m["ent"].strip(), m["attr"], value)
    return None


def parse_step(line: str) -> ParsedStep | None:
    line = line.strip().strip("`").strip()
    line = re.sub(r"^(?:[-*]\s+|\d+[.)]\s+)", "", line)
    m = _STEP.match(line)
    if not m:
        return None
    deps = []
    for token in re.split(r"\s*&\s*", m["deps"].strip()):
        ref = _parse_ref(token)
        if ref is None:
            return None
        deps.append(ref)
    conclusion = parse_statement(m["concl"])
    if conclusion is None:
        return None
    return ParsedStep(int(m["n"]), tuple(deps), conclusion)


def summarize(lines: Sequence[str]) -> tuple[list[ParsedStep], list[str]]:
    """Parse step lines, keeping indices strictly increasing."""
    steps: list[ParsedStep] = []
    skipped: list[str] = []
    for line in lines:
        if not line.strip() or line.strip().strip("`") == "":
            continue
        step = parse_step(line)
        if step is None or (steps and step.index <= steps[-1].index):
            skipped.append(line)
            continue
        steps.append(step)
    return steps, skipped


def parse_summary(text: str, strict: bool = False) -> ReasoningSummary:
    """Steps of the last ``Reasoning:`` block plus the boxed answer.

    Unparseable lines are kept in ``skipped``.  Without a block the summary
    is empty and ``found`` is False; ``strict`` raises NoSummaryFound instead.
    """
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if _REASONING.match(line) and re.search(r"reasoning\s*:", line, re.IGNORECASE):
            start = i
    answer = extract_answer(text)
    if start is None:
        if strict:
            raise NoSummaryFound("no Reasoning: block")
        return ReasoningSummary([], answer, [], found=False)
    body = [_REASONING.sub("", lines[start], count=1)]
    for line in lines[start + 1 :]:
        if _STOP.match(line):
            break
        body.append(line)
    steps, skipped = summarize(body)
    if not steps and strict:
        raise NoSummaryFound("Reasoning: block has no parseable steps")
    return ReasoningSummary(steps, answer, skipped, found=bool(steps))


# ----------------------------------------------------------- verification


def _statement_matches(stmt: Statement, fact: Fact) -> str:
    """'yes', 'reversed' or 'no'."""
    fold = normalize_token
    if isinstance(stmt, AttrStatement):
        if not isinstance(fact, AttrFact):
            return "no"
        ok = (
            fold(stmt.entity) == fold(fact.entity)
            and tokens_match(stmt.attribute, fact.attribute)
            and stmt.value == fact.value
        )
        return "yes" if ok else "no"
    if not isinstance(fact, RelFact) or not tokens_match(stmt.relation, fact.relation):
        return "no"
    a, b = fold(stmt.subject), fold(stmt.object)
    if (a, b) == (fold(fact.subject), fold(fact.object)):
        return "yes"
    if (b, a) == (fold(fact.subject), fold(fact.object)):
        return "reversed"
    return "no"


def verify_step(
    step: ParsedStep,
    facts: Mapping[int, Fact],
    rules: Mapping[int, Rule],
    verified: Mapping[int, Fact],
) -> Verified | Invalid:
    rule_refs = [d for d in step.deps if isinstance(d, RuleRef)]
    if len(rule_refs) != 1 or rule_refs[0].k not in rules:
        return Invalid(InvalidReason.MISSING_RULE, "need exactly one existing rule")
    rule = rules[rule_refs[0].k]
    cited: list[Fact] = []
    for d in step.deps:
        if isinstance(d, FactRef):
            if d.k not in facts:
                return Invalid(InvalidReason.UNVERIFIED_DEPENDENCY, f"no fact_{d.k}")
            cited.append(facts[d.k])
        elif isinstance(d, IntRef):
            if d.n not in verified:
                return Invalid(InvalidReason.UNVERIFIED_DEPENDENCY, f"int_{d.n} not verified")
            cited.append(verified[d.n])
    try:
        known = FactSet(cited)
    except ConflictError as exc:
        return Invalid(InvalidReason.CONDITION_UNSATISFIED, str(exc))
    bindings = match_rule(rule, known)
    if not bindings:
        return Invalid(InvalidReason.CONDITION_UNSATISFIED, "cited items do not satisfy the rule")
    reversed_seen = False
    derived = []
    for b in bindings:
        try:
            fact = apply_rule(rule, b, known)
        except (ValueOverflow, MissingAttribute):
            continue
        derived.append(fact)
        verdict = _statement_matches(step.conclusion, fact)
        if verdict == "yes":
            return Verified(fact)
        reversed_seen = reversed_seen or verdict == "reversed"
    if reversed_seen:
        return Invalid(InvalidReason.DIRECTION_REVERSED, "relation direction reversed")
    detail = "rule derives " + ", ".join(map(str, derived)) if derived else ""
    return Invalid(InvalidReason.WRONG_CONCLUSION, detail)


def _int_closure_ok(step: ParsedStep, by_index: Mapping[int, ParsedStep], ok: Mapping[int, Fact]) -> bool:
    stack, seen = [step.index], set()
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if n not in ok:
            return False
        stack.extend(d.n for d in by_index[n].deps if isinstance(d, IntRef))
    return True


def score(world: EvalWorld, summary: ReasoningSummary) -> Scores:
    answer = int(summary.answer is not None and summary.answer == world.answer)
    verified: dict[int, Fact] = {}
    results = []
    by_index: dict[int, ParsedStep] = {}
    for step in summary.steps:
        by_index[step.index] = step
        result = verify_step(step, world.facts, world.rules, verified)
        if isinstance(result, Verified):
            verified[step.index] = result.fact
        results.append((step, result))
    target = AttrFact(world.query.entity, world.query.attribute, world.answer)
    if answer:
        for n, fact in verified.items():
            if fact == target and _int_closure_ok(by_index[n], by_index, verified):
                return Scores(Fraction(1), answer, results, full_credit=True)
    if not world.gold:
        return Scores(Fraction(0), answer, results)
    got = set(verified.values())
    hit = sum(1 for g in world.gold if g in got)
    return Scores(Fraction(hit, len(world.gold)), answer, results)


# ---------------------------------------------------------- LLM fallback

EXTRACT_PROMPT = """\
Below is a model's answer to a reasoning problem about entities, attributes and relations.
Rewrite its reasoning as a structured summary. Use only steps the answer actually takes.

Write each step on its own line in this form:
rule_X & fact_Y & int_Z => int_n: <conclusion>
where a conclusion is either "<relation> exists between <A> and <B>" or "<Entity>'s <attribute> is <value>",
with the final computed integer as the value. Number steps int_1, int_2, ... in order and cite
earlier steps as int_k. Start the summary with a line "Reasoning:" and finish with
"Answer: \\boxed{{<value>}}".

Answer to reformat:
{raw}

Attributes in this problem: {attributes}
Relations in this problem: {relations}
"""


def llm_extract(
    raw: str,
    client: ChatClient,
    attributes: Sequence[str] = (),
    relations: Sequence[str] = (),
) -> ReasoningSummary:
    parsed = parse_summary(raw)
    try:
        reply = client.complete(
            [{"role": "user", "content": EXTRACT_PROMPT.format(
                raw=raw, attributes=", ".join(attributes), relations=", ".join(relations))}],
            temperature=0,
        )
    except TransportError as exc:
        log.warning("summary extraction failed: %s", exc)
        return parsed
    extracted = parse_summary(reply)
    if not extracted.steps:
        return parsed
    # the transcript's own boxed answer is authoritative
    if parsed.answer is not None:
        extracted.answer = parsed.answer
    return extracted


def read_summary(raw: str, client: ChatClient | None = None, attributes=(), relations=()) -> ReasoningSummary:
    """Parser first; the extractor only runs when no step could be parsed."""
    parsed = parse_summary(raw)
    if parsed.steps or client is None:
        return parsed
    return llm_extract(raw, client, attributes, relations)
