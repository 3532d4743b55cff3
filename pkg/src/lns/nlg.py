"""Template-based English rendering of facts, rules and queries.

Templates live one per line in ``<category>.txt`` files (``#`` starts a
comment line).  Rule text uses placeholder names entity_1, entity_2, ... in
first-occurrence order.  An optional refinement pass asks a chat model to
smooth the templated text and keeps the result only if every formal token
survived.
"""

from __future__ import annotations

import logging
import random
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .lemma import tokens_match
from .llm import ChatClient, TransportError
from .world import (
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
    canonical_variables,
    iter_numbers,
    operands,
    parse_fact,
    parse_rule,
)

log = logging.getLogger(__name__)

# category -> (allowed placeholders, required placeholders)
CATEGORIES: dict[str, tuple[frozenset[str], frozenset[str]]] = {}
for _name, _fields in {
    "attribute_fact": ("e_i", "a_j", "num"),
    "relation_fact": ("e_i", "r_k", "e_j"),
    "implication": ("condition", "conclusion"),
    "retrieval": ("e_i", "a_j"),
    "calculation_addition": ("operand", "k", "b"),
    "calculation_subtraction": ("operand", "k", "b"),
    "aggregation_max": ("expr1", "expr2"),
    "aggregation_min": ("expr1", "expr2"),
    "aggregation_addition": ("expr1", "expr2"),
    "aggregation_subtraction": ("expr1", "expr2"),
    "query": ("e_i", "a_j"),
}.items():
    CATEGORIES[_name] = (frozenset(_fields), frozenset(_fields))

MIN_TEMPLATES = 4


class MalformedTemplate(ValueError):
    pass


class TemplateIOError(OSError):
    pass


@dataclass(frozen=True)
class TemplateSet:
    templates: Mapping[str, tuple[str, ...]]

    def __getitem__(self, category: str) -> tuple[str, ...]:
        return self.templates[category]

    def choose(self, category: str, rng: random.Random) -> str:
        return rng.choice(self.templates[category])


def placeholders(template: str) -> list[str]:
    try:
        parsed = list(string.Formatter().parse(template))
    except ValueError as exc:
        raise MalformedTemplate(f"{template!r}: {exc}") from None
    names = []
    for _, name, spec, conv in parsed:
        if name is None:
            continue
        if spec or conv or not name:
            raise MalformedTemplate(f"{template!r}: bare or formatted placeholder")
        names.append(name)
    return names


def validate_template(category: str, template: str) -> None:
    allowed, required = CATEGORIES[category]
    names = placeholders(template)
    unknown = sorted(set(names) - allowed)
    if unknown:
        raise MalformedTemplate(f"{category}: unknown placeholder {{{unknown[0]}}} in {template!r}")
    missing = sorted(required - set(names))
    if missing:
        raise MalformedTemplate(f"{category}: {template!r} lacks {{{missing[0]}}}")


def parse_template_file(category: str, text: str) -> tuple[str, ...]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        validate_template(category, line)
        out.append(line)
    if len(out) < MIN_TEMPLATES:
        raise MalformedTemplate(f"{category}: need at least {MIN_TEMPLATES} templates, found {len(out)}")
    return tuple(out)


def load_templates(directory: str | Path | None = None) -> TemplateSet:
    """Load every category file from ``directory`` (default: the bundled bank)."""
    root = resources.files("lns").joinpath("data").joinpath("templates") if directory is None else Path(directory)
    found = {}
    for category in CATEGORIES:
        try:
            text = root.joinpath(f"{category}.txt").read_text(encoding="utf-8")
        except OSError as exc:
            raise TemplateIOError(f"cannot read {category} templates: {exc}") from None
        found[category] = parse_template_file(category, text)
    return TemplateSet(found)


# ---------------------------------------------------------------- rendering


def _sentence(text: str, template: str) -> str:
    # Only capitalise literal template words; names and attributes stay verbatim.
    if not template.startswith("{") and text[:1].islower():
        text = text[0].upper() + text[1:]
    return text if text[-1:] in ".?!" else text + "."


def _attr(entity: str, attribute: str, num: str, templates: TemplateSet, rng: random.Random) -> tuple[str, str]:
    t = templates.choose("attribute_fact", rng)
    return t.format(e_i=entity, a_j=attribute, num=num), t


def _rel(relation: str, a: str, b: str, templates: TemplateSet, rng: random.Random) -> tuple[str, str]:
    t = templates.choose("relation_fact", rng)
    return t.format(e_i=a, r_k=relation, e_j=b), t


def render_fact(fact: Fact, templates: TemplateSet, rng: random.Random) -> str:
    if isinstance(fact, AttrFact):
        text, t = _attr(fact.entity, fact.attribute, str(fact.value), templates, rng)
    else:
        text, t = _rel(fact.relation, fact.subject, fact.object, templates, rng)
    return _sentence(text, t)


def render_expression(expr: Expression, templates: TemplateSet, rng: random.Random) -> str:
    if isinstance(expr, Constant):
        return str(expr.c)
    if isinstance(expr, Retrieval):
        return templates.choose("retrieval", rng).format(e_i=expr.var, a_j=expr.attribute)
    if isinstance(expr, Calculation):
        operand = templates.choose("retrieval", rng).format(e_i=expr.var, a_j=expr.attribute)
        family = "calculation_subtraction" if expr.b < 0 else "calculation_addition"
        return templates.choose(family, rng).format(operand=operand, k=expr.k, b=abs(expr.b))
    left = render_expression(expr.left, templates, rng)
    right = render_expression(expr.right, templates, rng)
    return templates.choose(f"aggregation_{expr.op}", rng).format(expr1=left, expr2=right)


def render_rule(rule: Rule, templates: TemplateSet, rng: random.Random) -> str:
    rule = canonical_variables(rule)
    parts = []
    for atom in rule.condition:
        if isinstance(atom, AttrAtom):
            parts.append(_attr(atom.var, atom.attribute, str(atom.value), templates, rng)[0])
        else:
            parts.append(_rel(atom.relation, atom.subject_var, atom.object_var, templates, rng)[0])
    concl = rule.conclusion
    if isinstance(concl, AttrConclusion):
        expr_text = render_expression(concl.expr, templates, rng)
        conclusion = _attr(concl.var, concl.attribute, expr_text, templates, rng)[0]
    else:
        conclusion = _rel(concl.relation, concl.subject_var, concl.object_var, templates, rng)[0]
    t = templates.choose("implication", rng)
    return _sentence(t.format(condition=" and ".join(parts), conclusion=conclusion), t)


def render_query(query: Query, templates: TemplateSet, rng: random.Random) -> str:
    t = templates.choose("query", rng)
    return _sentence(t.format(e_i=query.entity, a_j=query.attribute), t)


def render_item(item: Fact | Rule, templates: TemplateSet, rng: random.Random) -> str:
    return render_rule(item, templates, rng) if isinstance(item, Rule) else render_fact(item, templates, rng)


# ------------------------------------------------------- token preservation


@dataclass(frozen=True)
class FormalTokens:
    entities: tuple[str, ...]
    attributes: tuple[str, ...]
    relations: tuple[str, ...]
    numbers: tuple[str, ...]


Formal = Union[Fact, Rule, str]


def _as_item(formal: Formal) -> Fact | Rule:
    if isinstance(formal, str):
        return parse_rule(formal) if "=>" in formal else parse_fact(formal)
    return formal


def formal_tokens(formal: Formal) -> FormalTokens:
    item = _as_item(formal)
    if isinstance(item, AttrFact):
        return FormalTokens((item.entity,), (item.attribute,), (), (str(item.value),))
    if isinstance(item, RelFact):
        return FormalTokens((item.subject, item.object), (), (item.relation,), ())
    rule = canonical_variables(item)
    ents: list[str] = []
    attrs: list[str] = []
    rels: list[str] = []
    for atom in (*rule.condition, rule.conclusion):
        ents.extend(atom.variables)
        if isinstance(atom, RelAtom):
            rels.append(atom.relation)
        else:
            attrs.append(atom.attribute)
    if isinstance(rule.conclusion, AttrConclusion):
        attrs.extend(a for _, a in operands(rule.conclusion.expr))
    uniq = lambda xs: tuple(dict.fromkeys(xs))  # noqa: E731
    return FormalTokens(uniq(ents), uniq(attrs), uniq(rels), uniq(iter_numbers(str(rule))))


def _has_word(text: str, word: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(word)}(?!\w)", text) is not None


def _has_number(text: str, num: str) -> bool:
    lead = r"(?<![\w.\-])" if not num.startswith("-") else r"(?<![\w.])"
    return re.search(rf"{lead}{re.escape(num)}(?!\d)", text) is not None


def missing_tokens(text: str, formal: Formal, inflected: bool = False) -> list[str]:
    """Formal tokens absent from ``text``.

    Entity names and numbers must appear verbatim.  Attribute and relation
    words must appear verbatim too, unless ``inflected`` is set, in which
    case any word sharing their lemma will do.
    """
    text = text.replace("−", "-")
    tokens = formal_tokens(formal)
    missing = [e for e in tokens.entities if not _has_word(text, e)]
    words = re.findall(r"[A-Za-z_]+", text) if inflected else []
    for w in (*tokens.attributes, *tokens.relations):
        ok = any(tokens_match(w, x) for x in words) if inflected else _has_word(text, w)
        if not ok:
            missing.append(w)
    missing.extend(n for n in tokens.numbers if not _has_number(text, n))
    return missing


# --------------------------------------------------------------- refinement

REFINE_INSTRUCTIONS = """\
You rewrite machine-generated sentences so they read naturally.
Each input has a formal representation and a draft sentence produced from templates.
Rewrite the draft into fluent, grammatical English with exactly the same meaning.
Rules:
1. Keep every entity name, attribute name, relation word and number exactly as written. \
Relation words may be inflected (e.g. adding -s or -ed) but not replaced by synonyms. \
Placeholders such as entity_1 must stay unchanged.
2. Keep the direction of every relation: the first entity acts on the second.
3. For rules, make it clear which part is the condition and which part is the consequence.
4. Reply with the rewritten sentence only."""

# (formal, templated, refined)
REFINE_EXAMPLES: tuple[tuple[str, str, str], ...] = (
    (
        "is(Maribel, dense, 14)",
        "The dense field of Maribel is represented by 14.",
        "Maribel has a dense value of 14.",
    ),
    (
        "escort(Tobin, Liesel)",
        "Tobin escort Liesel.",
        "Tobin escorts Liesel.",
    ),
    (
        "is(entity_1, brisk, -3) and scold(entity_2, entity_1) => is(entity_1, polar, 4 * entity_2[dense] - 7)",
        "Given the value of brisk for entity_1 is -3 and entity_2 scold entity_1, "
        "the polar of entity_1 equals multiplying the value of dense for entity_2 by 4 and subtracting 7 follows.",
        "If entity_1's brisk value is -3 and entity_2 scolds entity_1, then entity_1's polar value "
        "is 4 times the dense value of entity_2, minus 7.",
    ),
    (
        "hail(entity_1, entity_2) => is(entity_2, rapid, max(entity_1[bland], 12))",
        "Whenever entity_1 hail entity_2, the rapid of entity_2 equals the larger of the value of bland for entity_1 and 12.",
        "Whenever entity_1 hails entity_2, entity_2's rapid value becomes the larger of entity_1's bland value and 12.",
    ),
)


def refine_prompt(formal: str, templated: str) -> list[dict[str, str]]:
    shots = "\n\n".join(
        f"formal: {f}\ndraft: {t}\noutput: {r}" for f, t, r in REFINE_EXAMPLES
    )
    user = f"{REFINE_INSTRUCTIONS}\n\nExamples:\n\n{shots}\n\nformal: {formal}\ndraft: {templated}\noutput:"
    return [{"role": "user", "content": user}]


def _clean(reply: str) -> str:
    text = reply.strip().splitlines()[0].strip() if reply.strip() else ""
    if text.lower().startswith("output:"):
        text = text[len("output:"):].strip()
    return text.strip("\"'` ")


def refine_line(formal: str, templated: str, client: ChatClient, temperature: float = 0.7, top_p: float = 0.8) -> str | None:
    """A validated refinement of ``templated``, or None if unusable."""
    try:
        reply = client.complete(refine_prompt(formal, templated), temperature=temperature, top_p=top_p)
    except TransportError as exc:
        log.warning("refinement request failed: %s", exc)
        return None
    text = _clean(reply)
    if not text:
        return None
    lost = missing_tokens(text, formal, inflected=True)
    if lost:
        log.info("refinement of %r dropped %s; keeping template text", formal, lost)
        return None
    return text


def refine_with_llm(
    lines: Sequence[tuple[str, str]] | Iterable[Mapping[str, str]],
    client: ChatClient,
    temperature: float = 0.7,
    top_p: float = 0.8,
) -> list[str]:
    """Refined text for each (formal, templated) line, falling back to the template text."""
    pairs = [(x["formal"], x["templated"]) if isinstance(x, Mapping) else tuple(x) for x in lines]

    def one(pair: tuple[str, str]) -> str:
        refined = refine_line(pair[0], pair[1], client, temperature, top_p)
        return pair[1] if refined is None else refined

    return client.map(one, pairs)
