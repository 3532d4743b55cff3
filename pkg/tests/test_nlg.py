from __future__ import annotations

import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lns.config import load_config
from lns.distraction import random_fact, random_rule
from lns.nlg import (
    CATEGORIES,
    MalformedTemplate,
    TemplateIOError,
    TemplateSet,
    load_templates,
    missing_tokens,
    parse_template_file,
    render_expression,
    render_fact,
    render_item,
    render_query,
    render_rule,
    validate_template,
)
from lns.vocab import sample_world_elements
from lns.world import (
    Aggregation,
    AttrFact,
    Calculation,
    Constant,
    Query,
    RelFact,
    Retrieval,
    parse_rule,
)

from strategies import facts, rules


def only(templates, **chosen):
    d = dict(templates.templates)
    for cat, t in chosen.items():
        d[cat] = (t,)
    return TemplateSet(d)


class Recorder(TemplateSet):
    def __init__(self, base, counts):
        object.__setattr__(self, "templates", base.templates)
        object.__setattr__(self, "counts", counts)

    def choose(self, category, rng):
        t = super().choose(category, rng)
        self.counts[(category, t)] += 1
        return t


def test_bundled_bank_is_valid(templates):
    assert set(templates.templates) == set(CATEGORIES)
    assert all(len(v) >= 4 for v in templates.templates.values())
    assert "the {a_j} field of {e_i} is represented by {num}" in templates["attribute_fact"]
    assert "the greater of {expr1} and {expr2}" in templates["aggregation_max"]


def test_attribute_fact_example(templates):
    ts = only(templates, attribute_fact="the value of {a_j} for {e_i} is {num}")
    assert render_fact(AttrFact("Susana", "low", -8), ts, random.Random(0)) == "The value of low for Susana is -8."


def test_relation_fact_example(templates):
    ts = only(templates, relation_fact="{e_i} {r_k} {e_j}")
    assert render_fact(RelFact("sacrifice", "Cecilla", "Terrianne"), ts, random.Random(0)) == "Cecilla sacrifice Terrianne."


def test_expression_families(templates):
    ts = only(
        templates,
        retrieval="the value of {a_j} for {e_i}",
        calculation_subtraction="multiplying {operand} by {k} and subtracting {b}",
        calculation_addition="multiplying {operand} by {k} and adding {b}",
        aggregation_max="the greater of {expr1} and {expr2}",
    )
    rng = random.Random(0)
    assert render_expression(Calculation(3, "entity_1", "a_k", -9), ts, rng) == (
        "multiplying the value of a_k for entity_1 by 3 and subtracting 9"
    )
    assert render_expression(Calculation(3, "entity_1", "a_k", 9), ts, rng).endswith("adding 9")
    assert render_expression(Aggregation("max", Constant(2), Retrieval("entity_2", "x")), ts, rng) == (
        "the greater of 2 and the value of x for entity_2"
    )
    assert render_expression(Constant(5), ts, rng) == "5"


def test_rule_rendering(templates):
    rule = parse_rule(
        "defuse(entity_1, entity_2) => is(entity_2, technical, "
        "subtraction(3 * entity_2[retained] + 8, 5 * entity_2[proven] + 2))"
    )
    text = render_rule(rule, templates, random.Random(4))
    assert "entity_1" in text and "entity_2" in text
    assert missing_tokens(text, rule) == []
    ts = only(templates, implication="if {condition}, then {conclusion}")
    single = render_rule(parse_rule("is(entity_1, a, 1) => is(entity_1, b, 2)"), ts, random.Random(0))
    assert " and " not in single
    double = render_rule(parse_rule("is(entity_1, a, 1) and is(entity_1, c, 3) => is(entity_1, b, 2)"), ts, random.Random(0))
    assert double.count(" and ") == 1


def test_rule_variables_are_renumbered(templates):
    rule = parse_rule("r(entity_4, entity_2) => r(entity_2, entity_4)")
    text = render_rule(rule, templates, random.Random(1))
    assert "entity_4" not in text and "entity_1" in text


def test_same_seed_same_text(templates):
    rule = parse_rule("is(entity_1, a, 1) and r(entity_1, entity_2) => is(entity_2, b, max(entity_1[c], 3))")
    assert render_rule(rule, templates, random.Random(8)) == render_rule(rule, templates, random.Random(8))
    q = Query("Granville", "withdrawn")
    assert render_query(q, templates, random.Random(2)) == render_query(q, templates, random.Random(2))


def test_unknown_placeholder_rejected():
    with pytest.raises(MalformedTemplate, match="x_q"):
        validate_template("attribute_fact", "{e_i} {a_j} {num} {x_q}")
    with pytest.raises(MalformedTemplate):
        validate_template("attribute_fact", "{e_i} has {num}")  # lacks {a_j}
    with pytest.raises(MalformedTemplate):
        validate_template("relation_fact", "{e_i} {r_k} {e_j")
    with pytest.raises(MalformedTemplate):
        parse_template_file("retrieval", "{e_i} {a_j}\n# only one\n")


def test_missing_category_file(tmp_path, templates):
    for cat, ts in templates.templates.items():
        if cat != "aggregation_min":
            (tmp_path / f"{cat}.txt").write_text("\n".join(ts))
    with pytest.raises(TemplateIOError):
        load_templates(tmp_path)
    (tmp_path / "aggregation_min.txt").write_text("\n".join(templates["aggregation_min"]))
    assert load_templates(tmp_path) == templates


def test_every_template_gets_used(templates, pools):
    config = load_config("HL-HN").replace(expr_weights=(1, 1, 1, 3))
    rng = random.Random(0)
    elements = sample_world_elements(pools, config, rng)
    counts = Counter()
    rec = Recorder(templates, counts)
    while min((sum(v for (c, _), v in counts.items() if c == cat) for cat in CATEGORIES), default=0) < 10_000:
        render_item(random_rule(elements, config, rng), rec, rng)
        render_item(random_fact(elements, config, rng), rec, rng)
        render_query(Query("A", "b"), rec, rng)
    for cat, ts in templates.templates.items():
        for t in ts:
            assert counts[(cat, t)] > 0, (cat, t)


@given(st.one_of(facts(), rules()), st.integers(0, 2**32))
def test_templated_lines_keep_formal_tokens(item, seed):
    text = render_item(item, load_templates(), random.Random(seed))
    assert missing_tokens(text, item) == []


def test_number_sign_matters():
    assert missing_tokens("Ann has low equal to 8.", "is(Ann, low, -8)") == ["-8"]
    assert missing_tokens("Ann has low equal to -8.", "is(Ann, low, 8)") == ["8"]
    assert missing_tokens("Ann has low equal to -8.", "is(Ann, low, -8)") == []
    assert missing_tokens("Ann has low equal to 18.", "is(Ann, low, 8)") == ["8"]


def test_inflection_only_when_allowed():
    formal = "sacrifice(Cecilla, Terrianne)"
    assert missing_tokens("Cecilla sacrifices Terrianne.", formal) == ["sacrifice"]
    assert missing_tokens("Cecilla sacrifices Terrianne.", formal, inflected=True) == []
    assert missing_tokens("Cecil sacrifices Terrianne.", formal, inflected=True) == ["Cecilla"]
