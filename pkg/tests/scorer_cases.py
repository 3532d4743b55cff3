"""Hand-built worlds and transcripts with known process/answer scores.

Each case lists facts and rules by id, the query, the gold intermediate
conclusions (in derivation order), a transcript and the expected outcome.
All values in the transcripts were worked out by hand.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from lns.evaluator import EvalWorld, InvalidReason
from lns.world import Query, parse_fact, parse_rule

E1, E2, E3 = "entity_1", "entity_2", "entity_3"


@dataclass
class Case:
    name: str
    world: EvalWorld
    transcript: str
    process: Fraction
    answer: int
    reasons: tuple[InvalidReason | None, ...]


def world(facts, rules, query, answer, gold):
    return EvalWorld(
        facts={k: parse_fact(v) for k, v in facts.items()},
        rules={k: parse_rule(v) for k, v in rules.items()},
        query=Query(*query),
        answer=answer,
        gold=[parse_fact(g) for g in gold],
    )


def transcript(steps, answer, preamble="Let me work through this.\n"):
    return preamble + "Reasoning:\n" + "\n".join(steps) + f"\nAnswer: \\boxed{{{answer}}}\n"


OK = None
MISSING = InvalidReason.MISSING_RULE
UNVERIFIED = InvalidReason.UNVERIFIED_DEPENDENCY
UNSATISFIED = InvalidReason.CONDITION_UNSATISFIED
WRONG = InvalidReason.WRONG_CONCLUSION
REVERSED = InvalidReason.DIRECTION_REVERSED


# Five-step chain; the fourth step miscalculates, the fifth builds on it but
# the boxed answer is still right.
CASE_1 = Case(
    "chain with one arithmetic slip",
    world(
        {
            1: "is(Arvie, beam, 99)", 2: "is(Arvie, plain, 3)", 3: "is(Arvie, quiet, 5)",
            4: "is(Granville, hollow, 2)", 5: "is(Arvie, round, 8)", 6: "visit(Arvie, Granville)",
            7: "is(Arvie, lucky, 1)", 8: "consult(Arvie, Ruperta)", 9: "is(Ruperta, spare, 4)",
            10: "is(Arvie, dense, 6)", 11: "is(Arvie, keen, 7)", 12: "is(Arvie, stern, -92)",
            13: "is(Granville, sharp, 9)", 14: "is(Arvie, brisk, 2)", 15: "is(Arvie, calm, 4)",
        },
        {
            6: f"is({E1}, plain, 3) and consult({E1}, {E2}) => resubmit({E1}, {E2})",
            11: f"is({E1}, round, 8) and visit({E1}, {E2}) and is({E1}, quiet, 5) => is({E1}, whole, -71 * {E1}[stern] - 57)",
            14: f"is({E1}, keen, 7) and is({E1}, whole, 6475) and is({E1}, lucky, 1) => is({E1}, imposing, 70 * {E1}[beam] - 82)",
            13: f"is({E1}, dense, 6) and is({E1}, brisk, 2) and is({E1}, calm, 4) => is({E1}, canadian, subtraction(4 * {E1}[whole] - 67, -80))",
            2: f"is({E2}, hollow, 2) and is({E1}, imposing, 6848) and resubmit({E1}, {E3}) and is({E2}, sharp, 9) => is({E2}, withdrawn, min(88 * {E1}[canadian] - 96, -69))",
        },
        ("Granville", "withdrawn"),
        -69,
        [
            "resubmit(Arvie, Ruperta)", "is(Arvie, whole, 6475)", "is(Arvie, imposing, 6848)",
            "is(Arvie, canadian, 25913)", "is(Granville, withdrawn, -69)",
        ],
    ),
    transcript(
        [
            "rule_6 & fact_2 & fact_8 => int_1: resubmit exists between Arvie and Ruperta",
            "rule_11 & fact_5 & fact_6 & fact_3 & fact_12 => int_2: Arvie's whole is -71 * -92 - 57 = 6475",
            "rule_14 & fact_11 & int_2 & fact_7 & fact_1 => int_3: Arvie's imposing is 6848",
            "rule_13 & fact_10 & fact_14 & fact_15 & int_2 => int_4: Arvie's canadian is 26047",
            "rule_2 & fact_4 & int_3 & int_1 & fact_13 & int_4 => int_5: Granville's withdrawn is -69",
        ],
        -69,
    ),
    Fraction(3, 5),
    1,
    (OK, OK, OK, WRONG, UNVERIFIED),
)

# Six-step chain; everything right except the last multiplication.
CASE_2 = Case(
    "final step miscalculated",
    world(
        {
            1: "is(Suki, tidy, 53)", 2: "is(Suki, wide, -79)", 3: "is(Katrinka, pale, 1)",
            4: "is(Suki, mild, 10)", 5: "trust(Katrinka, Jeramie)", 6: "is(Marlyn, soft, 5)",
            7: "follow(Marlyn, Jeramie)", 8: "is(Jeramie, eager, 4)", 9: "is(Suki, bold, 3)",
            10: "know(Suki, Jeramie)", 11: "guide(Katrinka, Marlyn)", 12: "is(Suki, proud, 42)",
            13: "is(Marlyn, loud, 86)", 14: "is(Katrinka, grim, -52)", 15: "admire(Marlyn, Jeramie)",
            16: "link(Suki, Jeramie)", 17: "is(Suki, vast, 7)", 18: "is(Suki, firm, 2)",
        },
        {
            14: f"is({E1}, firm, 2) and is({E1}, bold, 3) and link({E1}, {E2}) => is({E1}, acquired, addition(-66 * {E1}[tidy] - 82, 60 * {E1}[wide] + 67))",
            5: f"is({E1}, pale, 1) and guide({E1}, {E2}) => is({E1}, impossible, 7 * {E1}[grim] - 74)",
            10: f"is({E1}, soft, 5) and admire({E1}, {E2}) => is({E1}, acquired, -65 * {E1}[loud] + 39)",
            7: f"is({E1}, acquired, -8253) and is({E1}, vast, 7) => is({E1}, executive, 80 * {E1}[proud] - 8)",
            11: f"is({E1}, eager, 4) and is({E2}, impossible, -438) and trust({E2}, {E1}) and follow({E3}, {E1}) => is({E1}, soaring, subtraction(-33 * {E3}[acquired] - 12, -28))",
            6: f"is({E1}, executive, 3352) and is({E1}, mild, 10) and know({E1}, {E2}) => is({E1}, alternative, -84 * {E2}[soaring] - 48)",
        },
        ("Suki", "alternative"),
        -15388764,
        [
            "is(Suki, acquired, -8253)", "is(Katrinka, impossible, -438)", "is(Marlyn, acquired, -5551)",
            "is(Suki, executive, 3352)", "is(Jeramie, soaring, 183199)", "is(Suki, alternative, -15388764)",
        ],
    ),
    transcript(
        [
            "rule_14 & fact_18 & fact_9 & fact_16 & fact_1 & fact_2 => int_1: Suki's acquired is -8253",
            "rule_5 & fact_3 & fact_11 & fact_14 => int_2: Katrinka's impossible is -438",
            "rule_10 & fact_6 & fact_15 & fact_13 => int_3: Marlyn's acquired is -5551",
            "rule_7 & int_1 & fact_17 & fact_12 => int_4: Suki's executive is 3352",
            "rule_11 & fact_8 & int_2 & fact_5 & fact_7 & int_3 => int_5: Jeramie's soaring is 183199",
            "rule_6 & int_4 & fact_4 & fact_10 & int_5 => int_6: Suki's alternative is -15388668",
        ],
        -15388668,
    ),
    Fraction(5, 6),
    0,
    (OK, OK, OK, OK, OK, WRONG),
)

# Relation words written in inflected form still count.
CASE_3 = Case(
    "inflected relation words",
    world(
        {15: "pile(Ed, Claresta)", 2: "is(Ed, gauge, 3)", 1: "is(Claresta, gauge, 4)"},
        {
            13: f"pile({E1}, {E2}) => stack({E1}, {E2})",
            8: f"stack({E1}, {E2}) => hamper({E1}, {E2})",
            4: f"hamper({E1}, {E2}) and is({E1}, gauge, 3) => is({E1}, reported, 9 * {E1}[gauge] + 9)",
        },
        ("Ed", "reported"),
        36,
        ["stack(Ed, Claresta)", "hamper(Ed, Claresta)", "is(Ed, reported, 36)"],
    ),
    transcript(
        [
            "rule_13 & fact_15 => int_1: stacks exists between Ed and Claresta",
            "rule_8 & int_1 => int_2: Hampers exists between Ed and Claresta",
            "rule_4 & int_2 & fact_2 => int_3: Ed's reported is 36",
        ],
        36,
    ),
    Fraction(1),
    1,
    (OK, OK, OK),
)

# A given fact makes most of the gold derivation unnecessary.
CASE_4 = Case(
    "valid shortcut",
    world(
        {
            1: "is(Astrid, tall, 4)", 2: "is(Charlton, glad, 9)", 3: "is(Tedie, calm, 3)",
            4: "is(Charlton, warm, 7)", 5: "is(Charlton, neat, 6)", 6: "is(Tedie, neat, 2)",
            7: "is(Charlton, lean, 5)", 8: "is(Astrid, spry, 8)", 9: "whipsaw(Tedie, Charlton)",
            10: "greet(Astrid, Tedie)", 11: "is(Tedie, warm, 1)", 12: "is(Astrid, lean, 3)",
            13: "is(Charlton, fair, 2)", 14: "is(Charlton, tall, 1)", 15: "greet(Tedie, Charlton)",
        },
        {
            14: f"is({E1}, tall, 1) and is({E1}, fair, 2) => is({E1}, side, 4 * {E1}[neat] + 10)",
            11: f"is({E1}, calm, 3) and greet({E1}, {E2}) and is({E2}, lean, 5) => assume({E1}, {E2})",
            10: f"is({E1}, warm, 7) and whipsaw({E2}, {E1}) => is({E1}, regional, 2 * {E1}[side] + 10)",
            9: f"is({E2}, regional, 78) and is({E1}, spry, 8) and assume({E3}, {E2}) => whipsaw({E1}, {E2})",
            5: f"is({E1}, glad, 9) and whipsaw({E2}, {E1}) => is({E1}, unusual, {E1}[side])",
        },
        ("Charlton", "unusual"),
        34,
        [
            "is(Charlton, side, 34)", "assume(Tedie, Charlton)", "is(Charlton, regional, 78)",
            "whipsaw(Astrid, Charlton)", "is(Charlton, unusual, 34)",
        ],
    ),
    transcript(
        [
            "rule_14 & fact_14 & fact_5 & fact_13 => int_1: Charlton's side is 34",
            "rule_5 & fact_2 & fact_9 & int_1 => int_2: Charlton's unusual is 34",
        ],
        34,
    ),
    Fraction(1),
    1,
    (OK, OK),
)

_CASE_5_WORLD = world(
    {10: "defer(Bengt, Maryann)", 3: "is(Maryann, annual, 4)"},
    {
        5: f"defer({E1}, {E2}) => finalize({E1}, {E2})",
        13: f"finalize({E1}, {E2}) => is({E2}, iranian, 2)",
        4: f"is({E1}, annual, 5) => is({E1}, iranian, {E1}[annual])",
    },
    ("Maryann", "iranian"),
    2,
    ["finalize(Bengt, Maryann)", "is(Maryann, iranian, 2)"],
)

# One sound step among several broken ones.
CASE_5 = Case(
    "mixed failures",
    _CASE_5_WORLD,
    transcript(
        [
            "fact_3 => int_1: Maryann's iranian is 4",
            "rule_5 & fact_10 => int_2: finalize exists between Bengt and Maryann",
            "rule_13 & int_2 => int_3: Bengt's iranian is 2",
            "rule_4 & fact_3 => int_4: Maryann's iranian is 4",
        ],
        4,
    ),
    Fraction(1, 2),
    0,
    (MISSING, OK, WRONG, UNSATISFIED),
)

# Citing a fact in place of the one the rule needs.
CASE_6 = Case(
    "substituted citation",
    _CASE_5_WORLD,
    transcript(
        [
            "rule_5 & fact_10 => int_1: finalize exists between Bengt and Maryann",
            "rule_13 & fact_10 => int_2: Maryann's iranian is 2",
        ],
        2,
    ),
    Fraction(1, 2),
    1,
    (OK, UNSATISFIED),
)

# Leaving out a premise the rule needs.
CASE_7 = Case(
    "missing citation",
    _CASE_5_WORLD,
    transcript(
        [
            "rule_5 & fact_10 => int_1: finalize exists between Bengt and Maryann",
            "rule_13 => int_2: Maryann's iranian is 2",
        ],
        2,
    ),
    Fraction(1, 2),
    1,
    (OK, UNSATISFIED),
)

# Right answer, but the entity's name is misspelt in the first step.
CASE_8 = Case(
    "misspelt entity",
    world(
        {9: "is(Bradly, plush, 5)", 4: "is(Bradly, rigid, -29)", 3: "is(Bradly, sober, 1)"},
        {
            15: f"is({E1}, plush, 5) => is({E1}, accepting, 42 * {E1}[rigid] + 86)",
            12: f"is({E1}, sober, 1) => is({E1}, conditional, -93 * {E1}[accepting] - 25)",
        },
        ("Bradly", "conditional"),
        105251,
        ["is(Bradly, accepting, -1132)", "is(Bradly, conditional, 105251)"],
    ),
    transcript(
        [
            "rule_15 & fact_9 & fact_4 => int_1: Bradley's accepting is -1132",
            "rule_12 & fact_3 & int_1 => int_2: Bradly's conditional is 105251",
        ],
        105251,
    ),
    Fraction(0),
    1,
    (WRONG, UNVERIFIED),
)

# A relation derived with its arguments swapped.
CASE_9 = Case(
    "reversed relation",
    world(
        {1: "admire(Lorna, Pietro)", 2: "is(Lorna, keen, 2)"},
        {
            14: f"admire({E1}, {E2}) => shelter({E2}, {E1})",
            3: f"is({E1}, keen, 2) => is({E1}, bright, 3 * {E1}[keen] + 1)",
            7: f"shelter({E1}, {E2}) and is({E2}, bright, 7) => is({E1}, final, 5 * {E2}[bright] - 3)",
        },
        ("Pietro", "final"),
        32,
        ["shelter(Pietro, Lorna)", "is(Lorna, bright, 7)", "is(Pietro, final, 32)"],
    ),
    transcript(
        [
            "rule_14 & fact_1 => int_1: shelter exists between Lorna and Pietro",
            "rule_3 & fact_2 => int_2: Lorna's bright is 7",
            "rule_7 & int_1 & int_2 => int_3: Pietro's final is 32",
        ],
        32,
    ),
    Fraction(1, 3),
    1,
    (REVERSED, OK, UNVERIFIED),
)

CASES = [CASE_1, CASE_2, CASE_3, CASE_4, CASE_5, CASE_6, CASE_7, CASE_8, CASE_9]
