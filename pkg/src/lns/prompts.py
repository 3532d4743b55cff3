"""Evaluation prompts: instructions, optional worked exemplars, then the sample."""

from __future__ import annotations

from typing import Sequence

from .pipeline import SampleRecord


class MissingExemplars(FileNotFoundError):
    pass


INSTRUCTIONS = """\
# Task
You are given a small world made of entities, their numeric attributes and directed relations between them.
Use the listed facts and rules to answer the question at the end, reasoning step by step.

## What the world contains
- Entities: named individuals.
- Attributes: integer-valued properties of an entity. Each entity has at most one value per attribute.
- Relations: directed links between two entities; "A r B" is not the same as "B r A".
- Facts: statements that hold from the start, numbered fact_1, fact_2, ...
- Rules: if-then statements, numbered rule_1, rule_2, ...; entity_1, entity_2, ... stand for any entities.
- Query: the attribute value you must determine.

## How to answer
1. Work through the problem in your own words first.
2. Then write a summary block that starts with the line "Reasoning:" and lists the derivation,
   one step per line, each step applying exactly one rule:
   rule_X & fact_Y & int_Z => int_n: <conclusion>
   Cite the rule plus every fact or earlier step (int_k) that satisfies its conditions or supplies a value.
   Number your steps int_1, int_2, ... in order.
   Write a relation conclusion as: <relation> exists between <A> and <B>
   Write an attribute conclusion as: <Entity>'s <attribute> is <value>
   where <value> is the final integer, not an unevaluated expression.
3. Finish with the line: Answer: \\boxed{[value]}

## Example of the summary format
Reasoning:
rule_3 & fact_7 & fact_2 => int_1: greet exists between Mona and Quill
rule_9 & int_1 & fact_4 => int_2: Quill's height is 12
Answer: \\boxed{12}
"""


def render_problem(record: SampleRecord) -> str:
    lines = ["Facts:"]
    lines += [f"fact_{e.id}: {e.text}" for e in record.facts]
    lines.append("Rules:")
    lines += [f"rule_{e.id}: {e.text}" for e in record.rules]
    lines.append(f"Query: {record.query_text}")
    return "\n".join(lines)


def render_exemplar(record: SampleRecord, number: int) -> str:
    return f"### Worked example {number}\n{render_problem(record)}\n\n{record.gold_summary}"


def build_prompt(record: SampleRecord, exemplars: Sequence[SampleRecord] = (), shots: int = 0) -> str:
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if shots > len(exemplars):
        raise MissingExemplars(f"{shots} shots requested, {len(exemplars)} exemplars available")
    parts = [INSTRUCTIONS.rstrip()]
    parts += [render_exemplar(ex, i) for i, ex in enumerate(exemplars[:shots], 1)]
    parts.append(f"### Problem\n{render_problem(record)}")
    return "\n\n".join(parts) + "\n"
