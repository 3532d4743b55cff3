"""Sample assembly, dataset records and dataset-level checks."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .config import SynthesisConfig, config_from_mapping
from .dag import GoldStep, SynthesisExhausted, construct_dag, derive_gold, statement
from .distraction import add_distractions
from .engine import Conflict, closure
from .evaluator import EvalWorld, parse_summary, score
from .llm import ChatClient
from .nlg import TemplateSet, load_templates, refine_line, render_item, render_query
from .vocab import WorldElements, default_pools, sample_query, sample_world_elements
from .world import (
    AttrFact,
    Fact,
    MissingAttribute,
    ParseError,
    Query,
    Rule,
    ValueOverflow,
    canonical_variables,
    fact_from_dict,
    fact_to_dict,
    parse_fact,
    parse_rule,
    rule_from_dict,
    rule_to_dict,
)

log = logging.getLogger(__name__)

MAX_RESEEDS = 64
DEFAULT_EXEMPLARS = 5


class RecordError(ValueError):
    pass


def derive_seed(seed: int, namespace: str, index: int, attempt: int = 0) -> int:
    blob = f"{seed}:{namespace}:{index}:{attempt}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


# ----------------------------------------------------------------- records


@dataclass(frozen=True)
class Entry:
    id: int
    item: Any  # Fact or Rule
    templated: str
    refined: str | None = None

    @property
    def text(self) -> str:
        return self.refined if self.refined is not None else self.templated

    def to_dict(self) -> dict[str, Any]:
        tree = rule_to_dict(self.item) if isinstance(self.item, Rule) else fact_to_dict(self.item)
        return {
            "id": self.id,
            "formal": str(self.item),
            "templated": self.templated,
            "refined": self.refined,
            "tree": tree,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], kind: str) -> "Entry":
        try:
            if kind == "rule":
                item: Any = parse_rule(d["formal"], d["id"])
                tree = rule_from_dict(d["tree"], d["id"])
            else:
                item = parse_fact(d["formal"])
                tree = fact_from_dict(d["tree"])
        except (ParseError, KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{kind} entry {d.get('id')}: {exc}") from None
        if item != tree or str(item) != str(tree):
            raise RecordError(f"{kind}_{d['id']}: formal text and tree disagree")
        return cls(d["id"], item, d["templated"], d.get("refined"))


def _step_to_dict(s: GoldStep) -> dict[str, Any]:
    return {
        "index": s.index,
        "rule": s.rule_id,
        "facts": list(s.dep_fact_ids),
        "ints": list(s.dep_int_ids),
        "deps": list(s.deps),
        "conclusion": str(s.conclusion),
        "text": s.rendered,
    }


def _step_from_dict(d: Mapping[str, Any]) -> GoldStep:
    return GoldStep(
        d["index"], d["rule"], tuple(d["facts"]), tuple(d["ints"]), tuple(d["deps"]),
        parse_fact(d["conclusion"]),
    )


def gold_summary(steps: Sequence[GoldStep], answer: int) -> str:
    lines = ["Reasoning:", *(s.rendered for s in steps), f"Answer: \\boxed{{{answer}}}"]
    return "\n".join(lines)


@dataclass
class SampleRecord:
    id: str
    index: int
    config: SynthesisConfig
    seed: int
    depth: int
    elements: WorldElements
    facts: list[Entry]
    rules: list[Entry]
    query: Query
    query_text: str
    answer: int
    gold_steps: list[GoldStep]

    @property
    def gold_summary(self) -> str:
        return gold_summary(self.gold_steps, self.answer)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "index": self.index,
            "config_name": self.config.name,
            "fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
            "seed": self.seed,
            "depth": self.depth,
            "elements": {
                "entities": list(self.elements.entities),
                "attributes": list(self.elements.attributes),
                "relations": list(self.elements.relations),
            },
            "facts": [e.to_dict() for e in self.facts],
            "rules": [e.to_dict() for e in self.rules],
            "query": {
                "entity": self.query.entity,
                "attribute": self.query.attribute,
                "formal": str(self.query),
                "text": self.query_text,
            },
            "answer": self.answer,
            "gold_steps": [_step_to_dict(s) for s in self.gold_steps],
            "gold_summary": self.gold_summary,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SampleRecord":
        try:
            cfg = config_from_mapping(d["config"])
            if cfg.fingerprint() != d["fingerprint"]:
                raise RecordError(f"{d['id']}: config fingerprint mismatch")
            el = d["elements"]
            return cls(
                id=d["id"],
                index=d["index"],
                config=cfg,
                seed=d["seed"],
                depth=d["depth"],
                elements=WorldElements(tuple(el["entities"]), tuple(el["attributes"]), tuple(el["relations"])),
                facts=[Entry.from_dict(x, "fact") for x in d["facts"]],
                rules=[Entry.from_dict(x, "rule") for x in d["rules"]],
                query=Query(d["query"]["entity"], d["query"]["attribute"]),
                query_text=d["query"]["text"],
                answer=d["answer"],
                gold_steps=[_step_from_dict(s) for s in d["gold_steps"]],
            )
        except RecordError:
            raise
        except (KeyError, TypeError, ValueError, ParseError) as exc:
            raise RecordError(f"malformed record {d.get('id', '?')}: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    def eval_world(self) -> EvalWorld:
        return EvalWorld(
            facts={e.id: e.item for e in self.facts},
            rules={e.id: e.item for e in self.rules},
            query=self.query,
            answer=self.answer,
            gold=[s.conclusion for s in self.gold_steps],
        )


# ---------------------------------------------------------------- synthesis


@lru_cache(maxsize=8)
def _templates(directory: str | None) -> TemplateSet:
    return load_templates(directory)


def target_depth(config: SynthesisConfig, index: int, total: int) -> int | None:
    """Stratum depth for ``index`` when the config splits size across depths."""
    if not config.stratify_depth:
        return None
    depths = config.depths()
    return depths[min(index * len(depths) // max(total, 1), len(depths) - 1)]


def synthesize_sample(
    config: SynthesisConfig,
    index: int,
    seed: int,
    namespace: str = "data",
    total: int | None = None,
    templates: TemplateSet | None = None,
) -> SampleRecord:
    """Build sample ``index`` of a dataset; only (config, seed, namespace, index) matter."""
    templates = templates or _templates(None)
    pools = default_pools()
    depth = target_depth(config, index, config.size if total is None else total)
    for attempt in range(MAX_RESEEDS):
        rng = random.Random(derive_seed(seed, namespace, index, attempt))
        elements = sample_world_elements(pools, config, rng)
        query = sample_query(elements, rng)
        try:
            res = construct_dag(elements, query, config, rng, depth=depth)
            padded = add_distractions(res.facts, res.rules, res.closure, elements, config, res.depth, rng)
        except SynthesisExhausted as exc:
            log.info("%s sample %d attempt %d exhausted (%s); reseeding", namespace, index, attempt, exc)
            continue
        break
    else:
        raise SynthesisExhausted(f"{namespace} sample {index}: no success after {MAX_RESEEDS} reseeds")

    facts = list(padded.facts)
    rules = list(padded.rules)
    rng.shuffle(facts)
    rng.shuffle(rules)
    fact_ids = {f: i for i, f in enumerate(facts, 1)}
    rule_ids = {r: i for i, r in enumerate(rules, 1)}
    steps, answer = derive_gold(res.dag, fact_ids, rule_ids)
    if answer != res.answer:
        raise AssertionError("gold replay disagrees with construction")

    fact_entries = [Entry(i, f, render_item(f, templates, rng)) for i, f in enumerate(facts, 1)]
    rule_entries = []
    for i, r in enumerate(rules, 1):
        r = dataclasses.replace(canonical_variables(r), id=i)
        rule_entries.append(Entry(i, r, render_item(r, templates, rng)))
    prefix = config.name if namespace == "data" else f"{config.name}-{namespace}"
    return SampleRecord(
        id=f"{prefix}-{index}",
        index=index,
        config=config,
        seed=seed,
        depth=res.depth,
        elements=elements,
        facts=fact_entries,
        rules=rule_entries,
        query=query,
        query_text=render_query(query, templates, rng),
        answer=answer,
        gold_steps=steps,
    )


def _job(args: tuple) -> str:
    cfg_dict, name, index, seed, namespace, total = args
    cfg = config_from_mapping(cfg_dict, name=name)
    return synthesize_sample(cfg, index, seed, namespace, total).to_json()


def synthesize_records(
    config: SynthesisConfig,
    seed: int,
    count: int | None = None,
    namespace: str = "data",
    jobs: int = 1,
) -> list[SampleRecord]:
    count = config.size if count is None else count
    cfg = config.to_dict()
    name = cfg.pop("name")
    work = [(cfg, name, i, seed, namespace, count) for i in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lines = list(pool.map(_job, work, chunksize=max(1, count // (jobs * 4))))
    else:
        lines = [_job(w) for w in work]
    return [SampleRecord.from_dict(json.loads(line)) for line in lines]


def refine_records(records: Sequence[SampleRecord], client: ChatClient) -> list[SampleRecord]:
    """Attach validated refinements to every fact and rule line."""
    jobs = [(ri, kind, ei, e) for ri, r in enumerate(records) for kind in ("facts", "rules")
            for ei, e in enumerate(getattr(r, kind))]
    results = client.map(lambda j: refine_line(str(j[3].item), j[3].templated, client), jobs)
    out = [dataclasses.replace(r, facts=list(r.facts), rules=list(r.rules)) for r in records]
    for (ri, kind, ei, e), refined in zip(jobs, results):
        getattr(out[ri], kind)[ei] = dataclasses.replace(e, refined=refined)
    return out


# ---------------------------------------------------------------------- io


def exemplars_path(dataset: str | Path) -> Path:
    p = Path(dataset)
    return p.with_name(p.stem + ".exemplars" + (p.suffix or ".jsonl"))


def write_records(path: str | Path, records: Iterable[SampleRecord]) -> None:
    records = sorted(records, key=lambda r: r.index)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: str | Path) -> list[SampleRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"line {n}: {exc}") from None
            out.append(SampleRecord.from_dict(data))
    return out


# -------------------------------------------------------------- validation


def _step_depths(steps: Sequence[GoldStep]) -> dict[int, int]:
    depth: dict[int, int] = {}
    for s in steps:
        depth[s.index] = 1 + max((depth.get(n, 0) for n in s.dep_int_ids), default=0)
    return depth


def validate_record(record: SampleRecord) -> list[str]:
    """Every violated record invariant, as human-readable strings."""
    rid, cfg = record.id, record.config
    problems = []
    if [e.id for e in record.facts] != list(range(1, len(record.facts) + 1)):
        problems.append(f"{rid}: fact ids are not 1..n")
    if [e.id for e in record.rules] != list(range(1, len(record.rules) + 1)):
        problems.append(f"{rid}: rule ids are not 1..n")
    if not cfg.depth_min <= record.depth <= cfg.depth_max:
        problems.append(f"{rid}: depth {record.depth} outside [{cfg.depth_min}, {cfg.depth_max}]")
    if len(record.facts) != cfg.n_facts(record.depth):
        problems.append(f"{rid}: count violation, {len(record.facts)} facts, expected {cfg.n_facts(record.depth)}")
    if len(record.rules) != cfg.n_rules(record.depth):
        problems.append(f"{rid}: count violation, {len(record.rules)} rules, expected {cfg.n_rules(record.depth)}")

    facts = [e.item for e in record.facts]
    rules = [e.item for e in record.rules]
    try:
        result = closure(facts, rules)
    except ValueOverflow as exc:
        return problems + [f"{rid}: value overflow during closure: {exc}"]
    if isinstance(result, Conflict):
        problems.append(
            f"{rid}: uniqueness violation, {result.attribute} of {result.entity} "
            f"is both {result.existing} and {result.derived}"
        )
    else:
        try:
            value = result.value(record.query.entity, record.query.attribute)
        except MissingAttribute:
            value = None
        if value != record.answer:
            problems.append(f"{rid}: answer mismatch, recorded {record.answer}, closure gives {value}")

    if not record.gold_steps:
        return problems + [f"{rid}: no gold steps"]
    last = record.gold_steps[-1].conclusion
    target = AttrFact(record.query.entity, record.query.attribute, record.answer)
    if last != target:
        problems.append(f"{rid}: answer mismatch, last gold step concludes {statement(last)}")
    for s in record.gold_steps:
        bad = [f for f in s.dep_fact_ids if not 1 <= f <= len(facts)]
        if not 1 <= s.rule_id <= len(rules) or bad:
            problems.append(f"{rid}: gold step {s.index} cites a missing id")
    depths = _step_depths(record.gold_steps)
    if depths[record.gold_steps[-1].index] != record.depth:
        problems.append(f"{rid}: gold derivation depth {depths[record.gold_steps[-1].index]} != {record.depth}")
    if not problems:
        s = score(record.eval_world(), parse_summary(record.gold_summary))
        if (s.process, s.answer) != (1, 1):
            problems.append(f"{rid}: gold self-score is ({s.process}, {s.answer}); reasons {s.reasons}")
    return problems


def validate_records(records: Iterable[SampleRecord]) -> list[str]:
    out = []
    for r in records:
        out.extend(validate_record(r))
    return out
