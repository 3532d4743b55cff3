"""Word pools and per-sample selection of entities, attributes, relations."""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .config import SynthesisConfig
from .lemma import tokens_match
from .world import AGG_OPS, Query

RESERVED = frozenset({"is", "and", "exists", "between", "entity", *AGG_OPS})


class VocabError(ValueError):
    pass


class EmptyPool(VocabError):
    pass


class PoolTooSmall(VocabError):
    pass


@dataclass(frozen=True)
class VocabPools:
    entities: tuple[str, ...]
    attributes: tuple[str, ...]
    relations: tuple[str, ...]


@dataclass(frozen=True)
class WorldElements:
    entities: tuple[str, ...]
    attributes: tuple[str, ...]
    relations: tuple[str, ...]


def _read_tokens(text: str, lower: bool) -> tuple[str, ...]:
    seen: dict[str, str] = {}
    for line in text.splitlines():
        tok = line.strip()
        if not tok or tok.startswith("#"):
            continue
        if lower:
            tok = tok.lower()
        key = tok.casefold()
        if key in RESERVED or key.startswith("entity_") or not tok.isidentifier():
            continue
        seen.setdefault(key, tok)
    return tuple(seen.values())


def _load_one(path: Path | str, lower: bool) -> tuple[str, ...]:
    text = Path(path).read_text(encoding="utf-8")
    toks = _read_tokens(text, lower)
    if not toks:
        raise EmptyPool(f"{path} has no usable tokens")
    return toks


def load_pools(entity_path, attribute_path, relation_path) -> VocabPools:
    """Load one-token-per-line pools; entity names keep their casing."""
    return VocabPools(
        entities=_load_one(entity_path, lower=False),
        attributes=_load_one(attribute_path, lower=True),
        relations=_load_one(relation_path, lower=True),
    )


@lru_cache(maxsize=1)
def default_pools() -> VocabPools:
    data = resources.files("lns").joinpath("data")
    with resources.as_file(data) as root:
        return load_pools(root / "entities.txt", root / "attributes.txt", root / "relations.txt")


def _pick_distinct(pool, n, rng, avoid=(), what="tokens"):
    if n > len(pool):
        raise PoolTooSmall(f"need {n} {what}, pool has {len(pool)}")
    chosen: list[str] = []
    for i in rng.sample(range(len(pool)), len(pool)):
        tok = pool[i]
        if any(tokens_match(tok, c) for c in chosen) or any(tokens_match(tok, a) for a in avoid):
            continue
        chosen.append(tok)
        if len(chosen) == n:
            return tuple(chosen)
    raise PoolTooSmall(f"only {len(chosen)} lemma-distinct {what} available, need {n}")


def sample_world_elements(pools: VocabPools, config: SynthesisConfig, rng: random.Random) -> WorldElements:
    """Entities, attributes and relations for one sample.

    Attributes are pairwise lemma-distinct, relations likewise, and no
    relation shares a lemma with an attribute.
    """
    if config.entities > len(pools.entities):
        raise PoolTooSmall(f"need {config.entities} entities, pool has {len(pools.entities)}")
    entities = tuple(rng.sample(pools.entities, config.entities))
    attributes = _pick_distinct(pools.attributes, config.attributes, rng, what="attributes")
    relations = _pick_distinct(pools.relations, config.relationships, rng, avoid=attributes, what="relations")
    return WorldElements(entities, attributes, relations)


def sample_query(elements: WorldElements, rng: random.Random) -> Query:
    return Query(rng.choice(elements.entities), rng.choice(elements.attributes))
