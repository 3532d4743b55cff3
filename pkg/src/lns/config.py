"""Synthesis configuration: world sizes, counts, depth, expression knobs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

NAMED_CONFIGS = ("EL-EN", "EL-HN", "HL-EN", "HL-HN", "exHL-HN", "EL-Train", "EN-Train")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthesisConfig:
    """Difficulty knobs for one dataset.

    ``facts``/``rules`` are totals per sample; when ``depth_scaled_facts`` or
    ``depth_scaled_rules`` is set they are multiplied by the sample's depth.
    ``stratify_depth`` splits ``size`` evenly across every depth in the range
    instead of sampling the depth per sample.
    """

    entities: int = 10
    attributes: int = 15
    relationships: int = 10
    facts: int = 15
    rules: int = 15
    depth_min: int = 1
    depth_max: int = 3
    condition_min: int = 1
    condition_max: int = 1
    expr_weights: tuple[float, float, float, float] = (1, 1, 1, 0)
    agg_weights: tuple[float, float, float] = (1, 1, 1)
    operand_min: int = 1
    operand_max: int = 10
    size: int = 500
    seed: int = 0
    depth_scaled_facts: bool = False
    depth_scaled_rules: bool = False
    stratify_depth: bool = False
    name: str = field(default="custom", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "expr_weights", tuple(float(w) for w in self.expr_weights))
        object.__setattr__(self, "agg_weights", tuple(float(w) for w in self.agg_weights))
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.depth_min < 1 or self.depth_max < self.depth_min:
            problems.append("need 1 <= depth_min <= depth_max")
        if self.condition_min < 1 or self.condition_max < self.condition_min:
            problems.append("need 1 <= condition_min <= condition_max")
        if self.operand_max < self.operand_min:
            problems.append("operand range is empty")
        if len(self.expr_weights) != 4 or any(w < 0 for w in self.expr_weights) or not any(self.expr_weights):
            problems.append("expr_weights needs 4 non-negative weights, one positive")
        if len(self.agg_weights) != 3 or any(w < 0 for w in self.agg_weights):
            problems.append("agg_weights needs 3 non-negative weights")
        if self.expr_weights[3] > 0 and not any(self.agg_weights):
            problems.append("aggregation enabled but every agg weight is zero")
        if min(self.entities, self.attributes) < 2 or self.relationships < 0:
            problems.append("world too small")
        if self.size < 0:
            problems.append("size must be non-negative")
        for depth in (self.depth_min, self.depth_max):
            need_rules, need_facts = self.min_dag_cost(depth)
            if self.n_rules(depth) < need_rules or self.n_facts(depth) < need_facts:
                problems.append(
                    f"depth {depth} needs at least {need_facts} facts and {need_rules} rules"
                )
        if problems:
            raise ConfigError("; ".join(problems))

    def n_facts(self, depth: int) -> int:
        return self.facts * depth if self.depth_scaled_facts else self.facts

    def n_rules(self, depth: int) -> int:
        return self.rules * depth if self.depth_scaled_rules else self.rules

    def min_dag_cost(self, height: int) -> tuple[int, int]:
        """(rules, facts) of the cheapest derivation chain of ``height`` rules."""
        if height <= 0:
            return 0, 1
        c = self.condition_min
        return height, c + (height - 1) * (c - 1)

    def depths(self) -> list[int]:
        return list(range(self.depth_min, self.depth_max + 1))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["expr_weights"] = list(self.expr_weights)
        d["agg_weights"] = list(self.agg_weights)
        return d

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("name")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes: Any) -> "SynthesisConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return SynthesisConfig(**d)


def _weights(v: Any) -> tuple[float, ...]:
    if isinstance(v, str):
        return tuple(float(x) for x in v.split())
    return tuple(float(x) for x in v)


def config_from_mapping(data: Mapping[str, Any], name: str = "custom") -> SynthesisConfig:
    known = {f.name for f in fields(SynthesisConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kw = dict(data)
    for key in ("expr_weights", "agg_weights"):
        if key in kw:
            kw[key] = _weights(kw[key])
    kw.setdefault("name", name)
    try:
        return SynthesisConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path_or_name: str | Path) -> SynthesisConfig:
    """Load a TOML config file, or one of the bundled named configurations."""
    text = str(path_or_name)
    if text in NAMED_CONFIGS:
        raw = resources.files("lns").joinpath("data").joinpath("configs").joinpath(f"{text}.toml").read_text()
        name = text
    else:
        path = Path(text)
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        name = path.stem
    try:
        data = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {text}: {exc}") from None
    return config_from_mapping(data, name=name)
