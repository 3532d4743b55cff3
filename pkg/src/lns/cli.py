"""Command-line interface: synth, prompt, eval, validate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .config import ConfigError, load_config
from .evaluator import read_summary, score
from .llm import ChatClient, ClientNotConfigured
from .pipeline import (
    DEFAULT_EXEMPLARS,
    RecordError,
    SampleRecord,
    exemplars_path,
    read_records,
    refine_records,
    synthesize_records,
    validate_records,
    write_records,
)
from .prompts import MissingExemplars, build_prompt

log = logging.getLogger("lns")

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def pct(x: Fraction) -> str:
    """``x`` as a percentage with two decimals, rounding half up."""
    d = Decimal(x.numerator * 100) / Decimal(x.denominator)
    return str(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


# -------------------------------------------------------------------- synth


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.size is not None:
        cfg = cfg.replace(size=args.size)
    seed = cfg.seed if args.seed is None else args.seed
    records = synthesize_records(cfg, seed, jobs=args.jobs)
    exemplars = synthesize_records(cfg, seed, count=args.exemplars, namespace="exemplar", jobs=args.jobs)
    if args.refine:
        try:
            client = ChatClient.from_env()
        except ClientNotConfigured as exc:
            raise UsageError(f"--refine: {exc}") from None
        records = refine_records(records, client)
        exemplars = refine_records(exemplars, client)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_records(out, records)
    write_records(exemplars_path(out), exemplars)
    print(f"wrote {len(records)} records to {out} and {len(exemplars)} exemplars to {exemplars_path(out)}")
    return EXIT_OK


# ------------------------------------------------------------------- prompt


def cmd_prompt(args: argparse.Namespace) -> int:
    records = read_records(args.dataset)
    exemplars: list[SampleRecord] = []
    if args.shots > 0:
        path = exemplars_path(args.dataset)
        if not path.exists():
            raise MissingExemplars(f"no exemplars file at {path}")
        exemplars = read_records(path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in records:
        (out / f"{r.id}.txt").write_text(build_prompt(r, exemplars, args.shots), encoding="utf-8")
    print(f"wrote {len(records)} prompts to {out}")
    return EXIT_OK


# --------------------------------------------------------------------- eval


@dataclass
class SampleScore:
    id: str
    dataset: str
    process: Fraction
    answer: int
    reasons: list[str] = field(default_factory=list)
    missing: bool = False

    def row(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset,
            "process": str(self.process),
            "process_pct": pct(self.process),
            "answer": self.answer,
            "reasons": self.reasons,
            "missing_transcript": self.missing,
        }


def load_transcripts(path: str | Path) -> dict[str, str]:
    """Transcripts keyed by sample id: a directory of ``<id>.txt`` files or a JSONL stream."""
    p = Path(path)
    if p.is_dir():
        return {f.stem: f.read_text(encoding="utf-8") for f in sorted(p.glob("*.txt"))}
    out = {}
    with open(p, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    obj = json.loads(line)
                    out[str(obj["id"])] = obj["output"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise UsageError(f"{p}:{n}: expected {{\"id\", \"output\"}} record ({exc})") from None
    return out


def evaluate(records: Sequence[SampleRecord], transcripts: dict[str, str], client: ChatClient | None = None) -> list[SampleScore]:
    out = []
    for r in records:
        raw = transcripts.get(r.id)
        if raw is None:
            out.append(SampleScore(r.id, r.config.name, Fraction(0), 0, ["MissingTranscript"], True))
            continue
        summary = read_summary(raw, client, r.elements.attributes, r.elements.relations)
        s = score(r.eval_world(), summary)
        out.append(SampleScore(r.id, r.config.name, s.process, s.answer, s.reasons))
    return out


def build_report(scores: Sequence[SampleScore]) -> dict:
    groups: dict[str, list[SampleScore]] = {}
    for s in scores:
        groups.setdefault(s.dataset, []).append(s)
    datasets = {}
    for name, rows in groups.items():
        n = len(rows)
        datasets[name] = {
            "n_samples": n,
            "mean_process": pct(sum((r.process for r in rows), Fraction(0)) / n),
            "mean_answer": pct(Fraction(sum(r.answer for r in rows), n)),
        }
    return {"datasets": datasets, "samples": [s.row() for s in scores]}


def format_report(report: dict) -> str:
    lines = [f"{'dataset':<16} {'n':>6} {'Proc':>8} {'Ans':>8}"]
    for name, d in report["datasets"].items():
        lines.append(f"{name:<16} {d['n_samples']:>6} {d['mean_process']:>8} {d['mean_answer']:>8}")
    return "\n".join(lines)


def cmd_eval(args: argparse.Namespace) -> int:
    records = read_records(args.dataset)
    transcripts = load_transcripts(args.outputs)
    client = None
    if args.llm_extract:
        try:
            client = ChatClient.from_env()
        except ClientNotConfigured as exc:
            raise UsageError(f"--llm-extract: {exc}") from None
    report = build_report(evaluate(records, transcripts, client))
    Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(format_report(report))
    missing = sum(1 for s in report["samples"] if s["missing_transcript"])
    if missing:
        log.warning("%d samples had no transcript and were scored 0", missing)
    return EXIT_OK


# ----------------------------------------------------------------- validate


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        records = read_records(args.dataset)
    except RecordError as exc:
        print(f"invalid: {exc}")
        return EXIT_INVALID
    problems = validate_records(records)
    for p in problems:
        print(p)
    print(f"{len(records)} records, {len(problems)} violations")
    return EXIT_INVALID if problems else EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lns", description="Synthesize and score logical-numerical reasoning datasets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a dataset and its exemplars")
    p.add_argument("--config", required=True, help="TOML config path or bundled config name")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, help="override the config's sample count")
    p.add_argument("--exemplars", type=int, default=DEFAULT_EXEMPLARS)
    p.add_argument("--refine", action="store_true", help="refine text with the LNS_LLM_* endpoint")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prompt", help="write one evaluation prompt per sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("eval", help="score model transcripts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--outputs", required=True, help="directory of <id>.txt files or JSONL of {id, output}")
    p.add_argument("--llm-extract", action="store_true")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="re-check every record of a dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1 or getattr(args, "shots", 0) < 0 or (getattr(args, "size", None) or 0) < 0:
        print("lns: error: counts must be non-negative (and --jobs at least 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError, MissingExemplars, RecordError, OSError) as exc:
        print(f"lns: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
