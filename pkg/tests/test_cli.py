from __future__ import annotations

import json
import subprocess
import sys
from fractions import Fraction

import pytest

from lns.cli import main, pct
from lns.pipeline import exemplars_path, read_records, write_records


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "hl.jsonl"
    assert main(["synth", "--config", "HL-HN", "--out", str(out), "--seed", "7", "--size", "10"]) == 0
    return out


def test_synth_writes_dataset_and_exemplars(dataset):
    records = read_records(dataset)
    assert len(records) == 10
    assert len(read_records(exemplars_path(dataset))) == 5
    assert all(r.seed == 7 for r in records)


def test_synth_is_reproducible(dataset, tmp_path):
    again = tmp_path / "again.jsonl"
    main(["synth", "--config", "HL-HN", "--out", str(again), "--seed", "7", "--size", "10", "--jobs", "2"])
    assert again.read_bytes() == dataset.read_bytes()
    assert exemplars_path(again).read_bytes() == exemplars_path(dataset).read_bytes()


def test_validate(dataset, tmp_path, capsys):
    assert main(["validate", "--dataset", str(dataset)]) == 0
    records = read_records(dataset)
    d = records[2].to_dict()
    d["answer"] += 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join([records[0].to_json(), json.dumps(d)]) + "\n")
    capsys.readouterr()
    assert main(["validate", "--dataset", str(bad)]) == 2
    assert "answer mismatch" in capsys.readouterr().out


def test_prompt(dataset, tmp_path):
    out = tmp_path / "p0"
    assert main(["prompt", "--dataset", str(dataset), "--shots", "0", "--out", str(out)]) == 0
    files = sorted(out.glob("*.txt"))
    assert len(files) == 10
    out3 = tmp_path / "p3"
    assert main(["prompt", "--dataset", str(dataset), "--shots", "3", "--out", str(out3)]) == 0
    assert (out3 / "HL-HN-0.txt").read_text().count("### Worked example") == 3


def test_prompt_without_exemplars(dataset, tmp_path):
    lonely = tmp_path / "lonely.jsonl"
    lonely.write_bytes(dataset.read_bytes())
    assert main(["prompt", "--dataset", str(lonely), "--shots", "2", "--out", str(tmp_path / "p")]) == 1
    assert main(["prompt", "--dataset", str(lonely), "--shots", "0", "--out", str(tmp_path / "p")]) == 0


def test_eval_gold_is_perfect(dataset, tmp_path, capsys):
    outputs = tmp_path / "gold"
    outputs.mkdir()
    for r in read_records(dataset):
        (outputs / f"{r.id}.txt").write_text("Some thinking first.\n" + r.gold_summary)
    report = tmp_path / "r.json"
    assert main(["eval", "--dataset", str(dataset), "--outputs", str(outputs), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["datasets"]["HL-HN"] == {"n_samples": 10, "mean_process": "100.00", "mean_answer": "100.00"}
    assert "100.00" in capsys.readouterr().out


def test_eval_mixed_outputs(dataset, tmp_path):
    records = read_records(dataset)
    lines = []
    for i, r in enumerate(records):
        if i == 0:
            continue  # no transcript at all
        if i == 1:
            text = ""
        elif i % 2:
            text = r.gold_summary.replace(f"\\boxed{{{r.answer}}}", f"\\boxed{{{r.answer + 1}}}")
        else:
            text = r.gold_summary
        lines.append(json.dumps({"id": r.id, "output": text}))
    outputs = tmp_path / "o.jsonl"
    outputs.write_text("\n".join(lines) + "\n")
    report = tmp_path / "r.json"
    assert main(["eval", "--dataset", str(dataset), "--outputs", str(outputs), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    rows = {s["id"]: s for s in data["samples"]}
    assert rows["HL-HN-0"]["missing_transcript"] and rows["HL-HN-0"]["reasons"] == ["MissingTranscript"]
    assert (rows["HL-HN-1"]["process"], rows["HL-HN-1"]["answer"]) == ("0", 0)
    # recompute the means from the per-sample rows
    proc = sum(Fraction(s["process"]) for s in data["samples"]) / len(rows)
    ans = Fraction(sum(s["answer"] for s in data["samples"]), len(rows))
    assert data["datasets"]["HL-HN"]["mean_process"] == f"{float(proc) * 100:.2f}"
    assert data["datasets"]["HL-HN"]["mean_answer"] == f"{float(ans) * 100:.2f}"
    assert data["datasets"]["HL-HN"]["mean_answer"] == "40.00"


def test_pct_rounds_half_up():
    assert pct(Fraction(5, 6)) == "83.33"
    assert pct(Fraction(1, 8)) == "12.50"
    assert pct(Fraction(1, 800)) == "0.13"
    assert pct(Fraction(1)) == "100.00"


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--config", "nope.toml", "--out", "x.jsonl"],
        ["frobnicate"],
        ["synth", "--out", "x.jsonl"],
        ["validate", "--dataset", "/nonexistent/file.jsonl"],
        ["synth", "--config", "EL-EN", "--out", "x.jsonl", "--jobs", "0"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 1


def test_refine_needs_endpoint(tmp_path, monkeypatch):
    monkeypatch.delenv("LNS_LLM_BASE_URL", raising=False)
    assert main(["synth", "--config", "EL-EN", "--size", "1", "--out", str(tmp_path / "x.jsonl"), "--refine"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lns.cli", "synth", "--config", "EL-EN", "--size", "2", "--out", str(tmp_path / "d.jsonl")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "wrote 2 records" in proc.stdout
