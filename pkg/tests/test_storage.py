import json
from pathlib import Path

from plumeseek.models import ExperimentSummary, Outcome, RunRecord, StepRecord
from plumeseek.storage import read_json, write_json, write_run, write_summary


def _record(run_id: int, outcome: Outcome = Outcome.SUCCESS) -> RunRecord:
    steps = [StepRecord(1, (1, 0), 2, "right", "right"), StepRecord(2, (1, 1), 5, "up", "left")]
    return RunRecord(run_id, outcome, len(steps), steps, start=(0, 0), source=(1, 1))


def test_write_json_sorts_keys(tmp_path: Path):
    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "nested" / "x.json")
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")
    assert read_json(path) == {"a": [1, 2], "b": 1}


def test_write_run(tmp_path: Path):
    path = write_run(_record(7), tmp_path)
    assert path.name == "run-0007.json"
    data = read_json(path)
    assert data["control_failures"] == 1
    assert data["trajectory"] == [[0, 0], [1, 0], [1, 1]]
    lines = (tmp_path / "run-0007.jsonl").read_text().splitlines()
    assert [json.loads(line)["k"] for line in lines] == [1, 2]


def test_write_summary_layout(tmp_path: Path):
    summary = ExperimentSummary([_record(0), _record(1, Outcome.FAILURE_UNFOUND)], {"N": 10})
    write_summary(summary, tmp_path)
    data = read_json(tmp_path / "summary.json")
    assert data["success_rate"] == 50.0
    assert data["outcomes"]["failure-unfound"] == 1
    assert (tmp_path / "runs.csv").read_text().splitlines() == [
        "run_id,outcome,steps",
        "0,success,2",
        "1,failure-unfound,2",
    ]
    assert sorted(p.name for p in (tmp_path / "runs").iterdir()) == [
        "run-0000.json",
        "run-0000.jsonl",
        "run-0001.json",
        "run-0001.jsonl",
    ]


def test_write_summary_without_runs(tmp_path: Path):
    write_summary(ExperimentSummary([_record(0)]), tmp_path, persist_runs=False)
    assert not (tmp_path / "runs").exists()
