import json

import pytest

from modecal.journal import Journal, JournalCorruption


def result(trial, config="0-0", status="completed", loss=1.0):
    return {"trial": trial, "config": config, "budget": 21, "status": status, "loss": loss,
            "iterations_run": 21, "t_submit": 0.0, "t_start": 0.0, "t_finish": 1.0, "worker": "w0"}


def make(tmp_path, results=(), configs=("0-0",)):
    j = Journal(tmp_path, fsync=False)
    for c in configs:
        j.append_config({"config": c, "values": {"car": 1.0}})
    for r in results:
        j.append_result(r)
    j.close()
    return j


def test_round_trip(tmp_path):
    j = make(tmp_path, [result(1), result(2, status="pruned", loss=40.0)])
    configs, results = j.load()
    assert list(configs) == ["0-0"]
    assert [r["trial"] for r in results] == [1, 2]
    assert results[1]["status"] == "pruned"


def test_lines_are_sorted_json(tmp_path):
    make(tmp_path, [result(1)])
    line = (tmp_path / "results.jsonl").read_text().splitlines()[0]
    assert list(json.loads(line)) == sorted(json.loads(line))


def test_unknown_config_is_corruption(tmp_path):
    j = make(tmp_path, [result(1, config="9-9")])
    with pytest.raises(JournalCorruption, match="unknown config"):
        j.load()


def test_duplicate_trial(tmp_path):
    j = make(tmp_path, [result(1), result(1)])
    with pytest.raises(JournalCorruption, match="duplicate"):
        j.load()


def test_missing_field_names_line(tmp_path):
    j = make(tmp_path, [result(1)])
    with open(tmp_path / "results.jsonl", "a") as fh:
        fh.write(json.dumps({"trial": 2}) + "\n")
    with pytest.raises(JournalCorruption, match="results.jsonl:2"):
        j.load()


def test_garbage_in_middle(tmp_path):
    j = make(tmp_path, [result(1)])
    with open(tmp_path / "results.jsonl", "a") as fh:
        fh.write("{not json\n")
        fh.write(json.dumps(result(3)) + "\n")
    with pytest.raises(JournalCorruption, match="not valid JSON"):
        j.load()


def test_torn_final_line_is_dropped(tmp_path):
    j = make(tmp_path, [result(1)])
    with open(tmp_path / "results.jsonl", "a") as fh:
        fh.write('{"trial": 2, "conf')
    _, results = j.load()
    assert [r["trial"] for r in results] == [1]
    assert (tmp_path / "results.jsonl").read_text().endswith("}\n")


def test_missing_newline_on_complete_record(tmp_path):
    j = make(tmp_path, [result(1)])
    with open(tmp_path / "results.jsonl", "a") as fh:
        fh.write(json.dumps(result(2)))
    _, results = j.load()
    assert len(results) == 2
    assert (tmp_path / "results.jsonl").read_text().endswith("\n")


def test_meta(tmp_path):
    j = Journal(tmp_path, fsync=True)
    assert j.read_meta() is None
    j.write_meta({"seed": 3})
    assert j.read_meta() == {"seed": 3}
