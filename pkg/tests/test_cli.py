import csv
import json
import subprocess
import sys

import pytest

from alas.cli import main
from alas.execlog import VersionedLog
from alas.report import NoResults, emit_report

from conftest import DATA

FIG2 = str(DATA / "fig2.jssp")
TINY = str(DATA / "tiny_2x2.jssp")


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_happy_path(capsys, tmp_path):
    code, out, _ = call(capsys, "solve", "--instance", TINY, "--planner", "spt", "--seed", "1",
                        "--out-dir", str(tmp_path))
    doc = json.loads(out)
    assert code == 0 and doc["valid"] and doc["makespan"] == 6
    assert (tmp_path / f"{doc['runId']}.result.json").exists()


def test_validate_overlap_exits_2(capsys, tmp_path):
    rows = [{"job": "Job1", "step": 1, "machine": "Machine0", "start": 0, "end": 2, "duration": 2},
            {"job": "Job1", "step": 2, "machine": "Machine1", "start": 2, "end": 5, "duration": 3},
            {"job": "Job2", "step": 1, "machine": "Machine1", "start": 0, "end": 1, "duration": 1},
            {"job": "Job2", "step": 2, "machine": "Machine0", "start": 1, "end": 5, "duration": 4}]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(rows), encoding="utf-8")
    code, out, _ = call(capsys, "validate", "--schedule", str(bad), "--instance", TINY)
    assert code == 2
    assert "machine-overlap" in {e["code"] for e in json.loads(out)["errors"]}


def test_disrupt_5x3(capsys, tmp_path):
    code, out, _ = call(capsys, "disrupt", "--instance", FIG2, "--breakdown", "M1:5:8", "--wip", "1.0",
                        "--out-dir", str(tmp_path))
    doc = json.loads(out)
    assert code == 0 and doc["makespan"] == 22 and doc["wipUnits"] == 1


def test_disrupt_needs_an_event(capsys):
    code, _, err = call(capsys, "disrupt", "--instance", FIG2)
    assert code == 1 and "breakdown" in err


def test_repair_writes_schedule(capsys, tmp_path, fig2_plan):
    rows = fig2_plan.to_list()
    rows[5]["start"], rows[5]["end"] = 2, 6
    src, dst = tmp_path / "in.json", tmp_path / "out.json"
    src.write_text(json.dumps(rows), encoding="utf-8")
    code, out, _ = call(capsys, "repair", "--schedule", str(src), "--instance", FIG2, "--out", str(dst))
    assert code == 0 and json.loads(out)["errorsAfter"] == 0
    code, _, _ = call(capsys, "validate", "--schedule", str(dst), "--instance", FIG2)
    assert code == 0


def test_convert_both_ways(capsys, tmp_path):
    asl = tmp_path / "wf.asl.json"
    code, out, _ = call(capsys, "convert", "--input", str(DATA / "policy_example.json"), "--to", "asl",
                        "--out", str(asl))
    assert code == 0 and json.loads(out)["parityOk"]
    back = tmp_path / "wf.ir.json"
    code, _, _ = call(capsys, "convert", "--input", str(asl), "--from", "asl", "--out", str(back))
    assert code == 0 and json.loads(back.read_text(encoding="utf-8"))["Workflow"]["nodes"]


def test_convert_needs_direction(capsys):
    code, _, _ = call(capsys, "convert", "--input", str(DATA / "policy_example.json"))
    assert code == 1


def test_log_and_replay(capsys, tmp_path):
    log = tmp_path / "run.ndjson"
    code, _, _ = call(capsys, "solve", "--instance", FIG2, "--seed", "4", "--log", str(log),
                      "--out-dir", str(tmp_path))
    assert code == 0
    assert VersionedLog.load(log).entries
    code, out, _ = call(capsys, "replay", "--log", str(log), "--seed", "4")
    assert code == 0 and json.loads(out)["parityOk"]
    code, out, _ = call(capsys, "replay", "--log", str(log), "--seed", "5")
    assert code == 2 and json.loads(out)["index"] == 0


def test_env_seed_overrides_flag(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("ALAS_SEED", "9")
    code, out, _ = call(capsys, "solve", "--instance", TINY, "--seed", "1", "--out-dir", str(tmp_path))
    assert code == 0 and json.loads(out)["seed"] == 9


def test_report(capsys, tmp_path):
    call(capsys, "disrupt", "--instance", FIG2, "--breakdown", "M1:5:8", "--out-dir", str(tmp_path))
    code, _, _ = call(capsys, "report", "--results", str(tmp_path))
    assert code == 0
    with open(tmp_path / "runs.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert set(rows[0]) == {"instance", "seed", "makespan", "editRadius", "iterations", "wallTime"}
    assert rows[0]["makespan"] == "22"
    (gantt,) = json.loads((tmp_path / "gantt.json").read_text(encoding="utf-8"))
    down = [(i["start"], i["end"]) for i in gantt["machines"]["Machine1"] if i["kind"] == "downtime"]
    assert down == [(5, 8)]


def test_report_empty_dir(capsys, tmp_path):
    with pytest.raises(NoResults):
        emit_report(tmp_path)
    code, _, _ = call(capsys, "report", "--results", str(tmp_path))
    assert code == 1


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["solve"], ["solve", "--instance", FIG2, "--seed", "x"]])
def test_usage_errors(capsys, argv):
    assert call(capsys, *argv)[0] == 1


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "alas.cli", "solve", "--instance", TINY, "--out-dir",
                           str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["valid"]
