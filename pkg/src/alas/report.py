"""Plot-ready run summaries: a CSV of run metrics and per-machine Gantt data."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .jssp.instance import machine_index, machine_name
from .pipeline import RunResult, supervise

CSV_FIELDS = ("instance", "seed", "makespan", "editRadius", "iterations", "wallTime")
RESULT_SUFFIX = ".result.json"


class NoResults(FileNotFoundError):
    pass


def load_results(directory) -> list[RunResult]:
    paths = sorted(Path(directory).glob(f"*{RESULT_SUFFIX}"))
    if not paths:
        raise NoResults(f"no *{RESULT_SUFFIX} files in {directory}")
    with ThreadPoolExecutor(max_workers=min(8, len(paths))) as pool:
        docs = list(pool.map(lambda p: json.loads(p.read_text(encoding="utf-8")), paths))
    return [RunResult.from_dict(d) for d in docs]


def csv_rows(results) -> list[dict]:
    return [{"instance": r.instance, "seed": r.seed, "makespan": r.makespan,
             "editRadius": r.edit_radius.ops_touched, "iterations": r.repair_iterations,
             "wallTime": f"{r.wall_time:.6f}"} for r in results]


def gantt(result: RunResult) -> dict:
    """Per-machine interval lists; outages appear as ``downtime`` intervals."""
    tracks: dict[int, list[dict]] = {}
    for e in result.final_schedule:
        tracks.setdefault(machine_index(e.machine), []).append(
            {"kind": "operation", "job": e.job, "step": e.step, "start": e.start, "end": e.end})
    for w in result.downtime:
        tracks.setdefault(w.machine, []).append({"kind": "downtime", "start": w.start, "end": w.end})
    return {
        "runId": result.run_id,
        "instance": result.instance,
        "seed": result.seed,
        "makespan": result.makespan,
        "machines": {machine_name(m): sorted(iv, key=lambda x: (x["start"], x["end"]))
                     for m, iv in sorted(tracks.items())},
    }


def emit_report(directory, out_dir=None) -> dict:
    """Write ``runs.csv`` and ``gantt.json`` for every result file in ``directory``."""
    results = load_results(directory)
    out = Path(out_dir) if out_dir is not None else Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, gantt_path = out / "runs.csv", out / "gantt.json"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(csv_rows(results))
    gantt_path.write_text(json.dumps([gantt(r) for r in results], indent=2) + "\n", encoding="utf-8")
    summary = supervise(results)
    return {
        "csv": str(csv_path),
        "gantt": str(gantt_path),
        "runs": summary["runs"],
        "best": {"runId": summary["best"].run_id, "seed": summary["best"].seed,
                 "makespan": summary["best"].makespan},
        "meanEditRadius": summary["meanEditRadius"],
        "successFraction": summary["successFraction"],
    }
