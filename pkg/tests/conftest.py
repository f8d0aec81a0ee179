import random
from importlib import resources
from pathlib import Path

import pytest

from alas.jssp import JsspInstance, Schedule, load_instance

DATA = Path(resources.files("alas") / "data")


def random_instance(rng: random.Random, jobs: int = 6, machines: int = 4, max_dur: int = 9,
                    name: str = "rand") -> JsspInstance:
    """Each job visits every machine once in a random order."""
    rows = []
    for _ in range(jobs):
        order = list(range(machines))
        rng.shuffle(order)
        rows.append([(m, rng.randint(1, max_dur)) for m in order])
    return JsspInstance.from_lists(rows, machines, name)


def as_pairs(instance: JsspInstance):
    return [[(op.machine, op.duration) for op in ops] for ops in instance.jobs]


@pytest.fixture(scope="session")
def fig2():
    return load_instance(DATA / "fig2.jssp")


@pytest.fixture(scope="session")
def fig2_plan():
    return Schedule.from_json((DATA / "fig2.plan.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def tiny():
    return load_instance(DATA / "tiny_2x2.jssp")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
