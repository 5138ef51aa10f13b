from pathlib import Path

import pytest
import torch

from densegraph.datasets import load_tudataset

DATA = Path(__file__).parent / "data"

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def data_root():
    return DATA


@pytest.fixture(scope="session")
def mutag():
    return load_tudataset(DATA, "MUTAG")


@pytest.fixture(scope="session")
def tiny():
    return load_tudataset(DATA, "TINY")


_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = "; ".join(v for k, v in report.user_properties if k == "measured")
        _criteria[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in sorted(_criteria.items()):
        line = f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
