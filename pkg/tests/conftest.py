import numpy as np
import pytest

from routenet import topologies
from routenet.netcore import build_topology, generate_traffic_matrix, shortest_path_routing


@pytest.fixture
def toy5():
    return topologies.toy5()


@pytest.fixture
def line3():
    # 0 - 1 - 2, one capacity everywhere
    return build_topology(3, [(0, 1, 10000.0), (1, 2, 10000.0)], "line3")


@pytest.fixture
def scenario(toy5):
    tm = generate_traffic_matrix(toy5, 10000.0, seed=1)
    return toy5, shortest_path_routing(toy5), tm


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
