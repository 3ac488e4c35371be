import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from decoynav.env import CandidateSet, GridMap, Scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def open_scenario(size=5, start=(0, 0), goals=((4, 4), (0, 4)), real=0, obstacles=(), mode="discrete", priors=None):
    grid = GridMap(size, size, frozenset(obstacles))
    return Scenario(grid, start, CandidateSet(tuple(goals), real, priors), mode)


def nx_cost(grid, a, b):
    """Independent Dijkstra over a networkx graph of the free cells."""
    g = nx.Graph()
    for x, y in grid.free_cells():
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if (dx, dy) != (0, 0) and grid.is_free((x + dx, y + dy)):
                    g.add_edge((x, y), (x + dx, y + dy), weight=math.hypot(dx, dy))
    return nx.dijkstra_path_length(g, a, b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each; the lines are repeated in the terminal summary
_ACCEPTANCE = []


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
