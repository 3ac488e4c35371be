"""Reference scenarios: mirror-symmetric decoy layouts and random map suites."""
from __future__ import annotations

from .env import CandidateSet, GridMap, Scenario
from .maps import LAYOUTS, generate_map, random_scenario


def _mirror(cells):
    return {(y, x) for x, y in cells} | set(cells)


def symmetric_scenario(size: int, start: int, goals, real_index: int, obstacles=(), name: str = "") -> Scenario:
    """Square scenario mirrored about the main diagonal, starting at ``(start, start)``.

    ``goals`` are listed in full; obstacles are mirrored automatically.
    """
    return Scenario(
        GridMap(size, size, frozenset(_mirror(obstacles))),
        (start, start),
        CandidateSet(tuple(map(tuple, goals)), real_index),
        name=name,
    )


def symmetric_fixtures() -> list:
    """Eight 11x11 to 15x15 fixtures mirrored about the diagonal through the start.

    The real goal and its decoy are mirror images, so the diagonal is equally good for
    both at first. The real goal is more than one lateral step off the diagonal, so the
    honest agent's first lateral move already separates them.
    """
    f = []
    f.append(symmetric_scenario(11, 0, [(2, 8), (8, 2)], 0, name="sym11_open"))
    f.append(symmetric_scenario(11, 1, [(9, 3), (3, 9)], 1, name="sym11_far"))
    f.append(symmetric_scenario(11, 0, [(3, 9), (9, 3)], 1,
                                obstacles=[(1, 5), (2, 5)], name="sym11_ledge"))
    f.append(symmetric_scenario(13, 0, [(2, 10), (10, 2)], 0,
                                obstacles=[(5, 8), (6, 8)], name="sym13_open"))
    f.append(symmetric_scenario(13, 1, [(11, 4), (4, 11), (10, 10)], 0, name="sym13_three"))
    f.append(symmetric_scenario(13, 0, [(12, 3), (3, 12)], 1,
                                obstacles=[(4, 2), (5, 2), (9, 7)], name="sym13_pillars"))
    f.append(symmetric_scenario(15, 1, [(3, 12), (12, 3)], 0,
                                obstacles=[(2, 7), (3, 7), (4, 7), (8, 12)], name="sym15_wall"))
    f.append(symmetric_scenario(15, 0, [(13, 4), (4, 13), (12, 12)], 1,
                                obstacles=[(7, 10), (8, 10)], name="sym15_three"))
    return f


def reference_fixture() -> Scenario:
    """11x11 empty map with one real and one mirrored fake goal."""
    return symmetric_fixtures()[0]


def random_suite(n: int = 20, size: int = 15, seed: int = 0, n_goals: int = 2, layouts=LAYOUTS) -> list:
    """``n`` random scenarios cycling through the layout classes."""
    out = []
    for i in range(n):
        layout = layouts[i % len(layouts)]
        grid = generate_map(layout, size, seed * 7919 + i)
        out.append(random_scenario(grid, n_goals, seed * 7919 + i, name=f"{layout}_{size}_{seed}_{i}"))
    return out
