"""ASCII map files and procedural map generation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .env import CandidateSet, GridMap, Scenario

MAP_HEADER = "# decoy-nav map v1"
LAYOUTS = ("empty", "large_obstacles", "small_obstacles", "islands", "maze")
_ALPHABET = set(".#SGF")


class MapParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def load_map(text: str, name: str = "") -> Scenario:
    """Parse an ASCII map into a discrete scenario.

    Row ``y`` of the grid is text line ``y`` (after the optional header). ``S`` is the
    start, ``G`` the real goal and ``F`` fake goals. Goals are ordered row-major and
    priors are uniform.
    """
    lines = text.split("\n")
    offset = 1
    if lines and lines[0] == MAP_HEADER:
        lines = lines[1:]
        offset = 2
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise MapParseError("empty map", offset, 1)
    width = len(lines[0])
    start, real, goals, obstacles = None, None, [], set()
    for y, row in enumerate(lines):
        if len(row) != width:
            raise MapParseError(f"ragged row: expected {width} columns, got {len(row)}", y + offset, 1)
        for x, ch in enumerate(row):
            if ch not in _ALPHABET:
                raise MapParseError(f"unknown character {ch!r}", y + offset, x + 1)
            if ch == "#":
                obstacles.add((x, y))
            elif ch == "S":
                if start is not None:
                    raise MapParseError("duplicate 'S'", y + offset, x + 1)
                start = (x, y)
            elif ch in "GF":
                if ch == "G":
                    if real is not None:
                        raise MapParseError("duplicate 'G'", y + offset, x + 1)
                    real = len(goals)
                goals.append((x, y))
    last = len(lines) + offset - 1
    if start is None:
        raise MapParseError("missing 'S'", last, 1)
    if real is None:
        raise MapParseError("missing 'G'", last, 1)
    if len(goals) < 2:
        raise MapParseError("need at least one 'F'", last, 1)
    grid = GridMap(width, len(lines), frozenset(obstacles))
    return Scenario(grid, start, CandidateSet(tuple(goals), real), name=name)


def save_map(scn: Scenario) -> str:
    grid = scn.map
    rows = [["#" if (x, y) in grid.obstacles else "." for x in range(grid.width)] for y in range(grid.height)]
    sx, sy = scn.start_cell
    rows[sy][sx] = "S"
    for i, (gx, gy) in enumerate(scn.goal_cells):
        rows[gy][gx] = "G" if i == scn.candidates.real_index else "F"
    return "\n".join([MAP_HEADER, *("".join(r) for r in rows)]) + "\n"


def read_map_file(path, name: str = "") -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_map(fh.read(), name=name or str(path))


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class LayoutParams:
    """Obstacle counts and sizes, as fractions of the map side where noted."""

    large_count: tuple = (3, 5)
    large_side: tuple = (0.12, 0.25)
    small_density: float = 0.10
    small_side: tuple = (1, 2)
    island_count: tuple = (4, 7)
    island_radius: tuple = (0.06, 0.12)
    maze_braid: float = 0.05


def _connected(free: np.ndarray) -> bool:
    _, n = ndimage.label(free, structure=np.ones((3, 3), dtype=int))
    return n == 1


def generate_map(layout: str, size: int, seed: int, params: LayoutParams | None = None) -> GridMap:
    """Deterministic map of a given layout class whose free cells form one component."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if size < 9:
        raise ValueError("size must be at least 9")
    params = params or LayoutParams()
    rng = np.random.default_rng(seed)
    build = {
        "empty": lambda: np.zeros((size, size), dtype=bool),
        "large_obstacles": lambda: _rectangles(rng, size, params),
        "small_obstacles": lambda: _small_blocks(rng, size, params),
        "islands": lambda: _islands(rng, size, params),
        "maze": lambda: _maze(rng, size, params),
    }[layout]
    for _ in range(1000):
        blocked = build()
        if blocked.all():
            continue
        if _connected(~blocked):
            xs, ys = np.nonzero(blocked)
            return GridMap(size, size, frozenset(zip(xs.tolist(), ys.tolist())))
    raise RuntimeError(f"could not generate a connected {layout} map after 1000 attempts")


def _rectangles(rng, size, p):
    blocked = np.zeros((size, size), dtype=bool)
    for _ in range(rng.integers(p.large_count[0], p.large_count[1] + 1)):
        w, h = (max(2, int(round(size * rng.uniform(*p.large_side)))) for _ in range(2))
        x, y = rng.integers(1, size - w), rng.integers(1, size - h)
        blocked[x : x + w, y : y + h] = True
    return blocked


def _small_blocks(rng, size, p):
    blocked = np.zeros((size, size), dtype=bool)
    target = p.small_density * size * size
    while blocked.sum() < target:
        s = int(rng.integers(p.small_side[0], p.small_side[1] + 1))
        x, y = rng.integers(0, size - s + 1), rng.integers(0, size - s + 1)
        blocked[x : x + s, y : y + s] = True
    return blocked


def _islands(rng, size, p):
    xs, ys = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    blocked = np.zeros((size, size), dtype=bool)
    for _ in range(rng.integers(p.island_count[0], p.island_count[1] + 1)):
        r = max(1.5, size * rng.uniform(*p.island_radius))
        cx, cy = rng.uniform(r, size - r, size=2)
        # wobbly blob: ellipse with random aspect and noisy edge
        ax, ay = rng.uniform(0.7, 1.3, size=2)
        noise = rng.uniform(-0.25, 0.25, size=(size, size))
        blocked |= ((xs - cx) / (r * ax)) ** 2 + ((ys - cy) / (r * ay)) ** 2 + noise <= 1.0
    return blocked


def _maze(rng, size, p):
    # recursive backtracker on odd coordinates; walls everywhere else
    blocked = np.ones((size, size), dtype=bool)
    n = (size - 1) // 2
    visited = np.zeros((n, n), dtype=bool)
    stack = [(0, 0)]
    visited[0, 0] = True
    blocked[1, 1] = False
    while stack:
        cx, cy = stack[-1]
        nbrs = [(cx + dx, cy + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= cx + dx < n and 0 <= cy + dy < n and not visited[cx + dx, cy + dy]]
        if not nbrs:
            stack.pop()
            continue
        nx, ny = nbrs[rng.integers(len(nbrs))]
        visited[nx, ny] = True
        blocked[2 * nx + 1, 2 * ny + 1] = False
        blocked[cx + nx + 1, cy + ny + 1] = False
        stack.append((nx, ny))
    # knock out a few interior walls so there are loops
    walls = [(x, y) for x in range(1, size - 1) for y in range(1, size - 1)
             if blocked[x, y] and (x + y) % 2 == 1 and x < 2 * n and y < 2 * n]
    for i in rng.permutation(len(walls))[: int(p.maze_braid * len(walls))]:
        blocked[walls[i]] = False
    # an even size leaves a spare last row/column: keep it open, with a door into the maze
    if size % 2 == 0:
        blocked[size - 1, :] = False
        blocked[:, size - 1] = False
        blocked[2 * n, 1] = False
        blocked[1, 2 * n] = False
    return blocked


def random_scenario(grid: GridMap, n_goals: int, seed: int, min_separation: float = 3.0, name: str = "") -> Scenario:
    """Random start and goal placement on a map; the real goal is goal 0."""
    rng = np.random.default_rng(seed)
    cells = grid.free_cells()
    for _ in range(1000):
        idx = rng.choice(len(cells), size=n_goals + 1, replace=False)
        pts = [cells[i] for i in idx]
        if all(max(abs(a[0] - b[0]), abs(a[1] - b[1])) >= min_separation
               for i, a in enumerate(pts) for b in pts[i + 1:]):
            return Scenario(grid, pts[0], CandidateSet(tuple(pts[1:]), 0), name=name)
    raise RuntimeError("could not place start and goals")
