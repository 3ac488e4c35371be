"""Grid and continuous navigation environments with one reward per candidate goal."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np

Cell = Tuple[int, int]
Point = Tuple[float, float]
State = Union[Cell, Point]

SQRT2 = math.sqrt(2.0)
GOAL_REWARD = 100.0

# Action order: up, down, left, right, down-left, up-left, up-right, down-right.
# "up" increases y.
ACTION_NAMES = ("up", "down", "left", "right", "down-left", "up-left", "up-right", "down-right")
MOVES = np.array(
    [(0, 1), (0, -1), (-1, 0), (1, 0), (-1, -1), (-1, 1), (1, 1), (1, -1)], dtype=np.int64
)
MOVE_COSTS = np.array([1.0, 1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2, SQRT2])
N_ACTIONS = len(ACTION_NAMES)
ACTION_INDEX = {name: i for i, name in enumerate(ACTION_NAMES)}


class ContractViolation(ValueError):
    """A precondition of an environment operation does not hold."""


class UnreachableError(ValueError):
    """No path exists between two cells."""


@dataclass(frozen=True)
class GridMap:
    """Occupancy grid. Obstacle cells are unit squares ``[x, x+1] x [y, y+1]``."""

    width: int
    height: int
    obstacles: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ValueError(f"map must be at least 3x3, got {self.width}x{self.height}")
        object.__setattr__(self, "obstacles", frozenset((int(x), int(y)) for x, y in self.obstacles))
        for x, y in self.obstacles:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"obstacle {(x, y)} outside {self.width}x{self.height} map")

    @property
    def free(self) -> np.ndarray:
        """Boolean mask indexed ``[x, y]``; True on free cells."""
        return _free_mask(self)

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and (int(cell[0]), int(cell[1])) not in self.obstacles

    def free_cells(self) -> list:
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.obstacles]


@lru_cache(maxsize=256)
def _free_mask(grid: GridMap) -> np.ndarray:
    mask = np.ones((grid.width, grid.height), dtype=bool)
    for x, y in grid.obstacles:
        mask[x, y] = False
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True)
class CandidateSet:
    goals: tuple
    real_index: int
    priors: tuple = None

    def __post_init__(self):
        goals = tuple(tuple(g) for g in self.goals)
        object.__setattr__(self, "goals", goals)
        k = len(goals)
        if k < 1:
            raise ValueError("candidate set needs at least one goal")
        if not 0 <= self.real_index < k:
            raise ValueError(f"real_index {self.real_index} out of range for {k} goals")
        priors = self.priors
        if priors is None:
            priors = (1.0 / k,) * k
        priors = tuple(float(p) for p in priors)
        if len(priors) != k:
            raise ValueError(f"expected {k} priors, got {len(priors)}")
        if any(p < 0 for p in priors) or abs(sum(priors) - 1.0) > 1e-9:
            raise ValueError(f"priors must be nonnegative and sum to 1, got {priors}")
        object.__setattr__(self, "priors", priors)

    @property
    def k(self) -> int:
        return len(self.goals)

    @property
    def real_goal(self):
        return self.goals[self.real_index]


class StepOutcome(NamedTuple):
    next_state: State
    rewards: np.ndarray
    reached: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class Scenario:
    """A map with a start and candidate goals, in discrete or continuous mode.

    In continuous mode ``start`` and the goals are points in ``[0, width] x [0, height]``.
    """

    map: GridMap
    start: tuple
    candidates: CandidateSet
    mode: str = "discrete"
    goal_radius: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "discrete":
            start = (int(self.start[0]), int(self.start[1]))
            object.__setattr__(self, "start", start)
            cells = [start, *self.candidates.goals]
            for c in cells:
                if not self.map.is_free(c):
                    raise ContractViolation(f"cell {c} is not a free cell of the map")
            if len(set(cells)) != len(cells):
                raise ContractViolation("start and goals must be mutually distinct")
        else:
            start = (float(self.start[0]), float(self.start[1]))
            object.__setattr__(self, "start", start)
            for p in [start, *self.candidates.goals]:
                if point_in_obstacle(self.map, p) or not _point_in_world(self.map, p):
                    raise ContractViolation(f"point {p} is not in free space")
        start_cell = self.start_cell
        for g in self.goal_cells:
            optimal_cost(self.map, start_cell, g)  # raises UnreachableError

    @property
    def k(self) -> int:
        return self.candidates.k

    @property
    def real_goal(self):
        return self.candidates.real_goal

    @property
    def start_cell(self) -> Cell:
        return self.start if self.mode == "discrete" else snap_to_cell(self.map, self.start)

    @property
    def goal_cells(self) -> list:
        if self.mode == "discrete":
            return list(self.candidates.goals)
        return [snap_to_cell(self.map, g) for g in self.candidates.goals]

    def to_continuous(self, goal_radius: float = 1.0) -> "Scenario":
        """Same layout in continuous mode, with start and goals at cell centres."""
        if self.mode == "continuous":
            return self
        centre = lambda c: (c[0] + 0.5, c[1] + 0.5)  # noqa: E731
        cands = CandidateSet(
            tuple(centre(g) for g in self.candidates.goals),
            self.candidates.real_index,
            self.candidates.priors,
        )
        return Scenario(self.map, centre(self.start), cands, "continuous", goal_radius, self.name)

    def with_priors(self, priors: Sequence[float]) -> "Scenario":
        cands = CandidateSet(self.candidates.goals, self.candidates.real_index, tuple(priors))
        return Scenario(self.map, self.start, cands, self.mode, self.goal_radius, self.name)

    def step(self, state, action) -> StepOutcome:
        if self.mode == "discrete":
            return step_discrete(self, state, action)
        return step_continuous(self, state, action)


# ---------------------------------------------------------------------------
# discrete dynamics


def step_discrete(scn: Scenario, s: Cell, a: int) -> StepOutcome:
    """Move one cell; blocked moves leave the state unchanged but still cost the move."""
    grid = scn.map
    x, y = int(s[0]), int(s[1])
    if not grid.is_free((x, y)):
        raise ContractViolation(f"state {s} is outside the map or inside an obstacle")
    a = int(a)
    if not 0 <= a < N_ACTIONS:
        raise ContractViolation(f"invalid discrete action {a}")
    dx, dy = MOVES[a]
    nxt = (x + int(dx), y + int(dy))
    if not grid.is_free(nxt):
        nxt = (x, y)
    cost = MOVE_COSTS[a]
    goals = scn.candidates.goals
    reached = np.array([nxt == g for g in goals], dtype=bool)
    rewards = np.where(reached, GOAL_REWARD - cost, -cost)
    return StepOutcome(nxt, rewards, reached, bool(reached[scn.candidates.real_index]))


def transition_table(grid: GridMap) -> Tuple[np.ndarray, np.ndarray]:
    """Successor coordinates for every ``(x, y, a)``: arrays ``nx, ny`` of shape (W, H, 8)."""
    return _transition_table(grid)


@lru_cache(maxsize=256)
def _transition_table(grid: GridMap):
    W, H = grid.width, grid.height
    xs, ys = np.meshgrid(np.arange(W), np.arange(H), indexing="ij")
    nx = xs[..., None] + MOVES[:, 0]
    ny = ys[..., None] + MOVES[:, 1]
    inside = (nx >= 0) & (nx < W) & (ny >= 0) & (ny < H)
    free = grid.free
    ok = inside.copy()
    ok[inside] = free[nx[inside], ny[inside]]
    nx = np.where(ok, nx, xs[..., None])
    ny = np.where(ok, ny, ys[..., None])
    nx.setflags(write=False)
    ny.setflags(write=False)
    return nx, ny


# ---------------------------------------------------------------------------
# shortest paths


def distance_field(grid: GridMap, target: Cell) -> np.ndarray:
    """Least 8-connected cost from every cell to ``target`` (inf where unreachable).

    Moves are symmetric, so this is also the cost from ``target`` to every cell.
    """
    return _distance_field(grid, (int(target[0]), int(target[1])))


@lru_cache(maxsize=1024)
def _distance_field(grid: GridMap, target: Cell) -> np.ndarray:
    if not grid.is_free(target):
        raise ContractViolation(f"cell {target} is not free")
    W, H = grid.width, grid.height
    free = grid.free
    dist = np.full((W, H), np.inf)
    dist[target] = 0.0
    heap = [(0.0, target)]
    moves = [(int(dx), int(dy), float(c)) for (dx, dy), c in zip(MOVES, MOVE_COSTS)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if d > dist[x, y]:
            continue
        for dx, dy, c in moves:
            nx, ny = x + dx, y + dy
            if 0 <= nx < W and 0 <= ny < H and free[nx, ny]:
                nd = d + c
                if nd < dist[nx, ny]:
                    dist[nx, ny] = nd
                    heapq.heappush(heap, (nd, (nx, ny)))
    dist.setflags(write=False)
    return dist


def optimal_cost(grid: GridMap, start: Cell, goal: Cell) -> float:
    """Least-cost 8-connected path cost (lateral 1, diagonal sqrt 2)."""
    if not grid.is_free(start) or not grid.is_free(goal):
        raise ContractViolation(f"both cells must be free: {start}, {goal}")
    d = distance_field(grid, goal)[int(start[0]), int(start[1])]
    if not np.isfinite(d):
        raise UnreachableError(f"{goal} is unreachable from {start}")
    return float(d)


def octile(a, b) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (SQRT2 - 1.0) * min(dx, dy) + max(dx, dy)


# ---------------------------------------------------------------------------
# continuous dynamics

CONTACT_EPS = 1e-6


def _point_in_world(grid: GridMap, p) -> bool:
    return 0.0 <= p[0] <= grid.width and 0.0 <= p[1] <= grid.height


def point_in_obstacle(grid: GridMap, p) -> bool:
    """True if ``p`` lies strictly inside an obstacle square."""
    x, y = float(p[0]), float(p[1])
    cx, cy = math.floor(x), math.floor(y)
    for ox in (cx - 1, cx):
        for oy in (cy - 1, cy):
            if (ox, oy) in grid.obstacles and ox < x < ox + 1 and oy < y < oy + 1:
                return True
    return False


def _segment_entry(p, d, lo, hi):
    """Parameter in [0, 1] at which ``p + t d`` enters the open box ``(lo, hi)``, or None."""
    t0, t1 = 0.0, 1.0
    for i in range(2):
        if d[i] == 0.0:
            if not lo[i] < p[i] < hi[i]:
                return None
            continue
        ta = (lo[i] - p[i]) / d[i]
        tb = (hi[i] - p[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 >= t1:
            return None
    return t0


def step_continuous(scn: Scenario, s: Point, a) -> StepOutcome:
    """Euler step ``s + v (cos theta, sin theta)`` truncated at walls and map edges."""
    grid = scn.map
    p = (float(s[0]), float(s[1]))
    if point_in_obstacle(grid, p) or not _point_in_world(grid, p):
        raise ContractViolation(f"state {s} is not in free space")
    theta = min(max(float(a[0]), 0.0), 2.0 * math.pi)
    v = min(max(float(a[1]), -1.0), 1.0)
    d = (v * math.cos(theta), v * math.sin(theta))
    length = math.hypot(*d)
    t_hit = 1.0
    if length > 0.0:
        # world boundary
        for i, size in enumerate((grid.width, grid.height)):
            if d[i] > 0:
                t_hit = min(t_hit, (size - p[i]) / d[i])
            elif d[i] < 0:
                t_hit = min(t_hit, -p[i] / d[i])
        # obstacles whose squares the segment's bounding box touches
        x_lo, x_hi = math.floor(min(p[0], p[0] + d[0])), math.floor(max(p[0], p[0] + d[0]))
        y_lo, y_hi = math.floor(min(p[1], p[1] + d[1])), math.floor(max(p[1], p[1] + d[1]))
        for ox in range(x_lo - 1, x_hi + 1):
            for oy in range(y_lo - 1, y_hi + 1):
                if (ox, oy) in grid.obstacles:
                    t = _segment_entry(p, d, (ox, oy), (ox + 1, oy + 1))
                    if t is not None:
                        t_hit = min(t_hit, t)
        if t_hit < 1.0:
            t_hit = max(0.0, t_hit - CONTACT_EPS / length)
    nxt = (p[0] + t_hit * d[0], p[1] + t_hit * d[1])
    nxt = (min(max(nxt[0], 0.0), float(grid.width)), min(max(nxt[1], 0.0), float(grid.height)))
    goals = np.asarray(scn.candidates.goals, dtype=float)
    dist = np.hypot(goals[:, 0] - nxt[0], goals[:, 1] - nxt[1])
    reached = dist <= scn.goal_radius
    return StepOutcome(nxt, -dist, reached, bool(reached[scn.candidates.real_index]))


def snap_to_cell(grid: GridMap, p) -> Cell:
    """Nearest free cell to a point; ties go to the lower ``(x, y)``."""
    x, y = float(p[0]), float(p[1])
    cx = min(max(int(math.floor(x)), 0), grid.width - 1)
    cy = min(max(int(math.floor(y)), 0), grid.height - 1)
    if grid.is_free((cx, cy)):
        return (cx, cy)
    best, best_d = None, math.inf
    for c in grid.free_cells():
        dd = (c[0] + 0.5 - x) ** 2 + (c[1] + 0.5 - y) ** 2
        if dd < best_d - 1e-12 or (abs(dd - best_d) <= 1e-12 and c < best):
            best, best_d = c, dd
    return best
