"""Exact value iteration and tabular Q-learning subagents for the grid world."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import GOAL_REWARD, MOVE_COSTS, N_ACTIONS, SQRT2, Scenario, distance_field, transition_table
from .replay import Batch, ReplayBuffer, absorbing


class UnsupportedModeError(ValueError):
    pass


def greedy_action(q_row, atol: float = 1e-9) -> int:
    """Highest-valued action; values within ``atol`` of the best tie, lowest index wins."""
    q_row = np.asarray(q_row)
    return int(np.flatnonzero(q_row >= q_row.max() - atol)[0])


def _floor_value(grid, gamma):
    if gamma < 1.0:
        return -SQRT2 / (1.0 - gamma)
    return -SQRT2 * grid.width * grid.height - GOAL_REWARD


def value_iteration(scn: Scenario, candidate: int, gamma: float = 1.0, tol: float = 1e-10,
                    max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal Q-table ``Q[x, y, a]`` for one candidate's reward function.

    ``gamma = 1`` is allowed: every non-goal step has strictly negative reward and the
    goal is reachable, so the undiscounted problem has a unique finite fixed point.
    Cells that cannot reach the goal get a constant floor value.
    """
    if scn.mode != "discrete":
        raise UnsupportedModeError("value iteration needs the discrete environment")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = scn.map
    gx, gy = scn.candidates.goals[candidate]
    nx, ny = transition_table(grid)
    term = (nx == gx) & (ny == gy)
    reward = np.where(term, GOAL_REWARD - MOVE_COSTS, -MOVE_COSTS)
    live = grid.free & np.isfinite(distance_field(grid, (gx, gy)))
    floor = _floor_value(grid, gamma)
    Q = np.zeros((grid.width, grid.height, N_ACTIONS))
    Q[~live] = floor
    Q[~grid.free] = 0.0
    for _ in range(max_iter):
        V = Q.max(axis=2)
        Qn = reward + gamma * np.where(term, 0.0, V[nx, ny])
        Qn[~live] = floor
        Qn[~grid.free] = 0.0
        diff = np.abs(Qn - Q).max()
        Q = Qn
        if diff <= tol:
            return Q
    raise RuntimeError("value iteration did not converge")


def bellman_residual(Q: np.ndarray, scn: Scenario, candidate: int, gamma: float = 1.0) -> float:
    """Sup-norm Bellman optimality residual over free cells that can reach the goal."""
    grid = scn.map
    gx, gy = scn.candidates.goals[candidate]
    nx, ny = transition_table(grid)
    term = (nx == gx) & (ny == gy)
    reward = np.where(term, GOAL_REWARD - MOVE_COSTS, -MOVE_COSTS)
    target = reward + gamma * np.where(term, 0.0, Q.max(axis=2)[nx, ny])
    live = grid.free & np.isfinite(distance_field(grid, (gx, gy)))
    return float(np.abs(target - Q)[live].max())


def tabular_update(q: np.ndarray, t, lr: float, gamma: float) -> np.ndarray:
    """One Q-learning step on transition ``t = (s, a, s_next, r, terminal)``, in place."""
    s, a, s2, r, terminal = t
    sx, sy = int(s[0]), int(s[1])
    bootstrap = 0.0 if terminal else gamma * q[int(s2[0]), int(s2[1])].max()
    q[sx, sy, int(a)] += lr * (r + bootstrap - q[sx, sy, int(a)])
    return q


@dataclass(frozen=True)
class TabularConfig:
    lr: float = 1.0
    gamma: float = 1.0
    alpha: float = 0.2  # temperature of the sampling policy softmax(Q / alpha)
    minibatch: int = 100
    capacity: int = 10**6
    q_init: float = GOAL_REWARD  # optimistic: no return can exceed the goal reward


class _TableSubagent:
    mode = "discrete"

    def __init__(self, scn: Scenario, index: int):
        self.index = index
        self.shape = (scn.map.width, scn.map.height)
        self.goal = scn.candidates.goals[index]
        self.Q = np.zeros((*self.shape, N_ACTIONS))

    def q_row(self, s) -> np.ndarray:
        return self.Q[int(s[0]), int(s[1])]

    def qvalue(self, s, a) -> float:
        return float(self.Q[int(s[0]), int(s[1]), int(a)])

    def act(self, s) -> int:
        return greedy_action(self.q_row(s))

    def state_dict(self) -> dict:
        return {"Q": self.Q}

    def load_state_dict(self, state: dict) -> None:
        self.Q = np.array(state["Q"], dtype=float).reshape(*self.shape, N_ACTIONS)


class VISubagent(_TableSubagent):
    """Planner subagent: the exact optimal Q-table, deterministic greedy policy."""

    kind = "vi"

    def __init__(self, scn: Scenario, index: int, gamma: float = 1.0, tol: float = 1e-10, solve: bool = True):
        super().__init__(scn, index)
        self.gamma = gamma
        self.buffer = ReplayBuffer(1)
        if solve:
            self.Q = value_iteration(scn, index, gamma, tol)

    def sample(self, s, rng=None) -> int:
        return self.act(s)

    def learn(self, batch: Batch) -> dict:
        return {}

    def update(self, n_updates: int, rng) -> dict:
        return {}


class TabularSubagent(_TableSubagent):
    """Off-policy Q-learner over a Q-table, sampling actions from ``softmax(Q / alpha)``."""

    kind = "tabular"

    def __init__(self, scn: Scenario, index: int, cfg: TabularConfig = TabularConfig()):
        super().__init__(scn, index)
        self.cfg = cfg
        self.Q[scn.map.free] = cfg.q_init
        self.buffer = ReplayBuffer(cfg.capacity)

    def policy(self, s) -> np.ndarray:
        z = self.q_row(s) / self.cfg.alpha
        w = np.exp(z - z.max())
        return w / w.sum()

    def sample(self, s, rng) -> int:
        c = np.cumsum(self.policy(s))
        return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), N_ACTIONS - 1)

    def learn(self, batch: Batch) -> dict:
        """Synchronous Q-learning step over a minibatch.

        Targets come from the table before the step; repeated ``(s, a)`` pairs in the
        batch move toward their mean target (identical targets in a deterministic world).
        """
        sx = batch.s[:, 0].astype(int)
        sy = batch.s[:, 1].astype(int)
        a = batch.a.astype(int)
        nx = batch.s_next[:, 0].astype(int)
        ny = batch.s_next[:, 1].astype(int)
        g = self.cfg.gamma
        target = batch.r + np.where(absorbing(batch, self.goal), 0.0, g * self.Q[nx, ny].max(axis=1))
        flat = np.ravel_multi_index((sx, sy, a), self.Q.shape)
        uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
        mean_target = np.bincount(inv, weights=target) / counts
        q = self.Q.reshape(-1)
        td = mean_target - q[uniq]
        q[uniq] += self.cfg.lr * td
        return {"td_error": float(np.abs(td).mean())}

    def update(self, n_updates: int, rng) -> dict:
        diag = {}
        if len(self.buffer) == 0:
            return diag
        for _ in range(n_updates):
            diag = self.learn(self.buffer.sample(self.cfg.minibatch, rng))
        return diag
