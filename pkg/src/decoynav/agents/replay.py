"""Ring replay buffer and the shared-push helper."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """FIFO ring of transitions; ``sample`` draws uniformly with replacement."""

    def __init__(self, capacity: int = 10**6, action_dim: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.action_dim = action_dim
        self._n = 0
        self._next = 0
        self._alloc = 0
        self._s = self._a = self._s2 = self._r = self._t = None

    def __len__(self):
        return self._n

    def _grow(self):
        new = min(self.capacity, max(64, 2 * self._alloc))
        a_shape = (new,) if self.action_dim == 0 else (new, self.action_dim)
        a_dtype = np.int64 if self.action_dim == 0 else float

        def grown(old, shape, dtype):
            arr = np.zeros(shape, dtype=dtype)
            if old is not None:
                arr[: self._alloc] = old
            return arr

        self._s = grown(self._s, (new, 2), float)
        self._a = grown(self._a, a_shape, a_dtype)
        self._s2 = grown(self._s2, (new, 2), float)
        self._r = grown(self._r, (new,), float)
        self._t = grown(self._t, (new,), bool)
        self._alloc = new

    def push(self, s, a, s_next, r, terminal) -> None:
        if self._n == self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._next
        self._s[i] = s
        self._a[i] = a
        self._s2[i] = s_next
        self._r[i] = r
        self._t[i] = terminal
        self._next = (i + 1) % self.capacity
        self._n = min(self._n + 1, self.capacity)

    def contents(self) -> Batch:
        """All stored transitions, oldest first."""
        if self._n < self.capacity:
            idx = np.arange(self._n)
        else:
            idx = (np.arange(self._n) + self._next) % self.capacity
        return self._take(idx)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self._n == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self._take(rng.integers(0, self._n, size=n))

    def _take(self, idx) -> Batch:
        if self._s is None:
            z = np.zeros((0, 2))
            a = np.zeros((0,) if self.action_dim == 0 else (0, self.action_dim))
            return Batch(z, a, z, np.zeros(0), np.zeros(0, dtype=bool))
        return Batch(self._s[idx], self._a[idx], self._s2[idx], self._r[idx], self._t[idx])


def buffer_push_all(buffers, s, a, s_next, rewards, terminal: bool = False) -> None:
    """Store one environment step in every candidate's buffer.

    Buffer ``i`` gets reward ``rewards[i]``; state, action, successor and the episode's
    terminal flag are shared, so one interaction becomes ``k`` learning experiences.
    Reaching a candidate's own goal is absorbing for that candidate's learner only,
    which the learner detects from ``s_next`` (see ``absorbing``).
    """
    if len(rewards) != len(buffers):
        raise ValueError(f"expected {len(buffers)} rewards, got {len(rewards)}")
    for buf, r in zip(buffers, rewards):
        buf.push(s, a, s_next, r, bool(terminal))


def absorbing(batch: Batch, goal, radius: float | None = None) -> np.ndarray:
    """Terminal mask for one candidate: the stored flag or a successor at its goal.

    Cells must match exactly; with ``radius`` the successor must lie within it.
    """
    s2 = np.asarray(batch.s_next, dtype=float).reshape(-1, 2)
    g = np.asarray(goal, dtype=float)
    if radius is None:
        at_goal = np.all(s2 == g, axis=1)
    else:
        at_goal = np.hypot(s2[:, 0] - g[0], s2[:, 1] - g[1]) <= radius
    return np.asarray(batch.terminal, dtype=bool) | at_goal
