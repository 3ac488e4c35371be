"""Trajectory records and the deception / cost / exploration measures computed from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import GridMap, Scenario, optimal_cost, snap_to_cell

UNREACHED = math.inf


@dataclass
class TrajectoryRecord:
    """One episode. Entry ``t`` is the agent at ``states[t]`` after ``t`` moves.

    ``posteriors[t]`` is the observer's belief after seeing ``states[:t+1]`` (so row 0
    is the prior), ``cum_cost[t]`` the cost paid to get there. ``actions[t]`` and
    ``rewards[t]`` describe the move from entry ``t`` to ``t+1``.
    """

    states: list
    actions: list
    rewards: np.ndarray
    posteriors: np.ndarray
    cum_cost: np.ndarray
    real_index: int
    reached_real: bool
    scenario_id: str = ""
    agent: str = ""
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def total_cost(self) -> float:
        return float(self.cum_cost[-1])

    @property
    def real_probs(self) -> np.ndarray:
        return self.posteriors[:, self.real_index]


@dataclass
class MetricRow:
    scenario_id: str
    agent: str
    seed: int
    mean_real_prob: float
    percentile_real_prob: float
    cost_ratio: float
    ldp_index: int
    steps_after_ldp: int
    reached_real: bool


def rg_prob_curve(rec: TrajectoryRecord, percentages) -> list:
    """Real-goal probability at given percentages of path completion (by cost).

    A step function: the value at ``p`` is the posterior at the last entry whose
    cumulative cost is at most ``p`` percent of the total.
    """
    if len(rec) == 0:
        raise ValueError("empty trajectory record")
    total = rec.total_cost
    out = []
    for pct in percentages:
        if not 0.0 <= pct <= 100.0:
            raise ValueError(f"percentage {pct} outside [0, 100]")
        limit = pct / 100.0 * total
        j = int(np.searchsorted(rec.cum_cost, limit + 1e-9 * max(1.0, total), side="right")) - 1
        out.append((pct, float(rec.real_probs[max(j, 0)])))
    return out


def compute_ldp(rec: TrajectoryRecord):
    """Last deceptive point: last entry where the real goal is not the strict argmax.

    Returns ``(ldp_index, steps_after)``; ``ldp_index`` is -1 when the real goal leads
    from the first entry.
    """
    if len(rec) == 0:
        raise ValueError("empty trajectory record")
    P = rec.posteriors
    real = P[:, rec.real_index]
    others = np.delete(P, rec.real_index, axis=1)
    leads = real > others.max(axis=1) if others.shape[1] else np.ones(len(P), dtype=bool)
    not_leading = np.flatnonzero(~leads)
    ldp = int(not_leading[-1]) if len(not_leading) else -1
    return ldp, len(P) - 1 - ldp


def path_cost_ratio(rec: TrajectoryRecord, scn: Scenario) -> float:
    """Total cost over the optimal honest cost; ``inf`` when the real goal was not reached."""
    if not rec.reached_real:
        return UNREACHED
    best = optimal_cost(scn.map, scn.start_cell, scn.goal_cells[scn.candidates.real_index])
    if best <= 0:
        raise ValueError("start coincides with the real goal")
    return rec.total_cost / best


def metric_row(rec: TrajectoryRecord, scn: Scenario, percentages=tuple(range(0, 101, 10))) -> MetricRow:
    ldp, after = compute_ldp(rec)
    curve = rg_prob_curve(rec, percentages)
    return MetricRow(
        scenario_id=rec.scenario_id,
        agent=rec.agent,
        seed=rec.seed,
        mean_real_prob=float(rec.real_probs.mean()),
        percentile_real_prob=float(np.mean([p for _, p in curve])),
        cost_ratio=path_cost_ratio(rec, scn),
        ldp_index=ldp,
        steps_after_ldp=after,
        reached_real=rec.reached_real,
    )


def summarize(rows) -> dict:
    """Means over goal-reaching rows; failures reported as a separate rate."""
    rows = list(rows)
    ok = [r for r in rows if r.reached_real]
    mean = lambda xs: float(np.mean(xs)) if xs else math.nan  # noqa: E731
    return {
        "n": len(rows),
        "failure_rate": 1.0 - len(ok) / len(rows) if rows else math.nan,
        "mean_real_prob": mean([r.mean_real_prob for r in ok]),
        "percentile_real_prob": mean([r.percentile_real_prob for r in ok]),
        "cost_ratio": mean([r.cost_ratio for r in ok]),
        "steps_after_ldp": mean([r.steps_after_ldp for r in ok]),
    }


# ---------------------------------------------------------------------------
# state visitation


def visitation_heatmap(states, grid: GridMap) -> np.ndarray:
    """Visit counts per cell as a ``(height, width)`` matrix; points are binned to unit cells."""
    counts = np.zeros((grid.height, grid.width), dtype=np.int64)
    for s in states:
        x, y = s
        if isinstance(x, (int, np.integer)):
            cx, cy = int(x), int(y)
        else:
            cx = min(max(int(math.floor(x)), 0), grid.width - 1)
            cy = min(max(int(math.floor(y)), 0), grid.height - 1)
        counts[cy, cx] += 1
    return counts


def path_cells(states, grid: GridMap) -> set:
    return {s if isinstance(s[0], (int, np.integer)) else snap_to_cell(grid, s) for s in states}


def top_cells(heatmap: np.ndarray, fraction: float = 0.1) -> set:
    """Cells in the top ``fraction`` of visited cells by count (ties at the cut included)."""
    ys, xs = np.nonzero(heatmap)
    if len(xs) == 0:
        return set()
    counts = heatmap[ys, xs]
    n = max(1, int(math.ceil(fraction * len(counts))))
    cut = np.sort(counts)[::-1][n - 1]
    return {(int(x), int(y)) for x, y, c in zip(xs, ys, counts) if c >= cut}


def overlap_coefficient(a: set, b: set) -> float:
    """``|a & b| / min(|a|, |b|)``; 0 when either set is empty."""
    if not a or not b:
        return 0.0
    return len(a & b) / min(len(a), len(b))


def exploration_overlap(final_path_states, heatmap: np.ndarray, grid: GridMap, fraction: float = 0.1) -> float:
    return overlap_coefficient(path_cells(final_path_states, grid), top_cells(heatmap, fraction))
