"""The pirate: a cost-based goal recognizer driving a shortest-path pursuer."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .env import MOVE_COSTS, MOVES, N_ACTIONS, Scenario, distance_field, step_continuous, step_discrete
from .observer import CostBasedRecognizer

log = logging.getLogger(__name__)

WAIT = -1
CAPTURE_RULES = ("goal", "colocation")


@dataclass
class PursuitState:
    agent: tuple
    pirate: tuple
    t: int = 0
    trajectory: list = field(default_factory=list)
    posterior: np.ndarray = None


@dataclass
class PursuitResult:
    captured: bool
    capture_step: int | None
    agent_path_cost: float
    target_history: list
    agent_reached: bool
    steps: int
    agent_actions: list = field(default_factory=list)
    pirate_actions: list = field(default_factory=list)
    pirate_path: list = field(default_factory=list)
    agent_path: list = field(default_factory=list)
    events: list = field(default_factory=list)


def _at_goal(scn: Scenario, p, goal) -> bool:
    if scn.mode == "discrete":
        return tuple(p) == tuple(goal)
    return math.hypot(p[0] - goal[0], p[1] - goal[1]) <= scn.goal_radius


def first_move(scn: Scenario, pos, target):
    """First action on a least-cost path from ``pos`` to ``target`` (``WAIT`` if there).

    Discrete: the lowest-index move with ``cost + d(next) == d(pos)``. Continuous: a unit
    step on the straight line to the target, shortened to land on it when closer.
    """
    if scn.mode == "discrete":
        if tuple(pos) == tuple(target):
            return WAIT
        dist = distance_field(scn.map, tuple(target))
        here = dist[pos]
        if not np.isfinite(here):
            return None
        for a in range(N_ACTIONS):
            nxt = (pos[0] + MOVES[a, 0], pos[1] + MOVES[a, 1])
            if scn.map.is_free(nxt) and abs(MOVE_COSTS[a] + dist[nxt] - here) <= 1e-9:
                return a
        return None
    dx, dy = target[0] - pos[0], target[1] - pos[1]
    d = math.hypot(dx, dy)
    if d <= 1e-12:
        return WAIT
    theta = math.atan2(dy, dx) % (2 * math.pi)
    return (theta, min(1.0, d))


def pirate_step(ps: PursuitState, scn: Scenario, recognizer: CostBasedRecognizer | None = None):
    """Pirate's action given everything it has seen of the agent.

    Returns ``(action, target_index)``. The target is the most likely goal under the
    cost-based posterior (lowest index on ties); the pirate waits when it is on the
    target or cannot reach it.
    """
    if recognizer is None:
        recognizer = CostBasedRecognizer().fit(scn)
        post = recognizer.trace(ps.trajectory)[-1] if ps.trajectory else recognizer.posterior()
    else:
        post = recognizer.posterior()
    ps.posterior = post
    target = int(np.argmax(post))
    goal = scn.candidates.goals[target]
    a = first_move(scn, ps.pirate, goal)
    if a is None:
        log.info("pirate cannot reach goal %d from %s; waiting", target, ps.pirate)
        a = WAIT
    return a, target


def _move(scn: Scenario, pos, a):
    if a == WAIT:
        return pos
    if scn.mode == "discrete":
        return step_discrete(scn, pos, a).next_state
    return step_continuous(scn, pos, a).next_state


def _agent_cost(scn, s, s2, a):
    if scn.mode == "discrete":
        return float(MOVE_COSTS[int(a)])
    return float(math.hypot(s2[0] - s[0], s2[1] - s[1]))


def _close(scn, p, q) -> bool:
    if scn.mode == "discrete":
        return tuple(p) == tuple(q)
    return math.hypot(p[0] - q[0], p[1] - q[1]) <= scn.goal_radius


def run_pursuit(agent, scn: Scenario, pirate_start, horizon: int = 4000, capture: str = "goal") -> PursuitResult:
    """Play one pursuit game.

    ``agent`` is a controller with ``reset``/``act`` or a fixed sequence of actions. Both
    players move once per timestep, the pirate choosing from the trajectory observed so
    far. The pirate captures when it is at the real goal no later than the agent; when
    the agent never arrives, capture means the pirate got there at all. ``capture =
    "colocation"`` also counts meeting the agent anywhere before its arrival.
    """
    if capture not in CAPTURE_RULES:
        raise ValueError(f"capture must be one of {CAPTURE_RULES}")
    scripted = not hasattr(agent, "act")
    if not scripted:
        agent.reset()
    real = scn.candidates.real_goal
    recog = CostBasedRecognizer().fit(scn)
    recog.observe(scn.start)
    ps = PursuitState(scn.start, tuple(pirate_start), 0, [scn.start])
    res = PursuitResult(False, None, 0.0, [], False, 0, agent_path=[scn.start], pirate_path=[ps.pirate])
    pirate_arrival = 0 if _at_goal(scn, ps.pirate, real) else None
    agent_arrival = None
    met = None
    for t in range(1, horizon + 1):
        pa, target = pirate_step(ps, scn, recog)
        res.target_history.append(target)
        if pa == WAIT and not _at_goal(scn, ps.pirate, scn.candidates.goals[target]):
            res.events.append(f"pirate_blocked@{t}")
        if scripted:
            if t > len(agent):
                break
            a = agent[t - 1]
        else:
            a = agent.act(ps.agent)
        out = scn.step(ps.agent, a)
        res.agent_path_cost += _agent_cost(scn, ps.agent, out.next_state, a)
        ps.agent = out.next_state
        ps.pirate = _move(scn, ps.pirate, pa)
        ps.t = t
        ps.trajectory.append(ps.agent)
        recog.observe(ps.agent)
        res.agent_actions.append(a)
        res.pirate_actions.append(pa)
        res.agent_path.append(ps.agent)
        res.pirate_path.append(ps.pirate)
        if pirate_arrival is None and _at_goal(scn, ps.pirate, real):
            pirate_arrival = t
        if met is None and _close(scn, ps.pirate, ps.agent):
            met = t
        if out.terminal:
            agent_arrival = t
            break
    res.steps = ps.t
    res.agent_reached = agent_arrival is not None
    if res.agent_reached:
        res.captured = pirate_arrival is not None and pirate_arrival <= agent_arrival
    else:
        res.captured = pirate_arrival is not None
        res.events.append("agent_never_arrived")
        log.info("agent did not reach the real goal within %d steps", horizon)
    if res.captured:
        res.capture_step = pirate_arrival
    if capture == "colocation" and met is not None and (agent_arrival is None or met <= agent_arrival):
        if not res.captured or met < res.capture_step:
            res.captured, res.capture_step = True, met
    return res


def random_placement(scn: Scenario, rng):
    """Uniform free cell (cell centre in continuous mode) other than the agent's start."""
    cells = [c for c in scn.map.free_cells() if c != scn.start_cell]
    c = cells[int(rng.integers(len(cells)))]
    return c if scn.mode == "discrete" else (c[0] + 0.5, c[1] + 0.5)


def pursuit_batch(scn: Scenario, make_agent, placements: int = 10, seed: int = 0, horizon: int = 4000,
                  agent_kind: str = "", capture: str = "goal", scenario_id: str = "") -> list:
    """Rows of ``(scenario_id, placement_seed, agent_kind, captured, capture_step, agent_cost, steps)``.

    ``make_agent(placement_seed)`` builds a fresh controller for each game.
    """
    rows = []
    for j in range(placements):
        pseed = seed * 100_003 + j
        start = random_placement(scn, np.random.default_rng(pseed))
        res = run_pursuit(make_agent(pseed), scn, start, horizon, capture)
        rows.append({
            "scenario_id": scenario_id or scn.name,
            "placement_seed": pseed,
            "agent_kind": agent_kind,
            "captured": res.captured,
            "capture_step": -1 if res.capture_step is None else res.capture_step,
            "agent_cost": res.agent_path_cost,
            "steps": res.steps,
        })
    return rows
