"""Honest, ambiguity (AM) and deceptive-exploration (DEAM) policies and their training loops."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    AcConfig,
    TabularConfig,
    TabularSubagent,
    VISubagent,
    buffer_push_all,
    greedy_action,
    make_ac_subagent,
)
from .env import MOVE_COSTS, N_ACTIONS, Scenario
from .metrics import TrajectoryRecord
from .observer import BeliefTrace, CostBasedRecognizer, entropies, posteriors

BACKENDS = ("vi", "tabular", "ac")
PRUNING_MODES = ("relative", "absolute")
UPDATE_SCHEDULES = ("episode", "step")
TIE_ATOL = 1e-12


@dataclass(frozen=True)
class DeamConfig:
    delta: float = 0.0
    tau0: float = 1.0
    tau_decay: float = 0.9
    episodes: int = 500
    seed: int = 0
    horizon: int = 4000
    pruning: str = "relative"
    eval_points: int = 20
    update_every: str = "step"  # or "episode": all updates after the episode ends

    def __post_init__(self):
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if not 0 < self.tau_decay <= 1:
            raise ValueError("tau_decay must be in (0, 1]")
        if self.pruning not in PRUNING_MODES:
            raise ValueError(f"pruning must be one of {PRUNING_MODES}")
        if self.update_every not in UPDATE_SCHEDULES:
            raise ValueError(f"update_every must be one of {UPDATE_SCHEDULES}")
        if self.episodes < 0 or self.horizon < 1:
            raise ValueError("episodes must be >= 0 and horizon >= 1")


@dataclass
class ResidualTracker:
    """Real-goal Q-values of the first and the latest chosen action.

    ``residual`` is latest minus first: the expected reward banked so far.
    """

    q_initial: float | None = None
    q_previous: float | None = None

    @property
    def residual(self) -> float:
        if self.q_initial is None:
            return 0.0
        return self.q_previous - self.q_initial

    def baseline(self, pruning: str = "relative") -> float:
        if pruning == "absolute" or self.q_initial is None:
            return 0.0
        return self.q_initial

    def record(self, q: float) -> None:
        if self.q_initial is None:
            self.q_initial = float(q)
        self.q_previous = float(q)


def prune_mask(q_values, tracker: ResidualTracker, delta: float, pruning: str = "relative") -> np.ndarray:
    """Keep-mask over actions with real-goal values ``q_values``.

    ``relative`` keeps ``Q(s, a) - Q(s0, a0) - R > delta``, i.e. the action must improve on
    the previous step's expected reward by more than ``delta``. ``absolute`` keeps
    ``Q(s, a) - R > delta``. Both reduce to ``Q(s, a) > delta`` on the first step. If
    nothing survives, the single best action is kept.
    """
    q = np.asarray(q_values, dtype=float)
    keep = q - tracker.baseline(pruning) - tracker.residual > delta
    if not keep.any():
        keep = np.zeros(len(q), dtype=bool)
        keep[int(np.argmax(q))] = True
    return keep


def prune(actions, q_real, s, tracker: ResidualTracker, delta: float, pruning: str = "relative") -> list:
    """Actions whose real-goal value clears the pruning threshold (see :func:`prune_mask`)."""
    actions = list(actions)
    if not actions:
        raise ValueError("no actions to prune")
    q = [q_real(s, a) for a in actions]
    keep = prune_mask(q, tracker, delta, pruning)
    return [a for a, k in zip(actions, keep) if k]


def softmax_probs(values, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = (np.asarray(values, dtype=float) - np.max(values)) / tau
    w = np.exp(z)
    return w / w.sum()


def _best(entropy_values, q_real_values) -> int:
    """Index of the highest entropy; near-ties go to higher real Q, then lower index."""
    e = np.asarray(entropy_values)
    tied = np.flatnonzero(e >= e.max() - TIE_ATOL)
    q = np.asarray(q_real_values)[tied]
    return int(tied[np.flatnonzero(q >= q.max() - TIE_ATOL)[0]])


# ---------------------------------------------------------------------------
# Q-difference terms for candidate actions


def _same_action(a, b) -> bool:
    return np.array_equal(np.asarray(a), np.asarray(b))


def _dedupe(actions) -> list:
    out = []
    for a in actions:
        if not any(_same_action(a, b) for b in out):
            out.append(a)
    return out


class _Scorer:
    """Per-decision view of all subagents' Q-values at one state."""

    def __init__(self, s, subagents, real_index, mode, rng=None):
        self.s = s
        self.subagents = subagents
        self.real = real_index
        self.mode = mode
        if mode == "discrete":
            rows = np.array([sa.q_row(s) for sa in subagents])
            self.rows = rows
            self.diffs = rows - rows.max(axis=1, keepdims=True)
        else:
            # one baseline sample per subagent, reused for every action scored here
            self.baselines = np.array([
                sa.qvalue(s, sa.sample(s, rng) if rng is not None else sa.act(s)) for sa in subagents
            ])

    def terms(self, actions) -> np.ndarray:
        """Q-difference terms, shape ``(len(actions), k)``."""
        if self.mode == "discrete":
            return self.diffs[:, np.asarray(actions, dtype=int)].T
        q = np.array([[sa.qvalue(self.s, a) for sa in self.subagents] for a in actions])
        return q - self.baselines

    def q_real(self, actions) -> np.ndarray:
        if self.mode == "discrete":
            return self.rows[self.real, np.asarray(actions, dtype=int)]
        sa = self.subagents[self.real]
        return np.array([sa.qvalue(self.s, a) for a in actions])


def _score(trace: BeliefTrace, scorer: _Scorer, actions):
    terms = scorer.terms(actions)
    return entropies(posteriors(trace.deltas + terms, trace.priors)), terms


def am_select(s, trace: BeliefTrace, subagents, real_index: int, delta: float, tracker: ResidualTracker,
              pruning: str = "relative", mode: str = "discrete"):
    """Hard max-entropy action among pruned actions.

    Discrete mode scores all 8 moves; continuous mode scores the subagents' mean actions.
    Returns ``(action, terms)`` where ``terms`` are the chosen action's Q-difference terms.
    """
    scorer = _Scorer(s, subagents, real_index, mode)
    actions = list(range(N_ACTIONS)) if mode == "discrete" else _dedupe([sa.act(s) for sa in subagents])
    q = scorer.q_real(actions)
    keep = prune_mask(q, tracker, delta, pruning)
    kept = [a for a, k in zip(actions, keep) if k]
    ent, terms = _score(trace, scorer, kept)
    i = _best(ent, q[keep])
    return kept[i], terms[i], float(q[keep][i])


def deam_select(s, trace: BeliefTrace, subagents, real_index: int, delta: float, tau: float, rng,
                tracker: ResidualTracker, pruning: str = "relative", mode: str = "discrete", greedy: bool = False,
                hard: bool = False):
    """Soft-max-entropy choice over one candidate action per subagent.

    Candidates are sampled from each subagent's policy (mean/greedy actions when
    ``greedy``), deduplicated, pruned and scored by the entropy of the hypothetical
    posterior. ``hard`` replaces the soft-max draw by its ``tau -> 0`` limit.
    Returns ``(action, terms, q_real, info)``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if greedy:
        cands = [sa.act(s) for sa in subagents]
    else:
        cands = [sa.sample(s, rng) for sa in subagents]
    cands = _dedupe(cands)
    scorer = _Scorer(s, subagents, real_index, mode, None if greedy else rng)
    q = scorer.q_real(cands)
    keep = prune_mask(q, tracker, delta, pruning)
    kept = [a for a, k in zip(cands, keep) if k]
    qk = q[keep]
    ent, terms = _score(trace, scorer, kept)
    if greedy or hard:
        i = _best(ent, qk)
        probs = np.zeros(len(kept))
        probs[i] = 1.0
    else:
        probs = softmax_probs(ent, tau)
        i = min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), len(kept) - 1)
    return kept[i], terms[i], float(qk[i]), {"candidates": kept, "entropies": ent, "probs": probs}


def honest_select(s, real_subagent, mode: str = "discrete"):
    """Greedy action on the real goal's Q-function (discrete) or the real actor's mean."""
    if mode == "discrete":
        return greedy_action(real_subagent.q_row(s))
    return real_subagent.act(s)


# ---------------------------------------------------------------------------
# episode controllers


class Controller:
    """Chooses actions over one episode, keeping the belief trace and residual tracker."""

    def __init__(self, scn: Scenario, subagents, kind: str, delta: float = 0.0, tau: float = 1.0,
                 rng=None, greedy: bool = False, pruning: str = "relative", hard: bool = True):
        if kind not in ("honest", "am", "deam"):
            raise ValueError(f"unknown policy kind {kind!r}")
        self.scn = scn
        self.subagents = subagents
        self.kind = kind
        self.delta = delta
        self.tau = tau
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.greedy = greedy
        self.hard = hard
        self.pruning = pruning
        self.real = scn.candidates.real_index
        self.reset()

    def reset(self):
        self.trace = BeliefTrace(np.asarray(self.scn.candidates.priors))
        self.tracker = ResidualTracker()

    def act(self, s):
        mode = self.scn.mode
        if self.kind == "honest":
            a = honest_select(s, self.subagents[self.real], mode)
            scorer = _Scorer(s, self.subagents, self.real, mode)
            terms = scorer.terms([a])[0]
            q = float(scorer.q_real([a])[0])
        elif self.kind == "am":
            a, terms, q = am_select(s, self.trace, self.subagents, self.real, self.delta, self.tracker,
                                    self.pruning, mode)
        else:
            a, terms, q, _ = deam_select(s, self.trace, self.subagents, self.real, self.delta, self.tau,
                                         self.rng, self.tracker, self.pruning, mode, self.greedy,
                                         self.hard)
        self.trace.commit(terms)
        self.tracker.record(q)
        return a


def step_cost(scn: Scenario, s, a, s_next) -> float:
    """Path cost of one move: the move's cost on the grid, distance travelled in the plane."""
    if scn.mode == "discrete":
        return float(MOVE_COSTS[int(a)])
    return float(np.hypot(s_next[0] - s[0], s_next[1] - s[1]))


def rollout(scn: Scenario, controller: Controller, horizon: int = 4000, recognizer=None,
            scenario_id: str = "", agent: str = "", seed: int = 0) -> TrajectoryRecord:
    """Run one episode and record it under an independent cost-based observer."""
    recognizer = recognizer if recognizer is not None else CostBasedRecognizer().fit(scn)
    recognizer.reset()
    controller.reset()
    s = scn.start
    states, actions, rewards = [s], [], []
    post = [recognizer.observe(s)]
    cum = [0.0]
    reached = False
    for _ in range(horizon):
        a = controller.act(s)
        out = scn.step(s, a)
        actions.append(a)
        rewards.append(out.rewards)
        cum.append(cum[-1] + step_cost(scn, s, a, out.next_state))
        s = out.next_state
        states.append(s)
        post.append(recognizer.observe(s))
        if out.terminal:
            reached = True
            break
    k = scn.k
    return TrajectoryRecord(
        states=states,
        actions=actions,
        rewards=np.array(rewards).reshape(-1, k),
        posteriors=np.array(post),
        cum_cost=np.array(cum),
        real_index=scn.candidates.real_index,
        reached_real=reached,
        scenario_id=scenario_id or scn.name,
        agent=agent or controller.kind,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# training


def make_subagents(scn: Scenario, backend: str, seed: int = 0, tabular: TabularConfig | None = None,
                   ac: AcConfig | None = None, gamma_vi: float = 1.0):
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if backend == "vi":
        return [VISubagent(scn, i, gamma_vi) for i in range(scn.k)]
    if backend == "tabular":
        if scn.mode != "discrete":
            raise ValueError("the tabular backend needs the discrete environment")
        return [TabularSubagent(scn, i, tabular or TabularConfig()) for i in range(scn.k)]
    return [make_ac_subagent(scn, i, ac or AcConfig(), seed=seed * 1000 + i) for i in range(scn.k)]


@dataclass
class TrainingResult:
    subagents: list
    log: list = field(default_factory=list)
    visits: np.ndarray = None
    curve: list = field(default_factory=list)
    env_steps: int = 0
    untrained: bool = False


def _eval_schedule(episodes: int, points: int) -> set:
    if episodes <= 0 or points <= 0:
        return set()
    return {int(round(episodes * (j + 1) / points)) for j in range(points)}


def _curve_point(scn, subagents, kind, cfg, episode, env_steps, horizon):
    from .metrics import path_cost_ratio

    ctrl = Controller(scn, subagents, kind, cfg.delta, rng=np.random.default_rng(cfg.seed), pruning=cfg.pruning)
    rec = rollout(scn, ctrl, horizon)
    return {
        "episode": episode,
        "env_steps": env_steps,
        "path_cost": rec.total_cost,
        "cost_ratio": path_cost_ratio(rec, scn),
        "mean_real_prob": float(rec.real_probs.mean()),
        "reached_real": rec.reached_real,
    }


def train_deam(scn: Scenario, cfg: DeamConfig = DeamConfig(), backend: str = "tabular",
               tabular: TabularConfig | None = None, ac: AcConfig | None = None,
               subagents=None) -> TrainingResult:
    """Train all subagents jointly while acting with the deceptive soft-max policy.

    Every transition goes to every subagent's buffer with that candidate's reward and
    the temperature decays after each episode. Subagents take one update per environment
    step, either right after the step or all at the end of the episode
    (``cfg.update_every``).
    """
    if scn.k < 2:
        raise ValueError("DEAM needs at least two candidate goals")
    rng = np.random.default_rng(cfg.seed)
    subagents = subagents if subagents is not None else make_subagents(scn, backend, cfg.seed, tabular, ac)
    buffers = [sa.buffer for sa in subagents]
    visits = np.zeros((scn.map.height, scn.map.width), dtype=np.int64)
    result = TrainingResult(subagents, visits=visits)
    tau = cfg.tau0
    evals = _eval_schedule(cfg.episodes, cfg.eval_points)
    ctrl = Controller(scn, subagents, "deam", cfg.delta, tau, rng, pruning=cfg.pruning, hard=False)
    for episode in range(1, cfg.episodes + 1):
        ctrl.tau = tau
        ctrl.reset()
        s = scn.start
        cost, steps, reached = 0.0, 0, False
        real_post = []
        for _ in range(cfg.horizon):
            _count(visits, s)
            a = ctrl.act(s)
            out = scn.step(s, a)
            buffer_push_all(buffers, s, a, out.next_state, out.rewards, out.terminal)
            real_post.append(ctrl.trace.posterior[scn.candidates.real_index])
            cost += step_cost(scn, s, a, out.next_state)
            steps += 1
            s = out.next_state
            if cfg.update_every == "step":
                _update_all(subagents, 1, rng, episode)
            if out.terminal:
                reached = True
                break
        _count(visits, s)
        tau = cfg.tau0 * cfg.tau_decay**episode
        if cfg.update_every == "episode":
            _update_all(subagents, steps, rng, episode)
        result.env_steps += steps
        result.log.append({
            "episode": episode,
            "steps": steps,
            "path_cost": cost,
            "tau": tau,
            "mean_real_posterior": float(np.mean(real_post)),
            "reached_real": reached,
        })
        if episode in evals:
            result.curve.append(_curve_point(scn, subagents, "deam", cfg, episode, result.env_steps, cfg.horizon))
    return result


def _update_all(subagents, n, rng, episode):
    for sa in subagents:
        try:
            sa.update(n, rng)
        except Exception as exc:
            if hasattr(exc, "diagnostics"):
                exc.args = (f"episode {episode}: {exc.args[0]}",)
                exc.diagnostics["episode"] = episode
            raise


def _count(visits, s):
    x, y = s
    h, w = visits.shape
    visits[min(max(int(np.floor(y)), 0), h - 1), min(max(int(np.floor(x)), 0), w - 1)] += 1


def pretrain_am(scn: Scenario, budget: int, backend: str = "tabular", seed: int = 0, horizon: int = 4000,
                tabular: TabularConfig | None = None, ac: AcConfig | None = None,
                eval_points: int = 0, delta: float = 0.0, pruning: str = "relative",
                update_every: str = "step") -> TrainingResult:
    """Train each candidate's subagent alone, acting honestly toward its own goal.

    ``budget`` is the number of environment steps per candidate. The value-iteration
    backend ignores it and solves each candidate exactly.
    """
    rng = np.random.default_rng(seed)
    subagents = make_subagents(scn, backend, seed, tabular, ac)
    visits = np.zeros((scn.map.height, scn.map.width), dtype=np.int64)
    result = TrainingResult(subagents, visits=visits)
    if backend == "vi":
        return result
    if budget <= 0:
        warnings.warn("pretrain_am called with a zero budget; subagents are untrained", stacklevel=2)
        result.untrained = True
        return result
    total = budget * scn.k
    evals = {int(round(total * (j + 1) / eval_points)) for j in range(eval_points)} if eval_points else set()
    episode = 0
    for i, sa in enumerate(subagents):
        used = 0
        while used < budget:
            episode += 1
            s = scn.start
            steps = 0
            cost = 0.0
            reached = False
            for _ in range(min(horizon, budget - used)):
                _count(visits, s)
                a = sa.sample(s, rng)
                out = scn.step(s, a)
                sa.buffer.push(s, a, out.next_state, out.rewards[i], bool(out.reached[i]))
                cost += step_cost(scn, s, a, out.next_state)
                steps += 1
                s = out.next_state
                if update_every == "step":
                    sa.update(1, rng)
                if out.reached[i]:
                    reached = True
                    break
            _count(visits, s)
            used += steps
            if update_every == "episode":
                sa.update(steps, rng)
            result.env_steps += steps
            result.log.append({"episode": episode, "candidate": i, "steps": steps, "path_cost": cost,
                               "reached_own_goal": reached})
            crossed = [e for e in evals if result.env_steps - steps < e <= result.env_steps]
            if crossed:
                cfg = DeamConfig(delta=delta, pruning=pruning, horizon=horizon)
                result.curve.append(_curve_point(scn, subagents, "am", cfg, episode, result.env_steps, horizon))
    return result
