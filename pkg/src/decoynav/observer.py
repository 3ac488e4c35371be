"""Observer models: Q-difference beliefs, entropy scoring and a cost-based recognizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .env import GridMap, Scenario, distance_field, octile, snap_to_cell


class BeliefError(RuntimeError):
    pass


@dataclass
class BeliefTrace:
    """Running per-candidate Q-difference sums for one episode."""

    priors: np.ndarray
    deltas: np.ndarray = None
    steps: int = 0
    _posterior: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=float)
        if self.deltas is None:
            self.deltas = np.zeros(len(self.priors))
        self.deltas = np.asarray(self.deltas, dtype=float)

    @property
    def k(self) -> int:
        return len(self.priors)

    @property
    def posterior(self) -> np.ndarray:
        if self._posterior is None:
            self._posterior = posterior(self.deltas, self.priors)
        return self._posterior

    def hypothetical(self, terms) -> np.ndarray:
        """Posterior if one more step with per-candidate Q-difference ``terms`` were observed."""
        return posterior(self.deltas + np.asarray(terms, dtype=float), self.priors)

    def commit(self, terms) -> None:
        self.deltas = self.deltas + np.asarray(terms, dtype=float)
        self.steps += 1
        self._posterior = None


def delta_step_discrete(q_row, a: int) -> float:
    """``Q(s, a) - max_a' Q(s, a')`` for one candidate, given its row ``Q(s, .)``."""
    q_row = np.asarray(q_row, dtype=float)
    return float(q_row[a] - q_row.max())


def delta_step_continuous(critic, actor, s, a, rng=None, a_star=None) -> float:
    """``Q(s, a) - Q(s, a*)`` with ``a*`` drawn once from the actor.

    Unlike the discrete term this can be positive, since ``a*`` is only a sample of a
    stochastic policy. Pass ``a_star`` to reuse a baseline across scored actions.
    """
    if a_star is None:
        a_star = actor(s, rng)
    return float(critic(s, a) - critic(s, a_star))


def posterior(deltas, priors) -> np.ndarray:
    """Boltzmann posterior ``p_i ~ exp(delta_i) * prior_i``, normalised in log space."""
    deltas = np.asarray(deltas, dtype=float)
    priors = np.asarray(priors, dtype=float)
    with np.errstate(divide="ignore"):
        logw = deltas + np.log(priors)
    top = logw.max()
    if not np.isfinite(top):
        raise BeliefError(f"all posterior weights vanish: deltas={deltas}, priors={priors}")
    w = np.exp(logw - top)
    return w / w.sum()


def entropy(p) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(max(0.0, -(nz * np.log2(nz)).sum()))


def entropies(P) -> np.ndarray:
    """Row-wise entropy in bits of a matrix of distributions."""
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log2(np.where(P > 0, P, 1.0)), 0.0)
    return np.maximum(0.0, -terms.sum(axis=1))


def posteriors(deltas, priors) -> np.ndarray:
    """Row-wise :func:`posterior` for a matrix of Q-difference vectors."""
    D = np.atleast_2d(np.asarray(deltas, dtype=float))
    with np.errstate(divide="ignore"):
        logw = D + np.log(np.asarray(priors, dtype=float))
    logw = logw - logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# cost-based recognition


def _as_cells(grid: GridMap, obs) -> list:
    cells = []
    for p in obs:
        if isinstance(p[0], (int, np.integer)) and isinstance(p[1], (int, np.integer)):
            cells.append((int(p[0]), int(p[1])))
        else:
            cells.append(snap_to_cell(grid, p))
    return cells


def _cost_weights(dist_fields, start, current, path_cost, priors):
    k = len(dist_fields)
    delta = np.empty(k)
    for i, df in enumerate(dist_fields):
        to_goal = df[current]
        delta[i] = df[start] - (path_cost + to_goal) if np.isfinite(to_goal) else -np.inf
    with np.errstate(divide="ignore"):
        logw = delta + np.log(priors)
    if not np.isfinite(logw).any():
        raise BeliefError("no candidate goal is reachable from the current cell")
    w = np.exp(logw - logw[np.isfinite(logw)].max())
    return w / w.sum()


def cost_based_posterior(grid: GridMap, obs, goals, priors=None) -> np.ndarray:
    """Goal posterior from cost differences of an observed path.

    ``obs`` is the sequence of visited positions starting at the start state; points
    are snapped to the nearest free cell. Each goal scores
    ``cost(start->g) - (cost(obs) + cost(current->g))``.
    """
    if hasattr(goals, "goals"):
        priors = goals.priors if priors is None else priors
        goals = goals.goals
    goal_cells = _as_cells(grid, goals)
    priors = np.full(len(goal_cells), 1.0 / len(goal_cells)) if priors is None else np.asarray(priors, float)
    cells = _as_cells(grid, obs)
    if not cells:
        return priors / priors.sum()
    path_cost = sum(octile(a, b) for a, b in zip(cells, cells[1:]))
    fields = [distance_field(grid, g) for g in goal_cells]
    return _cost_weights(fields, cells[0], cells[-1], path_cost, priors)


class CostBasedRecognizer(BaseEstimator):
    """Incremental cost-based goal recognizer.

    Independent of any agent's Q-functions; used as the evaluation observer and by the
    pirate. ``fit`` binds it to a scenario; ``predict_proba`` maps observed paths to the
    posterior after the last point.

    Parameters
    ----------
    priors : array-like of shape (k,), optional
        Observer priors. Defaults to the scenario's candidate priors.
    """

    def __init__(self, priors=None):
        self.priors = priors

    def fit(self, scn: Scenario, y=None):
        self.map_ = scn.map
        pri = scn.candidates.priors if self.priors is None else self.priors
        self.priors_ = np.asarray(pri, dtype=float)
        if self.priors_.shape != (scn.k,) or (self.priors_ < 0).any() or abs(self.priors_.sum() - 1) > 1e-9:
            raise ValueError("priors must be k nonnegative values summing to 1")
        self.fields_ = [distance_field(scn.map, g) for g in scn.goal_cells]
        self.reset()
        return self

    def reset(self):
        self.start_ = None
        self.current_ = None
        self.path_cost_ = 0.0
        return self

    def observe(self, position) -> np.ndarray:
        check_is_fitted(self, "fields_")
        cell = _as_cells(self.map_, [position])[0]
        if self.start_ is None:
            self.start_ = cell
        else:
            self.path_cost_ += octile(self.current_, cell)
        self.current_ = cell
        return self.posterior()

    def posterior(self) -> np.ndarray:
        check_is_fitted(self, "fields_")
        if self.start_ is None:
            return self.priors_ / self.priors_.sum()
        return _cost_weights(self.fields_, self.start_, self.current_, self.path_cost_, self.priors_)

    def trace(self, positions) -> np.ndarray:
        """Posterior after each prefix of ``positions``; shape (len(positions), k)."""
        self.reset()
        return np.array([self.observe(p) for p in positions])

    def predict_proba(self, paths) -> np.ndarray:
        """Posterior after each whole path; shape (n_paths, k)."""
        out = []
        for path in paths:
            self.reset()
            p = self.posterior()
            for pos in path:
                p = self.observe(pos)
            out.append(p)
        self.reset()
        return np.array(out)

    def predict(self, paths) -> np.ndarray:
        """Most likely goal index per path (lowest index on ties)."""
        return np.argmax(self.predict_proba(paths), axis=1)
