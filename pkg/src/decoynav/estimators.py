"""Estimator-style wrappers: ``fit`` a scenario, then ``predict`` actions or ``rollout``."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .agents import AcConfig, TabularConfig
from .policies import Controller, DeamConfig, make_subagents, pretrain_am, rollout, train_deam
from .validation import check_backend, check_scenario, check_states


class _Agent(BaseEstimator):
    kind = ""

    def _configs(self):
        tab = TabularConfig(**(self.tabular or {}))
        ac = AcConfig(**(self.ac or {}))
        return tab, ac

    def controller(self, seed: int = 0) -> Controller:
        check_is_fitted(self, "subagents_")
        return Controller(self.scenario_, self.subagents_, self.kind, getattr(self, "delta", 0.0),
                          rng=np.random.default_rng(seed), pruning=getattr(self, "pruning", "relative"))

    def predict(self, states) -> list:
        """First action chosen from each state with an empty observation history."""
        check_is_fitted(self, "subagents_")
        out = []
        for s in check_states(self.scenario_, states):
            ctrl = self.controller(self.seed)
            out.append(ctrl.act(s))
        return out

    def rollout(self, seed: int = 0, horizon: int = 4000, recognizer=None):
        check_is_fitted(self, "subagents_")
        return rollout(self.scenario_, self.controller(seed), horizon, recognizer,
                       agent=self.kind, seed=seed)


class HonestAgent(_Agent):
    """Greedy on the real goal's Q-function.

    Parameters
    ----------
    backend : {'vi', 'tabular', 'ac'}
    budget : int
        Environment steps per candidate for learning backends.
    """

    kind = "honest"

    def __init__(self, backend="vi", budget=20_000, seed=0, horizon=4000, tabular=None, ac=None):
        self.backend = backend
        self.budget = budget
        self.seed = seed
        self.horizon = horizon
        self.tabular = tabular
        self.ac = ac

    def fit(self, scn, y=None):
        scn = check_scenario(scn)
        check_backend(self.backend, scn.mode)
        tab, ac = self._configs()
        self.training_ = pretrain_am(scn, self.budget, self.backend, self.seed, self.horizon, tab, ac)
        self.subagents_ = self.training_.subagents
        self.scenario_ = scn
        return self


class AmbiguityAgent(_Agent):
    """AM: hard max-entropy over pruned actions with separately pretrained subagents."""

    kind = "am"

    def __init__(self, backend="vi", budget=20_000, delta=0.0, pruning="relative", seed=0, horizon=4000,
                 eval_points=0, update_every="step", tabular=None, ac=None):
        self.backend = backend
        self.budget = budget
        self.delta = delta
        self.pruning = pruning
        self.seed = seed
        self.horizon = horizon
        self.eval_points = eval_points
        self.update_every = update_every
        self.tabular = tabular
        self.ac = ac

    def fit(self, scn, y=None):
        scn = check_scenario(scn, min_k=1)
        check_backend(self.backend, scn.mode)
        tab, ac = self._configs()
        self.training_ = pretrain_am(scn, self.budget, self.backend, self.seed, self.horizon, tab, ac,
                                     self.eval_points, self.delta, self.pruning, self.update_every)
        self.subagents_ = self.training_.subagents
        self.scenario_ = scn
        return self


class DeamAgent(_Agent):
    """DEAM: subagents trained jointly while following the soft-max entropy policy."""

    kind = "deam"

    def __init__(self, backend="tabular", episodes=500, delta=0.0, tau0=1.0, tau_decay=0.9, pruning="relative",
                 seed=0, horizon=4000, eval_points=20, update_every="step", tabular=None, ac=None):
        self.backend = backend
        self.episodes = episodes
        self.delta = delta
        self.tau0 = tau0
        self.tau_decay = tau_decay
        self.pruning = pruning
        self.seed = seed
        self.horizon = horizon
        self.eval_points = eval_points
        self.update_every = update_every
        self.tabular = tabular
        self.ac = ac

    def deam_config(self) -> DeamConfig:
        return DeamConfig(self.delta, self.tau0, self.tau_decay, self.episodes, self.seed, self.horizon,
                          self.pruning, self.eval_points, self.update_every)

    def fit(self, scn, y=None):
        scn = check_scenario(scn, min_k=2)
        check_backend(self.backend, scn.mode)
        tab, ac = self._configs()
        self.training_ = train_deam(scn, self.deam_config(), self.backend, tab, ac)
        self.subagents_ = self.training_.subagents
        self.scenario_ = scn
        return self


def load_subagents(scn, backend: str, state: dict, seed: int = 0, tabular=None, ac=None) -> list:
    """Fresh subagents for ``scn`` with weights from a parsed checkpoint."""
    subs = make_subagents(scn, backend, seed, tabular, ac)
    for entry in state["subagents"]:
        subs[entry["index"]].load_state_dict(entry["arrays"])
    return subs
