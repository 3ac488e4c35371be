"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numpy as np

from .env import ContractViolation, Scenario, point_in_obstacle
from .policies import BACKENDS

AGENT_KINDS = ("honest", "vi-am", "mf-am", "deam")


class ConfigError(ValueError):
    pass


def check_scenario(scn, min_k: int = 1) -> Scenario:
    if not isinstance(scn, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scn).__name__}")
    if scn.k < min_k:
        raise ValueError(f"need at least {min_k} candidate goals, got {scn.k}")
    return scn


def check_backend(backend: str, mode: str, kind: str | None = None) -> None:
    """Reject backend/mode/agent combinations that cannot run."""
    if backend not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if kind is not None and kind not in AGENT_KINDS:
        raise ConfigError(f"agent kind must be one of {AGENT_KINDS}, got {kind!r}")
    if mode == "continuous" and (backend in ("vi", "tabular") or kind == "vi-am"):
        raise ConfigError("value iteration and tables need the discrete environment; "
                          "value-iteration AM is inapplicable in continuous mode")
    if kind == "vi-am" and backend != "vi":
        raise ConfigError("agent kind vi-am needs the vi backend")
    if kind == "mf-am" and backend == "vi":
        raise ConfigError("agent kind mf-am needs a learning backend (tabular or ac)")


def check_states(scn: Scenario, states) -> list:
    """Validate a batch of states for ``scn`` and return them as tuples."""
    out = []
    for s in states:
        s = tuple(np.asarray(s).tolist())
        if len(s) != 2:
            raise ValueError(f"state {s} is not a 2-d position")
        if scn.mode == "discrete":
            if not all(float(v).is_integer() for v in s):
                raise ValueError(f"discrete state {s} must be integer cells")
            s = (int(s[0]), int(s[1]))
            if not scn.map.is_free(s):
                raise ContractViolation(f"state {s} is not a free cell")
        else:
            s = (float(s[0]), float(s[1]))
            if point_in_obstacle(scn.map, s):
                raise ContractViolation(f"state {s} is inside an obstacle")
        out.append(s)
    return out
