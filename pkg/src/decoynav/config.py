"""Run configuration: INI sections mirroring the run settings, with command-line overrides."""
from __future__ import annotations

import configparser
import dataclasses
import zlib
from dataclasses import dataclass, field

from .agents import AcConfig, TabularConfig
from .agents.checkpoint import config_hash
from .env import Scenario
from .fixtures import random_suite, symmetric_fixtures
from .maps import LAYOUTS, generate_map, random_scenario, read_map_file
from .policies import PRUNING_MODES, UPDATE_SCHEDULES, DeamConfig
from .validation import AGENT_KINDS, ConfigError, check_backend

SECTIONS = ("scenario", "agent", "deam", "tabular", "ac", "eval", "pursuit", "sweep")


@dataclass
class RunConfig:
    # scenario
    source: str = "fixture:sym11_open"
    mode: str = "discrete"
    goals: int = 2
    # agent
    kind: str = "deam"
    backend: str = "tabular"
    budget: int = 20_000  # environment steps per candidate for separately pretrained agents
    deam: DeamConfig = field(default_factory=DeamConfig)
    tabular: TabularConfig = field(default_factory=TabularConfig)
    ac: AcConfig = field(default_factory=AcConfig)
    # evaluation
    eval_seeds: tuple = (0, 1, 2)
    eval_horizon: int = 4000
    placements: int = 10
    capture: str = "goal"
    sweep: dict = field(default_factory=dict)
    workers: int = 1

    def training_dict(self) -> dict:
        """Settings that determine a trained checkpoint, apart from the seed (hashed into it)."""
        deam = dataclasses.asdict(self.deam)
        deam.pop("seed")
        return {
            "source": self.source, "mode": self.mode, "goals": self.goals, "kind": self.kind,
            "backend": self.backend, "budget": self.budget,
            "deam": deam,
            "tabular": dataclasses.asdict(self.tabular) if self.backend == "tabular" else None,
            "ac": dataclasses.asdict(self.ac) if self.backend == "ac" else None,
        }

    def hash(self) -> str:
        return config_hash(self.training_dict())


def _split(v: str) -> list:
    return [x.strip() for x in v.split(",") if x.strip()]


def _coerce(cls_field_type, raw: str, name: str):
    t = cls_field_type if isinstance(cls_field_type, str) else getattr(cls_field_type, "__name__", str(cls_field_type))
    try:
        if t in ("int",):
            return int(raw)
        if t in ("float",):
            return float(raw)
        if t in ("tuple",):
            return tuple(int(x) for x in _split(raw))
        if t in ("bool",):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def _apply(obj, section: dict, prefix: str):
    """New dataclass with fields overridden from ``section``; unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown setting {prefix}.{key}")
        updates[key] = _coerce(fields[key].type, raw, f"{prefix}.{key}")
    try:
        return dataclasses.replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{prefix}] settings: {exc}") from None


def load_config(path=None, overrides=(), text: str | None = None) -> RunConfig:
    """Read an INI file (or ``text``) and apply ``section.key=value`` overrides."""
    cp = configparser.ConfigParser()
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override {ov!r} is not section.key=value")
        lhs, value = ov.split("=", 1)
        sec, key = lhs.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
    raw = {sec: dict(cp.items(sec)) for sec in cp.sections()}

    cfg = RunConfig()
    top = {}
    for sec in ("scenario", "agent", "eval", "pursuit"):
        top.update({k: v for k, v in raw.get(sec, {}).items()})
    renames = {"seeds": "eval_seeds", "horizon": "eval_horizon"}
    ev = raw.get("eval", {})
    top = {k: v for k, v in top.items() if k not in ev}
    top.update({renames.get(k, k): v for k, v in ev.items()})
    simple = {f.name: f for f in dataclasses.fields(RunConfig) if f.name not in ("deam", "tabular", "ac", "sweep")}
    for key, v in top.items():
        if key not in simple:
            raise ConfigError(f"unknown setting {key}")
        setattr(cfg, key, _coerce(simple[key].type, v, key))
    cfg.deam = _apply(cfg.deam, raw.get("deam", {}), "deam")
    cfg.tabular = _apply(cfg.tabular, raw.get("tabular", {}), "tabular")
    ac_raw = dict(raw.get("ac", {}))
    if "hidden" in ac_raw:
        try:
            hidden = tuple(int(x) for x in _split(ac_raw.pop("hidden")))
        except ValueError:
            raise ConfigError("ac.hidden must be a comma-separated list of ints") from None
        cfg.ac = dataclasses.replace(cfg.ac, hidden=hidden)
    cfg.ac = _apply(cfg.ac, ac_raw, "ac")
    sweep = {}
    for key, v in raw.get("sweep", {}).items():
        if key not in ("delta", "tau0", "tau_decay"):
            raise ConfigError(f"sweep only varies delta, tau0 and tau_decay, not {key}")
        try:
            sweep[key] = [float(x) for x in _split(v)]
        except ValueError:
            raise ConfigError(f"bad sweep values for {key}: {v!r}") from None
        if not sweep[key]:
            raise ConfigError(f"sweep.{key} is empty")
    cfg.sweep = sweep
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.mode not in ("discrete", "continuous"):
        raise ConfigError(f"mode must be discrete or continuous, got {cfg.mode!r}")
    if cfg.kind not in AGENT_KINDS:
        raise ConfigError(f"agent kind must be one of {AGENT_KINDS}")
    check_backend(cfg.backend, cfg.mode, cfg.kind)
    if cfg.deam.pruning not in PRUNING_MODES or cfg.deam.update_every not in UPDATE_SCHEDULES:
        raise ConfigError("bad pruning or update schedule")
    if cfg.capture not in ("goal", "colocation"):
        raise ConfigError("capture must be goal or colocation")
    if cfg.placements < 1 or cfg.eval_horizon < 1 or not cfg.eval_seeds or cfg.workers < 1:
        raise ConfigError("placements, eval horizon, eval seeds and workers must be positive")
    if cfg.goals < 2:
        raise ConfigError("need at least two goals")


def build_scenarios(cfg: RunConfig, seed: int = 0) -> list:
    """Scenarios named by ``cfg.source``.

    ``suite:symmetric`` is the mirrored fixture set and ``suite:random:N[:SIZE]`` a
    seeded random suite; anything else is a single scenario (see ``build_scenario``).
    """
    kind, _, rest = cfg.source.partition(":")
    if kind != "suite":
        return [build_scenario(cfg, seed)]
    parts = rest.split(":")
    if parts == ["symmetric"]:
        scns = symmetric_fixtures()
    elif parts[0] == "random" and len(parts) in (2, 3):
        try:
            n = int(parts[1])
            size = int(parts[2]) if len(parts) == 3 else 15
        except ValueError:
            raise ConfigError(f"bad suite source {rest!r}") from None
        if n < 1 or size < 9:
            raise ConfigError("random suites need N >= 1 maps of size >= 9")
        scns = random_suite(n, size, seed, cfg.goals)
    else:
        raise ConfigError(f"suite must be symmetric or random:N[:SIZE], got {rest!r}")
    return [s.to_continuous() for s in scns] if cfg.mode == "continuous" else scns


def build_scenario(cfg: RunConfig, seed: int = 0) -> Scenario:
    """``fixture:NAME``, ``map:PATH`` or ``generate:LAYOUT:SIZE[:MAPSEED]``."""
    kind, _, rest = cfg.source.partition(":")
    if kind == "fixture":
        fx = {f.name: f for f in symmetric_fixtures()}
        if rest not in fx:
            raise ConfigError(f"unknown fixture {rest!r}; known: {', '.join(fx)}")
        scn = fx[rest]
    elif kind == "map":
        scn = read_map_file(rest)
    elif kind == "generate":
        parts = rest.split(":")
        if len(parts) not in (2, 3) or parts[0] not in LAYOUTS:
            raise ConfigError(f"generator source must be LAYOUT:SIZE[:SEED] with LAYOUT in {LAYOUTS}")
        try:
            size = int(parts[1])
            mseed = int(parts[2]) if len(parts) == 3 else seed
        except ValueError:
            raise ConfigError(f"bad generator source {rest!r}") from None
        if size < 9:
            raise ConfigError("generated maps need size >= 9")
        scn = random_scenario(generate_map(parts[0], size, mseed), cfg.goals, mseed, name=f"{parts[0]}_{size}_{mseed}")
    else:
        raise ConfigError(f"scenario source must start with fixture:, map:, generate: or suite:, got {cfg.source!r}")
    return scn.to_continuous() if cfg.mode == "continuous" else scn


def mix_seed(base: int, cell_index: int) -> int:
    """Per-cell seed: the base seed XOR a stable hash of the cell index."""
    return (int(base) ^ zlib.crc32(str(cell_index).encode())) & 0xFFFFFFFF
