"""Command line: ``decoynav {train,eval,pursue,sweep} --config FILE --seed N --out DIR``.

Exit codes: 0 ok, 2 configuration error (including a checkpoint whose config hash does
not match), 3 training divergence, 4 input/output error.
"""
from __future__ import annotations

import argparse
import itertools
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .adversary import pursuit_batch
from .agents import TrainingDivergence
from .agents import checkpoint as ckpt
from .config import RunConfig, build_scenarios, load_config, mix_seed
from .estimators import load_subagents
from .io import (
    METRIC_COLUMNS,
    PURSUIT_COLUMNS,
    TRAINING_LOG_COLUMNS,
    OutputError,
    curves_svg,
    emit_csv,
    emit_svg,
    emit_trajectory,
    heatmap_csv,
    heatmap_svg,
    write_manifest,
    write_text,
)
from .env import ContractViolation, UnreachableError
from .maps import MapParseError
from .metrics import metric_row, rg_prob_curve, summarize
from .policies import Controller, pretrain_am, rollout, train_deam
from .validation import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
PRETRAIN_LOG_COLUMNS = ["episode", "candidate", "steps", "path_cost", "reached_own_goal"]
CURVE_COLUMNS = ["episode", "env_steps", "path_cost", "cost_ratio", "mean_real_prob", "reached_real"]
SWEEP_COLUMNS = ["cell", "delta", "tau0", "tau_decay", "seed", "runs", "failure_rate", "train_failure_rate",
                 "mean_real_prob", "cost_ratio"]
PERCENTAGES = tuple(range(0, 101, 10))

# agent kind -> (controller policy, training routine)
_KINDS = {"honest": ("honest", "pretrain"), "vi-am": ("am", "pretrain"),
          "mf-am": ("am", "pretrain"), "deam": ("deam", "deam")}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", os.path.splitext(os.path.basename(name))[0]) or "scenario"


def _path(out, *parts):
    return os.path.join(out, *parts)


def _mkdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc.strerror or exc}") from exc


def _pmap(fn, items, workers: int) -> list:
    """Order-preserving map, on a process pool when ``workers > 1``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _train(scn, cfg: RunConfig, seed: int):
    if _KINDS[cfg.kind][1] == "deam":
        deam = cfg.deam.__class__(**{**cfg.deam.__dict__, "seed": seed})
        return train_deam(scn, deam, cfg.backend, cfg.tabular, cfg.ac)
    return pretrain_am(scn, cfg.budget, cfg.backend, seed, cfg.deam.horizon, cfg.tabular, cfg.ac,
                       cfg.deam.eval_points, cfg.deam.delta, cfg.deam.pruning, cfg.deam.update_every)


def _controller(scn, subagents, cfg: RunConfig, seed: int) -> Controller:
    # evaluation is the exploitation policy: hard max over the sampled candidates
    return Controller(scn, subagents, _KINDS[cfg.kind][0], cfg.deam.delta, rng=np.random.default_rng(seed),
                      pruning=cfg.deam.pruning, hard=True)


def _manifest(cfg: RunConfig, command: str, seed: int, **extra) -> dict:
    return {"command": command, "version": __version__, "config_hash": cfg.hash(), "seed": seed,
            "source": cfg.source, "mode": cfg.mode, "kind": cfg.kind, "backend": cfg.backend,
            "eval_seeds": ",".join(str(s) for s in cfg.eval_seeds), **extra}


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: RunConfig, seed: int, out: str) -> dict:
    """Train one agent per scenario; write checkpoints, logs, heatmaps and the training curve."""
    scns = build_scenarios(cfg)
    _mkdir(_path(out, "checkpoints"))
    columns = TRAINING_LOG_COLUMNS if _KINDS[cfg.kind][1] == "deam" else PRETRAIN_LOG_COLUMNS
    curves, results = {}, {}
    for scn in scns:
        name = _slug(scn.name)
        res = _train(scn, cfg, seed)
        results[name] = res
        ckpt_path = _path(out, "checkpoints", f"{name}.ckpt")
        try:
            ckpt.save(ckpt_path, res.subagents, scn.mode, cfg.hash(),
                      {"scenario": scn.name, "train_seed": seed, "kind": cfg.kind, "backend": cfg.backend,
                       "env_steps": res.env_steps, "untrained": res.untrained})
        except OSError as exc:
            raise OutputError(f"cannot write {ckpt_path}: {exc.strerror or exc}") from exc
        emit_csv(_path(out, f"training_log_{name}.csv"), res.log, columns)
        emit_csv(_path(out, f"training_curve_{name}.csv"), res.curve, CURVE_COLUMNS)
        final = rollout(scn, _controller(scn, res.subagents, cfg, seed), cfg.eval_horizon)
        write_text(_path(out, f"heatmap_{name}.csv"), heatmap_csv(res.visits))
        emit_svg(_path(out, f"heatmap_{name}.svg"), heatmap_svg(res.visits, scn, final.states))
        curves[name] = [(p["env_steps"], p["mean_real_prob"]) for p in res.curve]
    emit_svg(_path(out, "training_curve.svg"), curves_svg(curves))
    write_manifest(_path(out, "manifest.txt"), _manifest(
        cfg, "train", seed, scenarios=",".join(_slug(s.name) for s in scns),
        env_steps=sum(r.env_steps for r in results.values())))
    return results


# ---------------------------------------------------------------------------
# eval / pursue


def _checkpoint_file(checkpoint: str, name: str, n_scenarios: int) -> str:
    if os.path.isdir(checkpoint):
        return os.path.join(checkpoint, f"{name}.ckpt")
    if n_scenarios > 1:
        raise ConfigError("several scenarios need a checkpoint directory, not a single file")
    return checkpoint


def _load(cfg: RunConfig, checkpoint: str, scns) -> list:
    """Subagents per scenario from checkpoints that must match this config's hash."""
    loaded = []
    for scn in scns:
        path = _checkpoint_file(checkpoint, _slug(scn.name), len(scns))
        try:
            state = ckpt.load(path, expected_hash=cfg.hash())
        except FileNotFoundError as exc:
            raise OutputError(f"checkpoint not found: {path}") from exc
        except OSError as exc:
            raise OutputError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
        if state["mode"] != scn.mode or state["k"] != scn.k:
            raise ConfigError(f"checkpoint {path} is for a {state['mode']} scenario with {state['k']} goals")
        train_seed = int(state["meta"].get("train_seed", 0))
        loaded.append(load_subagents(scn, cfg.backend, state, train_seed, cfg.tabular, cfg.ac))
    return loaded


def cmd_eval(cfg: RunConfig, seed: int, out: str, checkpoint: str) -> list:
    """Exploitation rollouts per scenario and eval seed; metric rows, curves and trajectories."""
    scns = build_scenarios(cfg)
    subs = _load(cfg, checkpoint, scns)
    _mkdir(_path(out, "trajectories"))
    rows, curves = [], {}
    for scn, subagents in zip(scns, subs):
        name = _slug(scn.name)
        for es in cfg.eval_seeds:
            run_seed = mix_seed(seed, es)
            rec = rollout(scn, _controller(scn, subagents, cfg, run_seed), cfg.eval_horizon,
                          scenario_id=name, agent=cfg.kind, seed=es)
            rows.append(metric_row(rec, scn, PERCENTAGES))
            emit_trajectory(_path(out, "trajectories", f"{name}_seed{es}.csv"), rec)
            curves[f"{name}/{es}"] = rg_prob_curve(rec, PERCENTAGES)
    emit_csv(_path(out, "metrics.csv"), rows, METRIC_COLUMNS)
    summary = summarize(rows)
    emit_csv(_path(out, "summary.csv"), [{"agent": cfg.kind, **summary}],
             ["agent", "n", "failure_rate", "mean_real_prob", "percentile_real_prob", "cost_ratio",
              "steps_after_ldp"])
    emit_svg(_path(out, "real_goal_curves.svg"), curves_svg(curves))
    write_manifest(_path(out, "manifest.txt"), _manifest(cfg, "eval", seed, checkpoint=checkpoint))
    return rows


class _AgentFactory:
    # picklable so a pool worker can rebuild controllers
    def __init__(self, scn, subagents, cfg):
        self.scn, self.subagents, self.cfg = scn, subagents, cfg

    def __call__(self, placement_seed):
        return _controller(self.scn, self.subagents, self.cfg, placement_seed)


def _pursue_one(job):
    scn, subagents, cfg, seed = job
    return pursuit_batch(scn, _AgentFactory(scn, subagents, cfg), cfg.placements, seed, cfg.eval_horizon,
                         cfg.kind, cfg.capture, _slug(scn.name))


def cmd_pursue(cfg: RunConfig, seed: int, out: str, checkpoint: str) -> list:
    """``placements`` pirate games per scenario; batch CSV plus a capture-rate summary."""
    scns = build_scenarios(cfg)
    subs = _load(cfg, checkpoint, scns)
    batches = _pmap(_pursue_one, [(s, a, cfg, seed) for s, a in zip(scns, subs)], cfg.workers)
    rows = [r for b in batches for r in b]
    emit_csv(_path(out, "pursuit.csv"), rows, PURSUIT_COLUMNS)
    summary = [{"scenario_id": b[0]["scenario_id"], "agent_kind": cfg.kind, "trials": len(b),
                "capture_rate": float(np.mean([r["captured"] for r in b]))} for b in batches if b]
    summary.append({"scenario_id": "all", "agent_kind": cfg.kind, "trials": len(rows),
                    "capture_rate": float(np.mean([r["captured"] for r in rows])) if rows else float("nan")})
    emit_csv(_path(out, "pursuit_summary.csv"), summary, ["scenario_id", "agent_kind", "trials", "capture_rate"])
    write_manifest(_path(out, "manifest.txt"), _manifest(
        cfg, "pursue", seed, checkpoint=checkpoint, placements=cfg.placements, capture=cfg.capture))
    return rows


# ---------------------------------------------------------------------------
# sweep


def sweep_cells(cfg: RunConfig) -> list:
    """Cross product of the swept values (unswept parameters keep their configured value)."""
    grid = cfg.sweep
    if not grid:
        raise ConfigError("sweep needs at least one of sweep.delta, sweep.tau0, sweep.tau_decay")
    deltas = grid.get("delta", [cfg.deam.delta])
    tau0s = grid.get("tau0", [cfg.deam.tau0])
    decays = grid.get("tau_decay", [cfg.deam.tau_decay])
    return [dict(delta=d, tau0=t, tau_decay=l, seed=s)
            for d, t, l, s in itertools.product(deltas, tau0s, decays, cfg.eval_seeds)]


def _sweep_one(job):
    index, cell, cfg, base_seed, scns = job
    seed = mix_seed(base_seed, index)
    deam = cfg.deam.__class__(**{**cfg.deam.__dict__, "delta": cell["delta"], "tau0": cell["tau0"],
                                 "tau_decay": cell["tau_decay"], "seed": seed})
    rows, train_fail = [], []
    for scn in scns:
        res = train_deam(scn, deam, cfg.backend, cfg.tabular, cfg.ac)
        train_fail += [not r["reached_real"] for r in res.log]
        ctrl = Controller(scn, res.subagents, "deam", deam.delta, rng=np.random.default_rng(seed),
                          pruning=deam.pruning, hard=True)
        rows.append(metric_row(rollout(scn, ctrl, cfg.eval_horizon), scn, PERCENTAGES))
    s = summarize(rows)
    return {"cell": index, **cell, "seed": seed, "runs": len(rows), "failure_rate": s["failure_rate"],
            "train_failure_rate": float(np.mean(train_fail)) if train_fail else float("nan"),
            "mean_real_prob": s["mean_real_prob"], "cost_ratio": s["cost_ratio"]}


def cmd_sweep(cfg: RunConfig, seed: int, out: str) -> list:
    """Train and evaluate DEAM for every grid cell; one row per cell and eval seed.

    The ``seed`` column is the derived per-cell seed (base seed XOR a hash of the cell index).
    """
    scns = build_scenarios(cfg)
    cells = sweep_cells(cfg)
    rows = _pmap(_sweep_one, [(i, c, cfg, seed, scns) for i, c in enumerate(cells)], cfg.workers)
    for r, c in zip(rows, cells):
        r["eval_seed"] = c["seed"]
    emit_csv(_path(out, "sweep.csv"), rows, SWEEP_COLUMNS[:5] + ["eval_seed"] + SWEEP_COLUMNS[5:])
    write_manifest(_path(out, "manifest.txt"), _manifest(
        cfg, "sweep", seed, cells=len(cells), grid=";".join(f"{k}:{','.join(map(str, v))}"
                                                            for k, v in sorted(cfg.sweep.items()))))
    return rows


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoynav", description="Deceptive navigation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "train an agent and write checkpoints"),
                        ("eval", "passive-observer evaluation of a checkpoint"),
                        ("pursue", "pirate pursuit games against a checkpoint"),
                        ("sweep", "DEAM hyperparameter sweep")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI file")
        p.add_argument("--seed", required=True, type=int)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        if name in ("eval", "pursue"):
            p.add_argument("--checkpoint", required=True, help="checkpoint file or directory from train")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not os.path.isfile(args.config):
            raise OutputError(f"config file not found: {args.config}")
        cfg = load_config(args.config, args.set)
        _mkdir(args.out)
        if args.command == "train":
            cmd_train(cfg, args.seed, args.out)
        elif args.command == "eval":
            cmd_eval(cfg, args.seed, args.out, args.checkpoint)
        elif args.command == "pursue":
            cmd_pursue(cfg, args.seed, args.out, args.checkpoint)
        else:
            cmd_sweep(cfg, args.seed, args.out)
    except ckpt.ConfigHashMismatch as exc:
        print(f"refusing checkpoint: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, MapParseError, ContractViolation, UnreachableError, ckpt.CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
