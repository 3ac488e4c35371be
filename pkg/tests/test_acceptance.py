"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line through ``report``.

The experiments are desk-scale: tabular subagents on 11x11 to 15x15 grids with a few
hundred training episodes, compared by direction rather than by published values.
Run ``pytest tests/test_acceptance.py -s`` to see the lines as they are produced; they
are also collected in the terminal summary.
"""
import math
import time

import mpmath
import numpy as np
import pytest

from decoynav.adversary import WAIT, random_placement, run_pursuit
from decoynav.agents import AcConfig, Batch, make_ac_subagent
from decoynav.env import MOVES, N_ACTIONS
from decoynav.fixtures import random_suite, reference_fixture, symmetric_fixtures
from decoynav.metrics import compute_ldp, exploration_overlap, metric_row, summarize
from decoynav.observer import BeliefTrace, delta_step_discrete, entropy, posterior
from decoynav.policies import (
    Controller,
    DeamConfig,
    ResidualTracker,
    deam_select,
    make_subagents,
    pretrain_am,
    rollout,
    train_deam,
)

from conftest import nx_cost, open_scenario
from test_eval import record

pytestmark = pytest.mark.slow

EVAL_SEEDS = (0, 1, 2)
TRAIN_SEED = 0


def controller(scn, subagents, kind, seed=0, delta=0.0):
    # exploitation policy used for every evaluation
    return Controller(scn, subagents, kind, delta, rng=np.random.default_rng(seed), hard=True)


def mean(xs):
    xs = list(xs)
    return float(np.mean(xs)) if xs else math.nan


@pytest.fixture(scope="module")
def suite():
    """Honest, VI-AM, DEAM and MF-AM on the mirrored fixtures, with their metric rows."""
    t0 = time.time()
    out = []
    for scn in symmetric_fixtures():
        vi = make_subagents(scn, "vi")
        deam = train_deam(scn, DeamConfig(seed=TRAIN_SEED, eval_points=0), "tabular")
        # equal environment-step budget: DEAM's total split across the k pretrained subagents
        mf = pretrain_am(scn, deam.env_steps // scn.k, "tabular", TRAIN_SEED)
        rows = {
            "honest": [metric_row(rollout(scn, controller(scn, vi, "honest")), scn)],
            "vi-am": [metric_row(rollout(scn, controller(scn, vi, "am", s)), scn) for s in EVAL_SEEDS],
            "deam": [metric_row(rollout(scn, controller(scn, deam.subagents, "deam", s)), scn) for s in EVAL_SEEDS],
            "mf-am": [metric_row(rollout(scn, controller(scn, mf.subagents, "am", s)), scn) for s in EVAL_SEEDS],
        }
        out.append({"scn": scn, "deam": deam, "mf": mf, "rows": rows})
    return out, time.time() - t0


# ---------------------------------------------------------------------------


def test_1_oracle_equivalence(report):
    t0 = time.time()
    worst, n = 0.0, 0
    for seed in (0, 1):
        for scn in random_suite(10, 15, seed) + random_suite(5, 11, seed + 10):
            rec = rollout(scn, controller(scn, make_subagents(scn, "vi"), "honest"))
            assert rec.reached_real
            worst = max(worst, abs(rec.total_cost - nx_cost(scn.map, scn.start, scn.real_goal)))
            n += 1
    dt = time.time() - t0
    ok = report(1, worst <= 1e-9 and n >= 20 and dt < 10,
                f"{n} maps, max |cost - dijkstra| = {worst:.2e}, {dt:.1f}s")
    assert ok


def test_2_q_difference_zero_law(report):
    worst, steps = 0.0, 0
    for seed in (0, 1):
        for scn in random_suite(10, 15, seed) + random_suite(5, 11, seed + 10):
            subs = make_subagents(scn, "vi")
            real = subs[scn.candidates.real_index]
            rec = rollout(scn, controller(scn, subs, "honest"))
            for s, a in zip(rec.states, rec.actions):
                worst = max(worst, abs(delta_step_discrete(real.q_row(s), a)))
                steps += 1
    ok = report(2, worst <= 1e-9, f"{steps} honest steps, max |delta| = {worst:.2e}")
    assert ok


def test_3_posterior_brute_force(report):
    rng = np.random.default_rng(0)
    mpmath.mp.dps = 60
    worst, bad_entropy, n = 0.0, 0, 0
    for k in (1, 2, 3):
        for _ in range(100):
            deltas = rng.uniform(-60.0, 0.0, k) * rng.choice([1.0, 0.01])
            priors = rng.dirichlet(np.ones(k))
            p = posterior(deltas, priors)
            w = [mpmath.exp(mpmath.mpf(float(d))) * mpmath.mpf(float(q)) for d, q in zip(deltas, priors)]
            z = mpmath.fsum(w)
            worst = max(worst, max(abs(float(wi / z) - pi) for wi, pi in zip(w, p)))
            h = entropy(p)
            bad_entropy += not (-1e-12 <= h <= math.log2(k) + 1e-12)
            n += 1
    ok = report(3, worst <= 1e-12 and bad_entropy == 0,
                f"{n} vectors, max error {worst:.1e}, entropy out of range {bad_entropy} times")
    assert ok


def test_4_pruning_guarantee(report):
    t0 = time.time()
    misses = []
    for scn in random_suite(10, 15, 0):
        vi = make_subagents(scn, "vi")
        for seed in range(4):
            am = rollout(scn, controller(scn, vi, "am", seed))
            deam = train_deam(scn, DeamConfig(seed=seed, eval_points=0), "tabular")
            dm = rollout(scn, controller(scn, deam.subagents, "deam", seed))
            misses += [(scn.name, seed, name) for name, r in (("vi-am", am), ("deam", dm)) if not r.reached_real]
    dt = time.time() - t0
    ok = report(4, not misses and dt < 120, f"40 map x seed runs per agent, misses {misses}, {dt:.0f}s")
    assert ok


def test_5_deceptiveness_direction(suite, report):
    runs, dt = suite
    honest = [r["rows"]["honest"][0].mean_real_prob for r in runs]
    vi_am = [mean(m.mean_real_prob for m in r["rows"]["vi-am"]) for r in runs]
    deam = [mean(m.mean_real_prob for m in r["rows"]["deam"]) for r in runs]
    n_am = sum(a < h for a, h in zip(vi_am, honest))
    n_deam = sum(d < h for d, h in zip(deam, honest))
    ok = report(5, n_am >= 7 and n_deam >= 7 and dt < 600,
                f"VI-AM below honest on {n_am}/8, DEAM on {n_deam}/8 "
                f"(means {mean(honest):.3f} / {mean(vi_am):.3f} / {mean(deam):.3f}), {dt:.0f}s")
    assert ok


def test_6_path_cost_bound(suite, report):
    runs, _ = suite
    deam = summarize([m for r in runs for m in r["rows"]["deam"]])
    mf = summarize([m for r in runs for m in r["rows"]["mf-am"]])
    ok = report(6, deam["cost_ratio"] <= 1.5 and deam["cost_ratio"] < mf["cost_ratio"],
                f"DEAM cost ratio {deam['cost_ratio']:.3f} (failures {deam['failure_rate']:.2f}) vs "
                f"MF-AM {mf['cost_ratio']:.3f} (failures {mf['failure_rate']:.2f})")
    assert ok


class _Proposer:
    def __init__(self, row, action):
        self.row = np.asarray(row, dtype=float)
        self.action = action

    def q_row(self, s):
        return self.row

    def qvalue(self, s, a):
        return float(self.row[a])

    def sample(self, s, rng):
        return self.action


def test_7_soft_max_limit(report):
    scn = reference_fixture()
    subs = make_subagents(scn, "vi")
    trace = BeliefTrace(np.asarray(scn.candidates.priors))
    trace.commit([0.0, -1.0])
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        a, _, _, info = deam_select((3, 3), trace, subs, 0, 0.0, 1e-6, rng, ResidualTracker())
        ent = np.asarray(info["entropies"])
        hits += a == info["candidates"][int(np.argmax(ent))]
    # two symmetric deviations have equal entropy
    real = _Proposer(np.array([0.0, -1.0, 0, 0, 0, 0, 0, 0]) + 50, 0)
    fake = _Proposer(np.array([-1.0, 0.0, 0, 0, 0, 0, 0, 0]) + 50, 1)
    flat = BeliefTrace(np.array([0.5, 0.5]))
    counts = np.zeros(2, dtype=int)
    for _ in range(1000):
        a, _, _, _ = deam_select((0, 0), flat, [real, fake], 0, 0.0, 1.0, rng, ResidualTracker())
        counts[a] += 1
    sigma = math.sqrt(1000 * 0.25)
    uniform = bool(np.all(np.abs(counts - 500) < 5 * sigma))
    ok = report(7, hits >= 999 and uniform,
                f"tau=1e-6 argmax share {hits / 1000:.3f}, tau=1 equal-entropy counts {counts.tolist()}")
    assert ok


def _buffers_agree(subagents) -> bool:
    c = [sa.buffer.contents() for sa in subagents]
    return all(np.array_equal(c[0].s, x.s) and np.array_equal(c[0].a, x.a) and np.array_equal(c[0].s_next, x.s_next)
               and np.array_equal(c[0].terminal, x.terminal) and len(x) == len(c[0]) for x in c[1:])


def test_8_shared_replay_contract(suite, report):
    runs, _ = suite
    results = [r["deam"] for r in runs]
    small = AcConfig(hidden=(16, 16), minibatch=16)
    base = open_scenario(size=7, goals=((6, 6), (0, 6), (6, 0)))
    cfg = DeamConfig(episodes=3, horizon=60, eval_points=0)
    results.append(train_deam(base, cfg, "ac", ac=small))
    results.append(train_deam(base.to_continuous(), cfg, "ac", ac=small))
    agree = [_buffers_agree(r.subagents) for r in results]
    differ = all(not np.array_equal(r.subagents[0].buffer.contents().r, r.subagents[1].buffer.contents().r)
                 for r in results)
    ok = report(8, all(agree) and differ,
                f"{sum(agree)}/{len(agree)} runs with identical (s, a, s', terminal) in every buffer")
    assert ok


def _synthetic_batch(scn, mode, n=100, seed=0):
    rng = np.random.default_rng(seed)
    if mode == "discrete":
        s = rng.integers(0, scn.map.width, size=(n, 2)).astype(float)
        a = rng.integers(0, N_ACTIONS, size=n)
        s2 = np.clip(s + MOVES[a], 0, scn.map.width - 1)
    else:
        s = rng.uniform(0, scn.map.width, size=(n, 2))
        a = np.stack([rng.uniform(0, 2 * np.pi, n), rng.uniform(-1, 1, n)], axis=1)
        step = np.stack([a[:, 1] * np.cos(a[:, 0]), a[:, 1] * np.sin(a[:, 0])], axis=1)
        s2 = np.clip(s + step, 0, scn.map.width)
    return Batch(s, a, s2, -rng.uniform(0.5, 2.0, n), rng.random(n) < 0.1)


def _max_rel_error(net, loss_grad, h=1e-5, floor=1e-7):
    # floor: central differences carry about 1e-11 absolute rounding noise
    _, grads = loss_grad()[:2]
    worst = 0.0
    for p, g in zip(net.params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_grad()[0]
            p[idx] = old - h
            down = loss_grad()[0]
            p[idx] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), floor))
    return worst


def test_9_gradient_check(report):
    errors = {}
    for mode in ("discrete", "continuous"):
        scn = open_scenario(size=9, goals=((8, 8), (0, 8)))
        scn = scn if mode == "discrete" else scn.to_continuous()
        sa = make_ac_subagent(scn, 0, AcConfig(hidden=(64, 64)), seed=3)
        batch = _synthetic_batch(scn, mode)
        rng = np.random.default_rng(5)
        noise = (rng.standard_normal((len(batch), 2)), rng.standard_normal((len(batch), 2)))
        errors[f"{mode} critic"] = _max_rel_error(sa.critic, lambda: sa.critic_loss_grad(batch, noise))
        errors[f"{mode} actor"] = _max_rel_error(sa.actor, lambda: sa.actor_loss_grad(batch, noise))
    ok = report(9, max(errors.values()) < 1e-4,
                "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in errors.items()))
    assert ok


def test_10_exploration_overlap(report):
    scn = reference_fixture()
    wins, pairs = 0, []
    for seed in range(5):
        deam = train_deam(scn, DeamConfig(seed=seed, eval_points=0), "tabular")
        mf = pretrain_am(scn, deam.env_steps // scn.k, "tabular", seed)
        d_path = rollout(scn, controller(scn, deam.subagents, "deam", seed)).states
        m_path = rollout(scn, controller(scn, mf.subagents, "am", seed)).states
        d = exploration_overlap(d_path, deam.visits, scn.map)
        m = exploration_overlap(m_path, mf.visits, scn.map)
        wins += d > m
        pairs.append(f"{d:.2f}/{m:.2f}")
    ok = report(10, wins >= 4, f"DEAM overlap above MF-AM for {wins}/5 seeds (DEAM/MF-AM {' '.join(pairs)})")
    assert ok


def _legal(scn, res) -> bool:
    for (p, q), a in zip(zip(res.pirate_path, res.pirate_path[1:]), res.pirate_actions):
        if not scn.map.is_free(q):
            return False
        expected = p if a == WAIT else (p[0] + MOVES[a, 0], p[1] + MOVES[a, 1])
        if q != expected:
            return False
    return True


def test_11_pursuit_direction(suite, report):
    t0 = time.time()
    runs, _ = suite
    captured = {"honest": [], "deam": []}
    violations = 0
    for r in runs:
        scn = r["scn"]
        agents = {"honest": (make_subagents(scn, "vi"), "honest"), "deam": (r["deam"].subagents, "deam")}
        for j in range(13):
            pseed = 1000 + j
            start = random_placement(scn, np.random.default_rng(pseed))
            for name, (subs, kind) in agents.items():
                res = run_pursuit(controller(scn, subs, kind, pseed), scn, start)
                again = run_pursuit(controller(scn, subs, kind, pseed), scn, start)
                replay = run_pursuit(res.agent_actions, scn, start)
                violations += not (_legal(scn, res) and res == again == replay)
                captured[name].append(res.captured)
    dt = time.time() - t0
    h, d = mean(captured["honest"]), mean(captured["deam"])
    n = len(captured["deam"])
    ok = report(11, n >= 100 and d <= h and violations == 0 and dt < 300,
                f"{n} trials per agent, capture honest {h:.3f} vs DEAM {d:.3f}, "
                f"{violations} invariant violations, {dt:.0f}s")
    assert ok


def _sweep_cell(**kw):
    rows, train_fail = [], []
    for scn in symmetric_fixtures():
        for seed in EVAL_SEEDS:
            cfg = DeamConfig(episodes=100, horizon=300, seed=seed, eval_points=0, **kw)
            res = train_deam(scn, cfg, "tabular")
            train_fail += [not e["reached_real"] for e in res.log]
            rec = rollout(scn, controller(scn, res.subagents, "deam", seed, cfg.delta), horizon=300)
            rows.append(metric_row(rec, scn))
    s = summarize(rows)
    s["train_failure_rate"] = mean(train_fail)
    return s


def test_12_sweep_directions(report):
    base = _sweep_cell(delta=0.0, tau0=1.0, tau_decay=0.9)
    loose = _sweep_cell(delta=-25.0, tau0=1.0, tau_decay=0.9)
    cold = _sweep_cell(delta=0.0, tau0=0.01, tau_decay=0.9)
    delta_ok = loose["failure_rate"] > base["failure_rate"]
    tau_ok = cold["cost_ratio"] >= base["cost_ratio"]
    ok = report(12, delta_ok and tau_ok,
                f"failure rate delta=-25 {loose['failure_rate']:.2f} vs delta=0 {base['failure_rate']:.2f} "
                f"({'ok' if delta_ok else 'wrong direction'}); cost ratio tau0=0.01 {cold['cost_ratio']:.4f} vs "
                f"tau0=1 {base['cost_ratio']:.4f} ({'ok' if tau_ok else 'wrong direction'})")
    assert ok


def test_13_ldp(suite, report):
    examples = [
        compute_ldp(record([0.5, 0.4, 0.3, 0.4, 0.45, 0.5, 0.3, 0.7, 0.8, 0.9])) == (6, 3),
        compute_ldp(record([0.6] * 10)) == (-1, 10),
        compute_ldp(record([0.5] * 9 + [0.4])) == (9, 0),
    ]
    runs, _ = suite
    honest = [r["rows"]["honest"][0].steps_after_ldp for r in runs]
    deam = [mean(m.steps_after_ldp for m in r["rows"]["deam"] if m.reached_real) for r in runs]
    wins = sum(h >= d for h, d in zip(honest, deam))
    ok = report(13, all(examples) and wins >= 6,
                f"examples {sum(examples)}/3, honest >= DEAM steps after LDP on {wins}/8 "
                f"(means {mean(honest):.1f} vs {mean(deam):.1f})")
    assert ok
