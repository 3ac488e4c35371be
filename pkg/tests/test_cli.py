import csv
import math
import os

import pytest

from decoynav import cli
from decoynav.agents import TrainingDivergence
from decoynav.config import RunConfig, build_scenario, build_scenarios, load_config, mix_seed
from decoynav.io import read_manifest, read_metric_rows, read_trajectory
from decoynav.metrics import metric_row, path_cost_ratio
from decoynav.validation import ConfigError

DEAM_INI = """
[scenario]
source = fixture:sym11_open
[agent]
kind = deam
backend = tabular
[deam]
episodes = 30
horizon = 400
eval_points = 3
[eval]
seeds = 0,1
horizon = 400
"""

HONEST_INI = """
[scenario]
source = {source}
[agent]
kind = honest
backend = vi
[eval]
seeds = 0,1
[pursuit]
placements = 10
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def deam_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("deam")
    cfg = write(tmp, DEAM_INI)
    assert run("train", "--config", cfg, "--seed", 5, "--out", tmp / "a") == 0
    return tmp, cfg


# ---------------------------------------------------------------------------
# train


def test_train_writes_artifacts(deam_run):
    tmp, _ = deam_run
    out = tmp / "a"
    for f in ("checkpoints/sym11_open.ckpt", "training_log_sym11_open.csv", "training_curve_sym11_open.csv",
              "heatmap_sym11_open.csv", "heatmap_sym11_open.svg", "training_curve.svg", "manifest.txt"):
        assert (out / f).is_file(), f
    log = rows(out / "training_log_sym11_open.csv")
    assert len(log) == 30
    assert list(log[0]) == ["episode", "steps", "path_cost", "tau", "mean_real_posterior", "reached_real"]
    assert [int(r["episode"]) for r in log] == list(range(1, 31))
    heat = [list(map(int, line.split(","))) for line in (out / "heatmap_sym11_open.csv").read_text().splitlines()]
    assert len(heat) == 11 and all(len(r) == 11 for r in heat)
    assert sum(map(sum, heat)) == sum(int(r["steps"]) for r in log) + 30
    man = read_manifest(out / "manifest.txt")
    assert man["seed"] == "5" and man["command"] == "train" and man["config_hash"] == load_config(deam_run[1]).hash()


def test_train_is_byte_identical_across_runs(deam_run):
    tmp, cfg = deam_run
    assert run("train", "--config", cfg, "--seed", 5, "--out", tmp / "b") == 0
    for f in ("training_log_sym11_open.csv", "training_curve_sym11_open.csv", "heatmap_sym11_open.csv",
              "checkpoints/sym11_open.ckpt", "manifest.txt"):
        assert (tmp / "a" / f).read_bytes() == (tmp / "b" / f).read_bytes(), f


def test_vi_am_in_continuous_mode_is_a_config_error(tmp_path, capsys):
    text = HONEST_INI.format(source="fixture:sym11_open").replace("honest", "vi-am")
    cfg = write(tmp_path, text)
    assert run("train", "--config", cfg, "--seed", 0, "--out", tmp_path / "o", "--set", "scenario.mode=continuous") == 2
    assert "continuous" in capsys.readouterr().err


def test_divergence_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise TrainingDivergence("non-finite loss", {"critic_loss": math.nan})

    monkeypatch.setattr(cli, "train_deam", boom)
    assert run("train", "--config", write(tmp_path, DEAM_INI), "--seed", 0, "--out", tmp_path / "o") == 3


def test_missing_config_and_unwritable_out(tmp_path):
    assert run("train", "--config", tmp_path / "none.ini", "--seed", 0, "--out", tmp_path / "o") == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("train", "--config", write(tmp_path, DEAM_INI), "--seed", 0, "--out", blocker / "o") == 4


# ---------------------------------------------------------------------------
# eval


def test_eval_of_deam_checkpoint(deam_run):
    tmp, cfg = deam_run
    out = tmp / "eval"
    assert run("eval", "--config", cfg, "--seed", 1, "--out", out, "--checkpoint", tmp / "a" / "checkpoints") == 0
    metrics = read_metric_rows(out / "metrics.csv")
    assert [(m.scenario_id, m.seed) for m in metrics] == [("sym11_open", 0), ("sym11_open", 1)]
    scn = build_scenario(load_config(cfg))
    for m in metrics:
        rec = read_trajectory(out / "trajectories" / f"sym11_open_seed{m.seed}.csv")
        again = metric_row(rec, scn)
        assert again.mean_real_prob == pytest.approx(m.mean_real_prob, abs=1e-6)
        assert again.steps_after_ldp == m.steps_after_ldp
    assert (out / "summary.csv").is_file() and (out / "real_goal_curves.svg").is_file()


def test_eval_accepts_a_single_checkpoint_file(deam_run):
    tmp, cfg = deam_run
    ck = tmp / "a" / "checkpoints" / "sym11_open.ckpt"
    assert run("eval", "--config", cfg, "--seed", 1, "--out", tmp / "eval1", "--checkpoint", ck) == 0
    assert (tmp / "eval1" / "metrics.csv").read_bytes() == (tmp / "eval" / "metrics.csv").read_bytes()


def test_honest_eval_on_15x15_has_unit_cost_ratio(tmp_path):
    cfg = write(tmp_path, HONEST_INI.format(source="fixture:sym15_wall"))
    assert run("train", "--config", cfg, "--seed", 0, "--out", tmp_path / "t") == 0
    assert run("eval", "--config", cfg, "--seed", 0, "--out", tmp_path / "e", "--checkpoint", tmp_path / "t" / "checkpoints") == 0
    scn = build_scenario(load_config(cfg))
    for m in read_metric_rows(tmp_path / "e" / "metrics.csv"):
        rec = read_trajectory(tmp_path / "e" / "trajectories" / f"sym15_wall_seed{m.seed}.csv")
        assert m.reached_real and abs(path_cost_ratio(rec, scn) - 1.0) < 1e-9


def test_missing_checkpoint_is_io_error(deam_run, capsys):
    tmp, cfg = deam_run
    assert run("eval", "--config", cfg, "--seed", 0, "--out", tmp / "x", "--checkpoint", tmp / "nowhere") == 4
    assert "nowhere" in capsys.readouterr().err


def test_hash_mismatch_is_refused(deam_run, capsys):
    tmp, cfg = deam_run
    code = run("eval", "--config", cfg, "--seed", 0, "--out", tmp / "x", "--checkpoint", tmp / "a" / "checkpoints",
               "--set", "deam.episodes=31")
    assert code == 2
    assert "refusing checkpoint" in capsys.readouterr().err


def test_eval_seed_does_not_enter_the_hash(deam_run):
    tmp, cfg = deam_run
    code = run("eval", "--config", cfg, "--seed", 0, "--out", tmp / "y", "--checkpoint", tmp / "a" / "checkpoints",
               "--set", "deam.seed=99", "--set", "eval.seeds=4")
    assert code == 0


# ---------------------------------------------------------------------------
# pursue


@pytest.fixture(scope="module")
def honest_suite(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("honest")
    cfg = write(tmp, HONEST_INI.format(source="suite:random:4:9"))
    assert run("train", "--config", cfg, "--seed", 0, "--out", tmp / "t") == 0
    return tmp, cfg


def test_pursue_batch_size_and_summary(honest_suite):
    tmp, cfg = honest_suite
    assert run("pursue", "--config", cfg, "--seed", 3, "--out", tmp / "p", "--checkpoint", tmp / "t" / "checkpoints") == 0
    got = rows(tmp / "p" / "pursuit.csv")
    assert len(got) == 40
    assert len({r["scenario_id"] for r in got}) == 4
    summary = rows(tmp / "p" / "pursuit_summary.csv")
    assert [r["scenario_id"] for r in summary][-1] == "all"
    assert int(summary[-1]["trials"]) == 40
    rate = sum(r["captured"] == "true" for r in got) / 40
    assert float(summary[-1]["capture_rate"]) == pytest.approx(rate, abs=1e-6)


def test_pursue_parallel_matches_serial(honest_suite):
    tmp, cfg = honest_suite
    ck = tmp / "t" / "checkpoints"
    run("pursue", "--config", cfg, "--seed", 3, "--out", tmp / "p1", "--checkpoint", ck)
    run("pursue", "--config", cfg, "--seed", 3, "--out", tmp / "p2", "--checkpoint", ck, "--set", "eval.workers=3")
    assert (tmp / "p1" / "pursuit.csv").read_bytes() == (tmp / "p2" / "pursuit.csv").read_bytes()


def test_several_scenarios_need_a_directory(honest_suite):
    tmp, cfg = honest_suite
    ck = next((tmp / "t" / "checkpoints").iterdir())
    assert run("pursue", "--config", cfg, "--seed", 0, "--out", tmp / "z", "--checkpoint", ck) == 2


# ---------------------------------------------------------------------------
# sweep

SWEEP_INI = """
[scenario]
source = suite:random:2:9
[agent]
kind = deam
backend = tabular
[deam]
episodes = 10
horizon = 150
eval_points = 0
[eval]
seeds = 0,1
horizon = 150
[sweep]
delta = 0,-25
"""


def test_sweep_rows_per_seed(tmp_path):
    cfg = write(tmp_path, SWEEP_INI)
    assert run("sweep", "--config", cfg, "--seed", 7, "--out", tmp_path / "s") == 0
    got = rows(tmp_path / "s" / "sweep.csv")
    assert len(got) == 4
    for es in ("0", "1"):
        cells = [r for r in got if r["eval_seed"] == es]
        assert sorted(float(r["delta"]) for r in cells) == [-25.0, 0.0]
    assert [int(r["seed"]) for r in got] == [mix_seed(7, i) for i in range(4)]
    assert all(r["runs"] == "2" for r in got)
    assert run("sweep", "--config", cfg, "--seed", 7, "--out", tmp_path / "s2", "--set", "eval.workers=2") == 0
    assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "s2" / "sweep.csv").read_bytes()


def test_sweep_without_grid_is_config_error(tmp_path):
    cfg = write(tmp_path, SWEEP_INI.split("[sweep]")[0])
    assert run("sweep", "--config", cfg, "--seed", 0, "--out", tmp_path / "s") == 2


# ---------------------------------------------------------------------------
# configuration


def test_defaults_and_overrides():
    cfg = load_config(text="", overrides=["deam.delta=-5", "eval.seeds=3,4", "ac.hidden=32,16", "agent.backend=vi",
                                          "agent.kind=honest"])
    assert cfg.deam.delta == -5.0 and cfg.eval_seeds == (3, 4) and cfg.ac.hidden == (32, 16)
    assert cfg.source == RunConfig().source


@pytest.mark.parametrize("text, overrides", [
    ("[nonsense]\nx = 1\n", ()),
    ("[deam]\nepisodes = many\n", ()),
    ("[deam]\ntau0 = 0\n", ()),
    ("[deam]\nunknown = 1\n", ()),
    ("", ("agent.kind=bogus",)),
    ("", ("agent.kind=mf-am", "agent.backend=vi")),
    ("", ("noequals",)),
    ("", ("sweep.alpha=1",)),
    ("", ("pursuit.capture=nearby",)),
    ("[scenario\n", ()),
])
def test_config_errors(text, overrides):
    with pytest.raises(ConfigError):
        load_config(text=text, overrides=overrides)


def test_hash_ignores_seed_only():
    a = load_config(text="")
    assert a.hash() == load_config(text="", overrides=["deam.seed=12"]).hash()
    assert a.hash() == load_config(text="", overrides=["eval.seeds=8"]).hash()
    assert a.hash() != load_config(text="", overrides=["deam.delta=-1"]).hash()
    # backend settings that are not in use do not matter
    assert a.hash() == load_config(text="", overrides=["ac.lr=0.1"]).hash()


def test_scenario_sources(tmp_path):
    assert len(build_scenarios(load_config(text="", overrides=["scenario.source=suite:symmetric"]))) == 8
    rnd = build_scenarios(load_config(text="", overrides=["scenario.source=suite:random:3:9"]), seed=1)
    assert len(rnd) == 3 and all(s.map.width == 9 for s in rnd)
    gen = build_scenario(load_config(text="", overrides=["scenario.source=generate:maze:11:4"]))
    assert gen.map.width == 11
    p = tmp_path / "m.txt"
    p.write_text("S..\n...\n.FG\n")
    assert build_scenario(load_config(text="", overrides=[f"scenario.source=map:{p}"])).k == 2
    cont = load_config(text="", overrides=["scenario.mode=continuous", "agent.backend=ac"])
    assert build_scenario(cont).mode == "continuous"
    for bad in ("fixture:nope", "generate:spiral:11", "generate:maze:5", "elsewhere:x", "suite:random:0"):
        with pytest.raises(ConfigError):
            build_scenarios(load_config(text="", overrides=[f"scenario.source={bad}"]))


def test_mix_seed():
    assert mix_seed(0, 0) == 0xF4DBDF21  # crc32 of "0"
    assert mix_seed(5, 3) == mix_seed(3, 3) ^ 6
    assert len({mix_seed(1, i) for i in range(100)}) == 100


def test_shipped_configs_load():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    for name in sorted(os.listdir(root)):
        load_config(os.path.join(root, name))
