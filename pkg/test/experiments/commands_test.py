import sys
import os

# Add the project root to `sys.path`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../..")))

import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from src.energy_metrics import run_summary
from src.envs.trace import read_trace_csv
from src.experiments.commands import (
    aggregate_curves,
    bin_curve,
    cmd_compare,
    cmd_curves,
    cmd_rollout,
    cmd_sweep,
    cmd_train,
    parse_joint_range,
    settle_time,
    sweep_summary,
    trial_seed,
)
from src.experiments.config import RunConfig, physical_dict
from src.general_utils import checkpoint_metadata, load_checkpoint, save_checkpoint
from src.models.policy.gaussian import init_critic, init_policy
from src.trainer.ppo import PpoConfig


def tiny_config(out_dir, n_joints=3, max_steps=10, **training):
    config = RunConfig().with_joints(n_joints).with_training(save_folder=str(out_dir), **training)
    return replace(
        config,
        episode=replace(config.episode, max_steps=max_steps),
        ppo=PpoConfig(rollout_horizon=6, minibatch_size=3, epochs=1, total_timesteps=12),
    )


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def write_agent(config, path, seed=0):
    g = torch.Generator().manual_seed(seed)
    policy, critic = init_policy(9, 1, g), init_critic(9, g)
    save_checkpoint(str(path), policy, critic, checkpoint_metadata(policy, "ppo", "shared_speed", physical_dict(config)))
    return str(path)


def test_trial_seed_and_joint_range():
    assert trial_seed(0, 3) == 3
    assert trial_seed(7, 2, n_joints=5) == 5009
    assert parse_joint_range("5..18") == (5, 18)
    assert parse_joint_range("4") == (4, 4)
    for bad in ("9..3", "0..2", "a..b"):
        with pytest.raises(ValueError):
            parse_joint_range(bad)


def test_rollout_outputs_recompute_offline(tmp_path):
    config = tiny_config(tmp_path)
    report = cmd_rollout(config)
    for name in ("trace.csv", "energy_report.csv", "energy_summary.txt"):
        assert (tmp_path / name).exists()
    trace = read_trace_csv(str(tmp_path / "trace.csv"))
    again = run_summary(trace, config.episode)
    assert again.total_power == report.total_power
    assert again.average_power == report.average_power
    np.testing.assert_array_equal(again.per_joint_power, report.per_joint_power)
    rows = read_rows(tmp_path / "energy_report.csv")
    assert rows[1][0] == "serpenoid"
    assert float(rows[1][5]) == report.total_power


def test_default_serpenoid_reaches_the_goal_on_course(tmp_path):
    config = RunConfig().with_training(save_folder=str(tmp_path))
    config = replace(config, episode=replace(config.episode, max_steps=3600))
    report = cmd_rollout(config)
    assert report.n_joints == 17
    assert report.time_to_goal is not None and report.time_to_goal <= 120.0
    trace = read_trace_csv(str(tmp_path / "trace.csv"))
    assert np.all(np.abs(trace.centroid[:, 0]) <= 1.5)
    assert report.tracking_r2 >= 0.99
    assert "tracking fit" in (tmp_path / "energy_summary.txt").read_text()


def test_settle_time():
    gait = RunConfig().gait
    assert settle_time(gait) == pytest.approx(4 * math.pi / 3)
    assert settle_time(replace(gait, speed=0.0)) == 0.0


def test_still_gait_never_reaches_goal(tmp_path):
    config = tiny_config(tmp_path)
    config = replace(config, gait=replace(config.gait, amplitude=0.0))
    report = cmd_rollout(config)
    assert report.time_to_goal is None
    assert report.total_power == pytest.approx(0.0, abs=1e-9)
    assert "not reached" in (tmp_path / "energy_summary.txt").read_text()


def test_rollout_of_checkpoint(tmp_path):
    config = tiny_config(tmp_path)
    path = write_agent(config, tmp_path / "agent.ckpt")
    report = cmd_rollout(config, path)
    assert report.n_steps == 10 and report.n_joints == 3
    with pytest.raises(ValueError):
        cmd_rollout(config, str(tmp_path / "missing.ckpt"))


def test_compare_identical_controllers(tmp_path):
    config = tiny_config(tmp_path)
    path = write_agent(config, tmp_path / "agent.ckpt")
    rows = cmd_compare(config, [path, path])
    assert rows[0] == rows[1]
    assert rows[1][6] == pytest.approx(0.0)
    written = read_rows(tmp_path / "comparison.csv")
    assert written[0][0] == "controller" and len(written) == 3


def test_compare_against_serpenoid_reference(tmp_path):
    config = tiny_config(tmp_path)
    path = write_agent(config, tmp_path / "agent.ckpt")
    rows = cmd_compare(config, [path, "serpenoid"])
    assert rows[1][0] == "serpenoid"
    assert rows[1][6] == pytest.approx(0.0)


def test_compare_rejects_unfair_setups(tmp_path):
    config = tiny_config(tmp_path)
    slippery = replace(config, friction=replace(config.friction, c_n=1.0))
    path = write_agent(slippery, tmp_path / "slippery.ckpt")
    with pytest.raises(ValueError):
        cmd_compare(config, ["serpenoid", path])
    with pytest.raises(ValueError):
        cmd_compare(config, ["serpenoid"])


def test_train_writes_run_folder(tmp_path):
    config = tiny_config(tmp_path / "run", max_steps=5)
    result = cmd_train(config, progress=False)
    run = tmp_path / "run"
    for name in ("training_config.json", "evaluation.json", "rewards.csv", "final.ckpt"):
        assert (run / name).exists()
    assert load_checkpoint(result.checkpoint_path).physical == json.loads(json.dumps(physical_dict(config)))
    with pytest.raises(ValueError):
        cmd_train(config.with_training(algo="serpenoid"))


def test_sweep_rows_and_determinism(tmp_path):
    outputs = []
    for name in ("a", "b"):
        config = tiny_config(tmp_path / name, max_steps=6)
        rows, summary = cmd_sweep(config, joints=(3, 4), trials=1)
        assert [(r[0], r[1], r[2]) for r in rows] == [
            (3, "ppo", 0),
            (3, "serpenoid", 0),
            (4, "ppo", 0),
            (4, "serpenoid", 0),
        ]
        assert summary["ppo_min_joints"] in (3, 4)
        assert (tmp_path / name / "sweep_summary.json").exists()
        outputs.append((tmp_path / name / "sweep.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_sweep_summary():
    rows = [
        [5, "ppo", 0, 0.2],
        [5, "serpenoid", 0, 0.4],
        [6, "ppo", 0, 0.1],
        [6, "serpenoid", 0, 0.4],
    ]
    summary = sweep_summary(rows)
    assert summary["baseline_mean_average_power_W"] == pytest.approx(0.4)
    assert summary["baseline_cv"] == pytest.approx(0.0)
    assert summary["ppo_min_joints"] == 6
    assert summary["ppo_min_average_power_W"] == pytest.approx(0.1)


def test_bin_curve():
    grid, values = bin_curve([(3, 1.0), (4, 3.0), (15, 5.0)], 20, 5)
    np.testing.assert_array_equal(grid, [5, 10, 15, 20])
    np.testing.assert_array_equal(values, [2.0, 2.0, 5.0, 5.0])

    grid, values = bin_curve([(7, 1.0)], 10, 4)
    np.testing.assert_array_equal(grid, [4, 8, 10])
    assert math.isnan(values[0])
    np.testing.assert_array_equal(values[1:], [1.0, 1.0])


def test_aggregate_skips_missing_trials():
    rows = aggregate_curves([[(2, 1.0), (6, 3.0)], [(6, 5.0)]], 8, 4)
    assert rows == [[4, 1.0, 0.0], [8, 4.0, 1.0]]
    assert aggregate_curves([], 8, 4) == []


def test_single_trial_curve_has_zero_spread(tmp_path):
    config = tiny_config(tmp_path, max_steps=5, curve_bin_steps=6)
    rows = cmd_curves(config, trials=1)
    assert [r[0] for r in rows] == [6, 12]
    assert all(r[2] == 0.0 for r in rows)
    assert read_rows(tmp_path / "curves.csv")[0] == ["timestep", "mean_return", "std_return"]
    with pytest.raises(ValueError):
        cmd_curves(config, trials=0)


def test_curves_do_not_depend_on_worker_count(tmp_path):
    serial = cmd_curves(tiny_config(tmp_path / "serial", max_steps=5, curve_bin_steps=6), trials=2, workers=1)
    pooled = cmd_curves(tiny_config(tmp_path / "pooled", max_steps=5, curve_bin_steps=6), trials=2, workers=2)
    assert serial == pooled
