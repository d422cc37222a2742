import sys
import os

# Add the project root to `sys.path`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from src.energy_metrics import (
    EnergyReport,
    average_power,
    joint_energy_rate,
    power_saving,
    run_summary,
    speed_ratios,
    total_power,
    tracking_r2,
)
from src.envs.snake_env import EpisodeConfig
from src.envs.trace import MalformedTraceError, RolloutTrace

DT = 1.0 / 30.0


def make_trace(n_steps, torque, rate, centroid_y=None):
    rows = n_steps + 1
    torque = np.tile(np.asarray(torque, dtype=np.float64), (rows, 1))
    rate = np.tile(np.asarray(rate, dtype=np.float64), (rows, 1))
    torque[0] = 0.0
    centroid = np.zeros((rows, 2))
    if centroid_y is not None:
        centroid[:, 1] = centroid_y
    return RolloutTrace(
        time=np.arange(rows) * DT,
        head=np.zeros((rows, 2)),
        centroid=centroid,
        reward=np.zeros(rows),
        done=np.zeros(rows, dtype=bool),
        joint_angle=np.zeros(torque.shape),
        joint_rate=rate,
        joint_torque=torque,
    )


def test_joint_energy_rate_examples():
    assert joint_energy_rate([2.0] * 7, [0.25] * 7, DT) == pytest.approx(0.5)
    assert joint_energy_rate([2.0, -1.0], [0.0, 0.0], DT) == 0.0
    assert joint_energy_rate([1.0, -1.0], [1.0, 1.0], 1.0) == pytest.approx(1.0)
    assert joint_energy_rate([1.0, -1.0], [1.0, 1.0], 1.0, signed=True) == pytest.approx(0.0)


def test_joint_energy_rate_errors():
    with pytest.raises(ValueError):
        joint_energy_rate([], [], DT)
    with pytest.raises(ValueError):
        joint_energy_rate([1.0], [1.0, 2.0], DT)
    with pytest.raises(ValueError):
        joint_energy_rate([1.0], [1.0], 0.0)


def test_total_and_average():
    assert total_power([0.1, 0.2, 0.3]) == pytest.approx(0.6)
    assert average_power([0.1, 0.2, 0.3]) == pytest.approx(0.2)
    assert total_power([0.4]) == average_power([0.4]) == 0.4
    assert average_power([0.7] * 5) == pytest.approx(0.7)
    assert total_power([0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        total_power([])
    with pytest.raises(ValueError):
        average_power([])


def test_scale_law_and_time_invariance():
    rng = np.random.default_rng(0)
    torques = rng.normal(size=(50, 3))
    rates = rng.normal(size=(50, 3))
    q = joint_energy_rate(torques, rates, DT)
    np.testing.assert_allclose(joint_energy_rate(2 * torques, rates, DT), 2 * q, rtol=1e-12)
    twice = joint_energy_rate(np.vstack([torques, torques]), np.vstack([rates, rates]), DT)
    np.testing.assert_allclose(twice, q, rtol=1e-12)
    assert np.all(q >= 0)


def test_summary_of_still_robot():
    report = run_summary(make_trace(30, [0.0, 0.0], [0.0, 0.0], centroid_y=2.125), EpisodeConfig())
    assert report.total_power == 0.0 and report.average_power == 0.0
    assert report.time_to_goal is None
    assert report.mean_forward_velocity == 0.0
    assert report.n_joints == 2 and report.n_steps == 30


def test_summary_constant_power_single_joint():
    report = run_summary(make_trace(10, [0.8], [0.5]), EpisodeConfig())
    assert report.average_power == pytest.approx(0.4)
    assert report.total_power == pytest.approx(0.4)
    assert report.total_power == pytest.approx(report.per_joint_power.sum(), abs=1e-9)


def test_goal_time_and_velocity():
    # 10 m in 28.2 s toward the default target
    n_steps = 846
    y = np.linspace(0.0, -10.0, n_steps + 1)
    report = run_summary(make_trace(n_steps, [0.0], [0.0], centroid_y=y), EpisodeConfig())
    assert report.mean_forward_velocity == pytest.approx(10.0 / 28.2, rel=1e-9)
    assert report.mean_forward_velocity == pytest.approx(0.355, abs=1e-3)
    first = np.nonzero(np.abs(y - -10.0) <= 0.5)[0][0]
    assert report.time_to_goal == pytest.approx(first * DT)


def test_malformed_trace():
    with pytest.raises(MalformedTraceError):
        run_summary({"time": []})


def test_ratios_and_saving():
    fast = EnergyReport(np.array([0.152]), 0.152, 0.152, 28.2, 0.35, 1, 846)
    slow = EnergyReport(np.array([0.247]), 0.247, 0.247, 33.0, 0.30, 1, 990)
    ratios = speed_ratios(fast, slow)
    assert ratios["velocity_pct"] == pytest.approx(100 * (0.35 / 0.30 - 1))
    assert ratios["time_pct"] == pytest.approx(100 * (33.0 / 28.2 - 1))
    assert power_saving(fast, slow) == pytest.approx(100 * (1 - 0.152 / 0.247))
    never = EnergyReport(np.array([0.1]), 0.1, 0.1, None, 0.0, 1, 10)
    assert speed_ratios(never, slow)["time_pct"] is None


def test_report_row_matches_header():
    report = EnergyReport(np.array([0.1, 0.2]), 0.3, 0.15, None, 0.2, 2, 10)
    assert len(report.csv_row()) == len(report.csv_header())
    assert report.csv_row()[2] == ""
    assert "not reached" in report.summary()


def test_tracking_fit_forgives_gain_and_lag():
    t = np.arange(600) * DT
    targets = np.column_stack([0.6 * np.sin(3.0 * t), 0.6 * np.sin(3.0 * t - 1.0)])
    lagged = np.column_stack([0.45 * np.sin(3.0 * t - 0.4), 0.5 * np.sin(3.0 * t - 1.3) + 0.02])
    scores = tracking_r2(lagged, targets, DT)
    assert scores.shape == (2,)
    assert np.all(scores > 0.999)


def test_tracking_fit_penalizes_foreign_motion():
    t = np.arange(600) * DT
    targets = 0.6 * np.sin(3.0 * t)[:, None]
    distorted = targets + 0.2 * np.sin(9.0 * t)[:, None]
    # a third harmonic of 0.2 against a 0.6 wave leaves 0.04 / 0.40 of the variance unexplained
    assert tracking_r2(distorted, targets, DT)[0] == pytest.approx(0.9, abs=0.01)


def test_tracking_fit_edge_cases():
    still = np.zeros((10, 2))
    np.testing.assert_array_equal(tracking_r2(still, still, DT), [1.0, 1.0])
    commanded = still.copy()
    commanded[:, 1] = np.linspace(0.0, 1.0, 10)
    np.testing.assert_array_equal(tracking_r2(still, commanded, DT), [1.0, 0.0])
    with pytest.raises(ValueError):
        tracking_r2(np.zeros((10, 2)), np.zeros((10, 3)), DT)
    with pytest.raises(ValueError):
        tracking_r2(np.zeros((2, 1)), np.zeros((2, 1)), DT)


def test_summary_reports_tracking_after_warmup():
    trace = make_trace(90, [1.0], [0.5])
    assert run_summary(trace).tracking_r2 is None
    trace.joint_target = np.sin(3.0 * trace.time)[:, None]
    trace.joint_angle = 0.8 * np.sin(3.0 * trace.time - 0.2)[:, None]
    report = run_summary(trace, warmup_s=1.0)
    assert report.tracking_r2 > 0.999
    assert "tracking fit" in report.summary()
    assert run_summary(trace, warmup_s=10.0).tracking_r2 is None
