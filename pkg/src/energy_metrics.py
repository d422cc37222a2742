import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.envs.snake_env import EpisodeConfig
from src.envs.trace import MalformedTraceError, RolloutTrace

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "n_joints",
    "n_steps",
    "time_to_goal_s",
    "mean_forward_velocity_mps",
    "total_power_W",
    "average_power_W",
]


@dataclass
class EnergyReport:
    per_joint_power: np.ndarray  # W, one q_k per joint
    total_power: float
    average_power: float
    time_to_goal: Optional[float]
    mean_forward_velocity: float
    n_joints: int
    n_steps: int
    tracking_r2: Optional[float] = None  # worst joint; None without recorded targets

    def csv_row(self):
        ttg = "" if self.time_to_goal is None else repr(self.time_to_goal)
        row = [
            self.n_joints,
            self.n_steps,
            ttg,
            repr(self.mean_forward_velocity),
            repr(self.total_power),
            repr(self.average_power),
        ]
        return row + [repr(float(q)) for q in self.per_joint_power]

    def csv_header(self):
        return REPORT_COLUMNS + [f"power_joint_{i}_W" for i in range(1, self.n_joints + 1)]

    def summary(self):
        ttg = "not reached" if self.time_to_goal is None else f"{self.time_to_goal:.3f} s"
        lines = [
            f"joints               : {self.n_joints}",
            f"control steps        : {self.n_steps}",
            f"time to goal         : {ttg}",
            f"mean forward velocity: {self.mean_forward_velocity:.4f} m/s",
            f"total power (q)      : {self.total_power:.6f} W",
            f"average power (q/K)  : {self.average_power:.6f} W",
            "per-joint power [W]  : " + " ".join(f"{q:.4f}" for q in self.per_joint_power),
        ]
        if self.tracking_r2 is not None:
            lines.append(f"tracking fit R^2     : {self.tracking_r2:.4f} (worst joint)")
        return "\n".join(lines)


def joint_energy_rate(torques, rates, dt, signed=False):
    """
    Time-averaged mechanical power of one joint, rectangle rule at the control step.

    Args:
        torques: applied torque per step (N·m).
        rates: joint rate per step (rad/s).
        dt: control step (s).
        signed: integrate tau * rate instead of |tau * rate|.

    Returns:
        q_k in W.
    """
    torques = np.asarray(torques, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if torques.shape != rates.shape:
        raise ValueError(f"torque and rate series differ in shape: {torques.shape} vs {rates.shape}")
    if torques.shape[0] == 0:
        raise ValueError("empty torque/rate series")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    power = torques * rates
    if not signed:
        power = np.abs(power)
    duration = torques.shape[0] * dt
    return (power * dt).sum(axis=0) / duration


def total_power(per_joint):
    per_joint = np.asarray(per_joint, dtype=np.float64)
    if per_joint.size == 0:
        raise ValueError("no joint powers given")
    return float(per_joint.sum())


def average_power(per_joint):
    per_joint = np.asarray(per_joint, dtype=np.float64)
    if per_joint.size == 0:
        raise ValueError("no joint powers given")
    return total_power(per_joint) / per_joint.size


def tracking_r2(angles, targets, dt):
    """
    Per-joint R^2 of recorded joint angles against the commanded ones.

    Each joint is fitted by least squares on [target, d target / dt, 1], so a servo
    that follows the command with a constant gain and phase lag still scores 1;
    only the part of the motion that is not the commanded wave counts as error.

    Args:
        angles: recorded joint angles, (T, K) rad.
        targets: commanded joint angles, (T, K) rad.
        dt: sample spacing (s).

    Returns:
        (K,) array of R^2 values. A joint that never moves scores 1 when its
        command is constant too, else 0.
    """
    angles = np.asarray(angles, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if angles.shape != targets.shape or angles.ndim != 2:
        raise ValueError(f"angles and targets must share a (T, K) shape, got {angles.shape} and {targets.shape}")
    if angles.shape[0] < 3:
        raise ValueError(f"need at least 3 samples to fit, got {angles.shape[0]}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")

    rates = np.gradient(targets, dt, axis=0)
    scores = np.empty(angles.shape[1])
    for k in range(angles.shape[1]):
        basis = np.column_stack([targets[:, k], rates[:, k], np.ones(angles.shape[0])])
        coef, *_ = np.linalg.lstsq(basis, angles[:, k], rcond=None)
        residual = float(((angles[:, k] - basis @ coef) ** 2).sum())
        spread = float(((angles[:, k] - angles[:, k].mean()) ** 2).sum())
        if spread <= 1e-18:
            scores[k] = 1.0 if np.ptp(targets[:, k]) <= 1e-9 else 0.0
        else:
            scores[k] = 1.0 - residual / spread
    return scores


def time_to_goal(trace: RolloutTrace, episode: EpisodeConfig):
    distance = np.linalg.norm(trace.centroid - np.asarray(episode.target), axis=-1)
    inside = np.nonzero(distance[1:] <= episode.goal_radius)[0]
    if inside.size == 0:
        return None
    return float(trace.time[inside[0] + 1])


def mean_forward_velocity(trace: RolloutTrace, episode: EpisodeConfig):
    elapsed = trace.time[-1] - trace.time[0]
    direction = np.asarray(episode.target) - trace.centroid[0]
    norm = np.linalg.norm(direction)
    if elapsed <= 0 or norm == 0:
        return 0.0
    return float((trace.centroid[-1] - trace.centroid[0]) @ (direction / norm) / elapsed)


def run_summary(trace: RolloutTrace, episode: EpisodeConfig = None, signed=False, warmup_s=0.0):
    """
    Energy report of one recorded episode. When the trace carries commanded
    angles, the worst per-joint tracking R^2 after ``warmup_s`` seconds is included.
    """
    episode = episode or EpisodeConfig()
    if not isinstance(trace, RolloutTrace):
        raise MalformedTraceError(f"expected a RolloutTrace, got {type(trace).__name__}")
    trace.validate()
    per_joint = joint_energy_rate(
        trace.joint_torque[1:], trace.joint_rate[1:], trace.dt, signed=signed
    )
    return EnergyReport(
        per_joint_power=per_joint,
        total_power=total_power(per_joint),
        average_power=average_power(per_joint),
        time_to_goal=time_to_goal(trace, episode),
        mean_forward_velocity=mean_forward_velocity(trace, episode),
        n_joints=trace.n_joints,
        n_steps=trace.n_steps,
        tracking_r2=_worst_tracking(trace, warmup_s),
    )


def _worst_tracking(trace: RolloutTrace, warmup_s):
    if trace.joint_target is None:
        return None
    keep = trace.time - trace.time[0] > warmup_s
    keep[0] = False  # reset row
    if keep.sum() < 3:
        return None
    return float(tracking_r2(trace.joint_angle[keep], trace.joint_target[keep], trace.dt).min())


def speed_ratios(candidate: EnergyReport, reference: EnergyReport):
    """
    Speed gain of ``candidate`` over ``reference`` in both conventions, as percentages:
    from mean velocities (v_c / v_r - 1) and from goal times (t_r / t_c - 1).
    Entries are None when the needed quantity is missing or zero.
    """
    by_velocity = None
    if reference.mean_forward_velocity != 0:
        by_velocity = 100.0 * (candidate.mean_forward_velocity / reference.mean_forward_velocity - 1.0)
    by_time = None
    if candidate.time_to_goal and reference.time_to_goal:
        by_time = 100.0 * (reference.time_to_goal / candidate.time_to_goal - 1.0)
    return {"velocity_pct": by_velocity, "time_pct": by_time}


def power_saving(candidate: EnergyReport, reference: EnergyReport):
    if reference.total_power == 0:
        return None
    return 100.0 * (1.0 - candidate.total_power / reference.total_power)
