import logging
from dataclasses import dataclass, field

import numpy as np

from src.models.snake.dynamics import (
    DynamicsConfig,
    FrictionModel,
    RobotConfig,
    ServoGains,
    build_robot_from_config,
    step,
)
from src.models.snake.gait import GaitParams, amplitude_envelope, serpenoid_from_phase, steering_bias
from src.models.snake.utils import (
    centroid,
    centroid_heading,
    centroid_velocity,
    joint_angles,
    joint_rates,
    wrap_angle,
)

log = logging.getLogger(__name__)

OBSERVATION_SIZE = 9
ACTION_MODES = ("shared_speed", "per_group")
TRAVEL_WINDOW = 0.5  # s, smoothing of the centroid velocity used for heading hold
TRAVEL_FLOOR = 0.05  # m/s, below this the body axis stands in for the direction of travel


class EnvNotResetError(RuntimeError):
    pass


@dataclass
class EpisodeConfig:
    target: tuple = (0.0, -10.0)
    goal_radius: float = 0.5
    max_steps: int = 3000
    lateral_bound: float = 1.5
    lateral_penalty: float = -100.0
    goal_reward: float = 100.0
    omega_range: tuple = (0.1, 6.0)
    action_mode: str = "shared_speed"
    action_dim: int = 9  # number of speed groups in per_group mode

    def __post_init__(self):
        # json hands us lists
        self.target = tuple(float(v) for v in self.target)
        self.omega_range = tuple(float(v) for v in self.omega_range)
        if len(self.target) != 2:
            raise ValueError(f"target must be a 2-vector, got {self.target}")
        if not self.goal_radius > 0:
            raise ValueError(f"goal_radius must be > 0, got {self.goal_radius}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if len(self.omega_range) != 2 or not 0 < self.omega_range[0] < self.omega_range[1]:
            raise ValueError(f"omega_range must satisfy 0 < min < max, got {self.omega_range}")
        if self.action_mode not in ACTION_MODES:
            raise ValueError(f"action_mode must be one of {ACTION_MODES}, got {self.action_mode!r}")
        if self.action_dim < 1:
            raise ValueError(f"action_dim must be >= 1, got {self.action_dim}")

    @property
    def action_size(self):
        return 1 if self.action_mode == "shared_speed" else self.action_dim


def observe(state, episode: EpisodeConfig):
    """
    The 9 observation values: head x, y, sin/cos heading, centroid x, y, sin/cos of the
    mean link heading, and the centroid velocity projected on the direction to the target.
    """
    head_heading = state.heading[0]
    c = centroid(state)
    c_heading = centroid_heading(state)
    to_target = np.asarray(episode.target) - c
    distance = np.linalg.norm(to_target)
    forward = 0.0
    if distance > 0:
        forward = float(centroid_velocity(state) @ (to_target / distance))
    return np.array(
        [
            state.position[0, 0],
            state.position[0, 1],
            np.sin(head_heading),
            np.cos(head_heading),
            c[0],
            c[1],
            np.sin(c_heading),
            np.cos(c_heading),
            forward,
        ]
    )


def reward(progress, forward_velocity, reached_goal, goal_reward=100.0):
    if reached_goal:
        return goal_reward
    return max(progress, 0.0) + forward_velocity - 1.0


def speeds_from_action(values, episode: EpisodeConfig):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.shape[0] != episode.action_size:
        raise ValueError(
            f"{episode.action_mode} expects {episode.action_size} action values, got {values.shape[0]}"
        )
    values = np.clip(values, -1.0, 1.0)
    omega_min, omega_max = episode.omega_range
    return 0.5 * (omega_min + omega_max) + 0.5 * (omega_max - omega_min) * values


def joint_speeds(speeds, n_joints):
    """Spread group speeds linearly over the joints, head group first."""
    speeds = np.asarray(speeds, dtype=np.float64).reshape(-1)
    if speeds.shape[0] == 1:
        return np.full(n_joints, speeds[0])
    if n_joints == 1:
        return np.array([speeds.mean()])
    anchors = np.linspace(0.0, n_joints - 1.0, speeds.shape[0])
    return np.interp(np.arange(n_joints, dtype=np.float64), anchors, speeds)


class SnakeEnv:
    """
    Gym-style episode wrapper around the chain simulator.

    The agent only sets the serpenoid speed; amplitude and phase offset stay
    at the gait config. Each joint integrates its own phase so speed changes
    never make the targets jump. The wave fades in over the first gait cycle
    and a slow common bias steers the body axis toward the target.
    """

    def __init__(
        self,
        robot: RobotConfig = None,
        servo: ServoGains = None,
        friction: FrictionModel = None,
        dynamics: DynamicsConfig = None,
        gait: GaitParams = None,
        episode: EpisodeConfig = None,
    ):
        self.robot = robot or RobotConfig()
        self.servo = servo or ServoGains()
        self.friction = friction or FrictionModel()
        self.dynamics = dynamics or DynamicsConfig()
        self.gait = gait or GaitParams()
        self.episode = episode or EpisodeConfig()

        self.state = None
        self.last_observation = None
        self._phase = None
        self._bias = 0.0
        self._travel = np.zeros(2)
        self._prev_distance = None
        self._steps = 0
        self._episode_return = 0.0
        self._needs_reset = True

    @property
    def n_joints(self):
        return self.robot.n_joints

    @property
    def observation_size(self):
        return OBSERVATION_SIZE

    @property
    def action_size(self):
        return self.episode.action_size

    @property
    def needs_reset(self):
        return self._needs_reset

    @property
    def steps(self):
        return self._steps

    def _distance(self, state):
        return float(np.linalg.norm(np.asarray(self.episode.target) - centroid(state)))

    def _heading_error(self, state):
        # direction of travel once moving, the mean body axis before that
        axis = centroid_heading(state)
        floor = max(0.0, TRAVEL_FLOOR - float(np.linalg.norm(self._travel)))
        course = self._travel + floor * np.array([np.cos(axis), np.sin(axis)])
        to_target = np.asarray(self.episode.target) - centroid(state)
        wanted = np.arctan2(to_target[1], to_target[0])
        return float(wrap_angle(wanted - np.arctan2(course[1], course[0])))

    def reset(self, seed=None):
        # the start pose is fixed; seed is accepted for API symmetry only
        self.state = build_robot_from_config(self.robot)
        self._phase = np.full(self.n_joints, float(self.gait.initial_phase))
        self._bias = 0.0
        self._travel = np.zeros(2)
        self._prev_distance = self._distance(self.state)
        self._steps = 0
        self._episode_return = 0.0
        self._needs_reset = False
        self.last_observation = observe(self.state, self.episode)
        return self.last_observation

    def step(self, action):
        return self.step_speeds(speeds_from_action(action, self.episode))

    def step_speeds(self, speeds):
        """Advance one control step with explicit serpenoid speeds (one per group)."""
        if self._needs_reset:
            raise EnvNotResetError("call reset() before step(); the previous episode has ended")

        dt = self.dynamics.dt_control
        omega = joint_speeds(speeds, self.n_joints)
        self._phase = self._phase + omega * dt
        envelope = amplitude_envelope(self._phase - self.gait.initial_phase, self.gait.ramp_cycles)
        self._bias = steering_bias(self._heading_error(self.state), self._bias, self.gait, dt)
        targets = self._bias + serpenoid_from_phase(
            self._phase,
            self.gait.amplitude * envelope,
            self.gait.resolved_phase(self.n_joints),
            self.n_joints,
        )
        self.state = step(self.state, targets, self.servo, self.friction, self.dynamics)
        self._steps += 1
        self._travel = self._travel + (dt / TRAVEL_WINDOW) * (centroid_velocity(self.state) - self._travel)

        obs = observe(self.state, self.episode)
        distance = self._distance(self.state)
        progress = self._prev_distance - distance
        self._prev_distance = distance

        reached_goal = distance <= self.episode.goal_radius
        r = reward(progress, obs[8], reached_goal, self.episode.goal_reward)
        lateral_violation = abs(obs[4]) > self.episode.lateral_bound and not reached_goal
        if lateral_violation:
            r += self.episode.lateral_penalty
        truncated = self._steps >= self.episode.max_steps
        done = bool(reached_goal or lateral_violation or truncated)

        self._episode_return += r
        self._needs_reset = done
        self.last_observation = obs
        info = {
            "time": self.state.time,
            "progress": progress,
            "omega": omega,
            "target_angle": targets,
            "steering_bias": self._bias,
            "joint_angle": joint_angles(self.state),
            "joint_rate": joint_rates(self.state),
            "joint_torque": self.state.joint_torque.copy(),
            "reached_goal": bool(reached_goal),
            "lateral_violation": bool(lateral_violation),
            "truncated": bool(truncated and not reached_goal and not lateral_violation),
            "episode_return": self._episode_return,
            "episode_length": self._steps,
        }
        return obs, float(r), done, info
