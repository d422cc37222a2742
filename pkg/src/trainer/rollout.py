import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from src.math_utils import normalize
from src.models.policy.gaussian import (
    GaussianPolicy,
    clip_action,
    policy_mean_action,
    policy_sample,
)
from src.models.policy.mlp import forward

log = logging.getLogger(__name__)


@dataclass
class Transition:
    obs: np.ndarray
    action: torch.Tensor  # raw, before the [-1, 1] clip
    log_prob: float
    reward: float
    value: float  # critic estimate at collection time
    done: bool


@dataclass
class EpisodeRecord:
    timestep: int  # global env step at which the episode ended
    episode_return: float
    episode_length: int
    reached_goal: bool


class RolloutBuffer:
    def __init__(self):
        self.transitions: list[Transition] = []
        self.episodes: list[EpisodeRecord] = []
        self.bootstrap_value = 0.0
        self.advantages: Optional[torch.Tensor] = None
        self.returns: Optional[torch.Tensor] = None

    def __len__(self):
        return len(self.transitions)

    def append(self, transition: Transition):
        self.transitions.append(transition)
        self.advantages = self.returns = None

    @property
    def finalized(self):
        return self.advantages is not None

    @property
    def obs(self):
        return torch.as_tensor(np.stack([t.obs for t in self.transitions]), dtype=torch.float64)

    @property
    def actions(self):
        return torch.stack([t.action for t in self.transitions])

    @property
    def log_probs(self):
        return torch.tensor([t.log_prob for t in self.transitions], dtype=torch.float64)

    @property
    def rewards(self):
        return torch.tensor([t.reward for t in self.transitions], dtype=torch.float64)

    @property
    def values(self):
        return torch.tensor([t.value for t in self.transitions], dtype=torch.float64)

    @property
    def dones(self):
        return torch.tensor([float(t.done) for t in self.transitions], dtype=torch.float64)

    def finalize(self, gamma, gae_lambda, normalize_advantage=True):
        if not self.transitions:
            raise ValueError("cannot finalize an empty rollout")
        advantages, returns = compute_gae(
            self.rewards, self.values, self.dones, self.bootstrap_value, gamma, gae_lambda
        )
        self.returns = returns
        self.advantages = normalize(advantages) if normalize_advantage else advantages
        return self


def compute_gae(rewards, values, dones, bootstrap, gamma, gae_lambda):
    """
    Generalized advantage estimation, truncated at episode ends.

    Returns:
        (advantages, returns) with returns = advantages + values.
    """
    rewards = torch.as_tensor(rewards, dtype=torch.float64)
    values = torch.as_tensor(values, dtype=torch.float64)
    dones = torch.as_tensor(dones, dtype=torch.float64)
    if not (rewards.shape == values.shape == dones.shape) or rewards.dim() != 1:
        raise ValueError(
            f"rewards, values and dones must be equal-length 1-D series, got "
            f"{tuple(rewards.shape)}, {tuple(values.shape)}, {tuple(dones.shape)}"
        )
    if not (0.0 <= gamma <= 1.0 and 0.0 <= gae_lambda <= 1.0):
        raise ValueError(f"gamma and lambda must lie in [0, 1], got {gamma}, {gae_lambda}")

    r = rewards.tolist()
    v = values.tolist()
    d = dones.tolist()
    n = len(r)
    advantages = [0.0] * n
    last = 0.0
    for t in reversed(range(n)):
        next_value = float(bootstrap) if t == n - 1 else v[t + 1]
        nonterminal = 1.0 - d[t]
        delta = r[t] + gamma * next_value * nonterminal - v[t]
        last = delta + gamma * gae_lambda * nonterminal * last
        advantages[t] = last
    advantages = torch.tensor(advantages, dtype=torch.float64)
    return advantages, advantages + values


def critic_value(critic, obs):
    value, _ = forward(critic, obs)
    return float(value[0])


def collect_rollout(policy: GaussianPolicy, critic, env, horizon, generator=None, timestep_offset=0):
    """
    Step ``env`` ``horizon`` times with actions sampled from ``policy``.

    The env is reset when it reports done (or has never been reset) and the
    run continues; the tail value is bootstrapped from the critic when the
    last transition is not terminal.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    buffer = RolloutBuffer()
    obs = env.reset() if env.needs_reset else env.last_observation

    for i in range(horizon):
        obs_t = torch.as_tensor(obs, dtype=torch.float64)
        action, log_prob = policy_sample(policy, obs_t, generator)
        value = critic_value(critic, obs_t)
        next_obs, reward, done, info = env.step(clip_action(action))
        buffer.append(Transition(obs, action, float(log_prob), reward, value, done))
        if done:
            buffer.episodes.append(
                EpisodeRecord(
                    timestep=timestep_offset + i + 1,
                    episode_return=info["episode_return"],
                    episode_length=info["episode_length"],
                    reached_goal=info["reached_goal"],
                )
            )
            next_obs = env.reset()
        obs = next_obs

    if not buffer.transitions[-1].done:
        buffer.bootstrap_value = critic_value(critic, torch.as_tensor(obs, dtype=torch.float64))
    return buffer


@dataclass
class EvaluationResult:
    mean_return: float
    success_rate: float
    mean_time_to_goal: Optional[float]
    returns: list = field(default_factory=list)


def evaluate_policy(policy: GaussianPolicy, env, episodes, seed=0):
    """Run ``episodes`` episodes with the mean action; the start pose is fixed, so so is the outcome."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    returns, goal_times = [], []
    for _ in range(episodes):
        obs = env.reset(seed=seed)
        done = False
        info = {}
        while not done:
            action = policy_mean_action(policy, torch.as_tensor(obs, dtype=torch.float64))
            obs, _, done, info = env.step(clip_action(action))
        returns.append(info["episode_return"])
        if info["reached_goal"]:
            goal_times.append(info["time"])
    return EvaluationResult(
        mean_return=float(np.mean(returns)),
        success_rate=len(goal_times) / episodes,
        mean_time_to_goal=float(np.mean(goal_times)) if goal_times else None,
        returns=returns,
    )
