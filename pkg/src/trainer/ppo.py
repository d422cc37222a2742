import logging
from dataclasses import dataclass

import torch

from src.adam_optimizer import GroupedAdam
from src.models.policy.gaussian import (
    GaussianPolicy,
    gaussian_entropy,
    log_prob_backward,
    policy_log_prob,
)
from src.models.policy.mlp import MlpParams, backward, forward
from src.trainer.rollout import RolloutBuffer

log = logging.getLogger(__name__)


class UpdateFailedError(RuntimeError):
    pass


@dataclass
class PpoConfig:
    rollout_horizon: int = 20000
    gamma: float = 0.95
    clip_range: float = 0.2
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    epochs: int = 20
    minibatch_size: int = 4096
    learning_rate: float = 2e-4
    total_timesteps: int = 150000
    normalize_advantage: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError(f"clip_range must lie in (0, 1), got {self.clip_range}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if self.rollout_horizon < 1 or self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("rollout_horizon, epochs and minibatch_size must be >= 1")
        if self.minibatch_size > self.rollout_horizon:
            raise ValueError(
                f"minibatch_size ({self.minibatch_size}) exceeds rollout_horizon ({self.rollout_horizon})"
            )
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.total_timesteps < 0:
            raise ValueError(f"total_timesteps must be >= 0, got {self.total_timesteps}")


@dataclass
class PpoStats:
    mean_ratio: float
    clip_fraction: float
    value_loss: float
    entropy: float
    approx_kl: float


def ppo_surrogate(log_prob_new, log_prob_old, advantage, clip_range):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A) with r = exp(new - old); works on floats and tensors."""
    log_prob_new = torch.as_tensor(log_prob_new, dtype=torch.float64)
    log_prob_old = torch.as_tensor(log_prob_old, dtype=torch.float64)
    advantage = torch.as_tensor(advantage, dtype=torch.float64)
    ratio = torch.exp(log_prob_new - log_prob_old)
    unclipped = ratio * advantage
    clipped = torch.clamp(ratio, 1.0 - clip_range, 1.0 + clip_range) * advantage
    return torch.minimum(unclipped, clipped)


def make_optimizer(policy: GaussianPolicy, critic: MlpParams, learning_rate, critic_learning_rate=None):
    group_lr = {} if critic_learning_rate is None else {"critic": critic_learning_rate}
    return GroupedAdam(
        {"actor": policy.parameters(), "critic": critic.tensors()},
        lr=learning_rate,
        group_lr=group_lr,
    )


def _check_finite(name, tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise UpdateFailedError(f"non-finite {name} during update")


def critic_step(critic: MlpParams, obs, returns, optimizer, coef=1.0):
    """One Adam step on coef * mean (V(s) - R)^2; returns the updated critic and the loss."""
    values, cache = forward(critic, obs)
    err = values[:, 0] - returns
    loss = coef * float((err**2).mean())
    grads, _ = backward(critic, cache, (2.0 * coef / err.shape[0]) * err.unsqueeze(1))
    _check_finite("critic gradient", grads.tensors())
    new = optimizer.step("critic", critic.tensors(), grads.tensors())
    _check_finite("critic parameters", new)
    return MlpParams.from_tensors(new, critic.out_activation), loss


def ppo_update(
    policy: GaussianPolicy,
    critic: MlpParams,
    buffer: RolloutBuffer,
    config: PpoConfig,
    optimizer: GroupedAdam,
    generator=None,
):
    """
    ``config.epochs`` passes of shuffled minibatch Adam steps on the clipped
    surrogate (actor) and the value regression (critic).

    Returns:
        (policy, critic, stats); inputs are not modified.
    """
    if not buffer.finalized:
        raise ValueError("buffer must be finalized before ppo_update")

    obs = buffer.obs
    actions = buffer.actions
    old_log_prob = buffer.log_probs
    advantages = buffer.advantages
    returns = buffer.returns
    _check_finite("advantages", [advantages, returns])
    n = obs.shape[0]
    batch = min(config.minibatch_size, n)
    eps = config.clip_range

    for _ in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            b = idx.shape[0]
            log_prob, mean, cache = policy_log_prob(policy, obs[idx], actions[idx])
            ratio = torch.exp(log_prob - old_log_prob[idx])
            adv = advantages[idx]
            unclipped = ratio * adv
            clipped = torch.clamp(ratio, 1.0 - eps, 1.0 + eps) * adv
            # d surrogate / d log_prob; zero where the clipped branch is the minimum
            d_surrogate = torch.where(unclipped <= clipped, unclipped, torch.zeros_like(unclipped))
            grads = log_prob_backward(policy, cache, mean, actions[idx], -d_surrogate / b)
            if config.ent_coef:
                grads[-1] = grads[-1] - config.ent_coef
            _check_finite("policy gradient", grads)
            new_params = optimizer.step("actor", policy.parameters(), grads)
            _check_finite("policy parameters", new_params)
            policy = policy.with_parameters(new_params)

            critic, _ = critic_step(critic, obs[idx], returns[idx], optimizer, coef=config.vf_coef)

    log_prob, _, _ = policy_log_prob(policy, obs, actions)
    ratio = torch.exp(log_prob - old_log_prob)
    values, _ = forward(critic, obs)
    stats = PpoStats(
        mean_ratio=float(ratio.mean()),
        clip_fraction=float(((ratio - 1.0).abs() > eps).double().mean()),
        value_loss=float(((values[:, 0] - returns) ** 2).mean()),
        entropy=gaussian_entropy(policy.log_std),
        approx_kl=float((old_log_prob - log_prob).mean()),
    )
    if not 1.0 - 2.0 * eps <= stats.mean_ratio <= 1.0 + 2.0 * eps:
        log.warning(f"mean probability ratio {stats.mean_ratio:.4f} left [{1 - 2 * eps:.2f}, {1 + 2 * eps:.2f}]")
    return policy, critic, stats
