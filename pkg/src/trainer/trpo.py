import logging
from dataclasses import dataclass

import torch

from src.adam_optimizer import GroupedAdam
from src.math_utils import conjugate_gradient, flat_concat, split_like
from src.models.policy.gaussian import (
    GaussianPolicy,
    gaussian_entropy,
    gaussian_kl,
    log_prob_backward,
    policy_log_prob,
)
from src.models.policy.mlp import MlpParams, backward, forward, jvp
from src.trainer.ppo import UpdateFailedError, critic_step
from src.trainer.rollout import RolloutBuffer

log = logging.getLogger(__name__)


@dataclass
class TrpoConfig:
    batch_steps: int = 2000
    gamma: float = 0.99
    gae_lambda: float = 0.98
    max_kl: float = 0.01
    epochs: int = 20  # critic regression passes per update
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_iters: int = 10
    backtrack_ratio: float = 0.5
    vf_learning_rate: float = 1e-3
    vf_minibatch_size: int = 256
    total_timesteps: int = 100000
    normalize_advantage: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not self.max_kl > 0:
            raise ValueError(f"max_kl must be > 0, got {self.max_kl}")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.cg_damping < 0:
            raise ValueError(f"cg_damping must be >= 0, got {self.cg_damping}")
        if self.backtrack_iters < 1 or not 0.0 < self.backtrack_ratio < 1.0:
            raise ValueError("backtrack_iters must be >= 1 and backtrack_ratio in (0, 1)")
        if self.batch_steps < 1 or self.epochs < 1 or self.vf_minibatch_size < 1:
            raise ValueError("batch_steps, epochs and vf_minibatch_size must be >= 1")
        if self.total_timesteps < 0:
            raise ValueError(f"total_timesteps must be >= 0, got {self.total_timesteps}")


@dataclass
class TrpoStats:
    kl: float
    surrogate_gain: float
    accepted: bool
    backtracks: int
    value_loss: float
    entropy: float


def mean_kl(old: GaussianPolicy, new: GaussianPolicy, obs):
    mean_old, _ = forward(old.mean_net, obs)
    mean_new, _ = forward(new.mean_net, obs)
    return float(gaussian_kl(mean_old, old.log_std, mean_new, new.log_std).mean())


def surrogate(policy: GaussianPolicy, obs, actions, old_log_prob, advantages):
    log_prob, _, _ = policy_log_prob(policy, obs, actions)
    return float((torch.exp(log_prob - old_log_prob) * advantages).mean())


def fisher_vector_product(policy: GaussianPolicy, obs, vector, damping=0.0):
    """
    F v for the mean KL between the policy and itself, F being its Hessian at
    the current parameters, plus ``damping * v``. ``vector`` is flat over
    ``policy.parameters()``.
    """
    params = policy.parameters()
    parts = split_like(vector, params)
    mean, cache = forward(policy.mean_net, obs)
    tangent = MlpParams.from_tensors(parts[:-1], policy.mean_net.out_activation)
    j_v = jvp(policy.mean_net, cache, tangent)
    inv_var = torch.exp(-2.0 * policy.log_std)
    grads, _ = backward(policy.mean_net, cache, j_v * inv_var / mean.shape[0])
    fv = flat_concat(grads.tensors() + [2.0 * parts[-1]])
    return fv + damping * vector


def fit_critic(critic: MlpParams, obs, returns, config: TrpoConfig, optimizer: GroupedAdam, generator=None):
    n = obs.shape[0]
    batch = min(config.vf_minibatch_size, n)
    loss = 0.0
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            critic, loss = critic_step(critic, obs[idx], returns[idx], optimizer)
    return critic, loss


def trpo_update(
    policy: GaussianPolicy,
    critic: MlpParams,
    buffer: RolloutBuffer,
    config: TrpoConfig,
    optimizer: GroupedAdam,
    generator=None,
):
    """
    Natural-gradient step inside the max_kl trust region, then critic regression.

    A step is only taken when the backtracking search finds a point with a
    better surrogate and a measured mean KL <= max_kl; otherwise the policy is
    returned unchanged.

    Returns:
        (policy, critic, stats)
    """
    if not buffer.finalized:
        raise ValueError("buffer must be finalized before trpo_update")

    obs = buffer.obs
    actions = buffer.actions
    old_log_prob = buffer.log_probs
    advantages = buffer.advantages
    n = obs.shape[0]

    log_prob, mean, cache = policy_log_prob(policy, obs, actions)
    # ratio is 1 at the old parameters, so the surrogate gradient is mean(A * grad log_prob)
    g = flat_concat(log_prob_backward(policy, cache, mean, actions, advantages / n))
    if not torch.isfinite(g).all():
        raise UpdateFailedError("non-finite policy gradient during update")

    accepted = False
    backtracks = 0
    kl = 0.0
    gain = 0.0
    new_policy = policy
    if float(g.abs().max()) > 0.0:
        x = conjugate_gradient(
            lambda v: fisher_vector_product(policy, obs, v, config.cg_damping), g, cg_iters=config.cg_iters
        )
        shs = 0.5 * float(x @ fisher_vector_product(policy, obs, x, config.cg_damping))
        if shs > 0:
            full_step = x * (config.max_kl / shs) ** 0.5
            base = surrogate(policy, obs, actions, old_log_prob, advantages)
            flat = flat_concat(policy.parameters())
            params = policy.parameters()
            for k in range(config.backtrack_iters):
                frac = config.backtrack_ratio**k
                candidate = policy.with_parameters(split_like(flat + frac * full_step, params))
                candidate_kl = mean_kl(policy, candidate, obs)
                candidate_gain = surrogate(candidate, obs, actions, old_log_prob, advantages) - base
                if candidate_kl <= config.max_kl and candidate_gain > 0:
                    new_policy, kl, gain, accepted, backtracks = candidate, candidate_kl, candidate_gain, True, k
                    break
            else:
                backtracks = config.backtrack_iters
        if not accepted:
            log.warning("trpo line search exhausted; keeping the previous policy")

    critic, value_loss = fit_critic(critic, obs, buffer.returns, config, optimizer, generator)
    stats = TrpoStats(
        kl=kl,
        surrogate_gain=gain,
        accepted=accepted,
        backtracks=backtracks,
        value_loss=value_loss,
        entropy=gaussian_entropy(new_policy.log_std),
    )
    return new_policy, critic, stats
