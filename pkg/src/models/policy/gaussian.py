import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .mlp import MlpParams, backward, forward, init_mlp

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian over raw actions; tanh mean network, state-independent log std."""

    mean_net: MlpParams
    log_std: Tensor

    def __post_init__(self):
        if self.log_std.shape != (self.mean_net.out_dim,):
            raise ValueError(
                f"log_std must have shape ({self.mean_net.out_dim},), got {tuple(self.log_std.shape)}"
            )

    @property
    def action_dim(self):
        return self.mean_net.out_dim

    @property
    def obs_dim(self):
        return self.mean_net.in_dim

    def parameters(self):
        return self.mean_net.tensors() + [self.log_std]

    def with_parameters(self, tensors):
        return GaussianPolicy(
            MlpParams.from_tensors(tensors[:-1], self.mean_net.out_activation), tensors[-1]
        )

    def clone(self):
        return self.with_parameters([t.clone() for t in self.parameters()])


def init_policy(obs_dim, action_dim, generator=None, log_std_init=-0.5):
    mean_net = init_mlp(obs_dim, action_dim, "tanh", out_gain=0.01, generator=generator)
    return GaussianPolicy(mean_net, torch.full((action_dim,), float(log_std_init), dtype=torch.float64))


def init_critic(obs_dim, generator=None):
    return init_mlp(obs_dim, 1, "linear", out_gain=1.0, generator=generator)


def gaussian_log_prob(mean, log_std, actions):
    z = (actions - mean) * torch.exp(-log_std)
    return -0.5 * (z**2).sum(dim=-1) - log_std.sum() - 0.5 * mean.shape[-1] * LOG_2PI


def log_prob_grads(mean, log_std, actions):
    """d log_prob / d mean and d log_prob / d log_std, elementwise (same shape as mean)."""
    inv_var = torch.exp(-2.0 * log_std)
    diff = actions - mean
    return diff * inv_var, diff**2 * inv_var - 1.0


def gaussian_entropy(log_std):
    return float(log_std.sum() + 0.5 * log_std.shape[0] * (1.0 + LOG_2PI))


def gaussian_kl(mean_old, log_std_old, mean_new, log_std_new):
    """Per-sample KL(old || new) for diagonal Gaussians."""
    var_old = torch.exp(2.0 * log_std_old)
    var_new = torch.exp(2.0 * log_std_new)
    kl = log_std_new - log_std_old + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new) - 0.5
    return kl.sum(dim=-1)


def policy_sample(policy: GaussianPolicy, obs, generator=None):
    """
    Returns:
        (action, log_prob): unbounded raw action and its exact log density.
        The environment clips the action to [-1, 1]; the density ignores the clip.
    """
    mean, _ = forward(policy.mean_net, obs)
    noise = torch.randn(mean.shape, generator=generator, dtype=torch.float64)
    action = mean + torch.exp(policy.log_std) * noise
    return action, gaussian_log_prob(mean, policy.log_std, action)


def policy_log_prob(policy: GaussianPolicy, obs, actions):
    """
    Returns:
        (log_prob, mean, cache): per-sample log density of ``actions`` and the
        forward cache needed by ``log_prob_backward``.
    """
    mean, cache = forward(policy.mean_net, obs)
    return gaussian_log_prob(mean, policy.log_std, actions), mean, cache


def log_prob_backward(policy: GaussianPolicy, cache, mean, actions, weights):
    """
    Gradient of sum_i weights[i] * log_prob_i with respect to every policy tensor,
    ordered like ``policy.parameters()``.
    """
    d_mean, d_log_std = log_prob_grads(mean, policy.log_std, actions)
    weights = weights.reshape(-1, 1)
    grads, _ = backward(policy.mean_net, cache, weights * d_mean)
    return grads.tensors() + [(weights * d_log_std).sum(dim=0)]


def policy_mean_action(policy: GaussianPolicy, obs):
    mean, _ = forward(policy.mean_net, obs)
    return mean


def clip_action(action):
    return np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
