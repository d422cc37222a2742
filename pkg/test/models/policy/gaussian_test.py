import sys
import os

# Add the project root to `sys.path`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../../..")))

import math

import numpy as np
import pytest
import torch

from src.models.policy.gaussian import (
    GaussianPolicy,
    clip_action,
    gaussian_entropy,
    gaussian_kl,
    gaussian_log_prob,
    init_critic,
    init_policy,
    log_prob_backward,
    policy_log_prob,
    policy_mean_action,
    policy_sample,
)
from src.models.policy.mlp import forward


def test_init():
    policy = init_policy(9, 3, torch.Generator().manual_seed(0))
    assert policy.obs_dim == 9 and policy.action_dim == 3
    assert torch.equal(policy.log_std, torch.full((3,), -0.5, dtype=torch.float64))
    critic = init_critic(9, torch.Generator().manual_seed(0))
    assert critic.out_activation == "linear" and critic.out_dim == 1
    with pytest.raises(ValueError):
        GaussianPolicy(policy.mean_net, torch.zeros(2, dtype=torch.float64))


def test_log_prob_at_mean():
    mean = torch.tensor([0.2, -0.1], dtype=torch.float64)
    log_std = torch.tensor([-0.5, 0.3], dtype=torch.float64)
    expected = -log_std.sum().item() - math.log(2 * math.pi)
    assert gaussian_log_prob(mean, log_std, mean).item() == pytest.approx(expected)


def test_density_integrates_to_one():
    mean = torch.tensor([0.3], dtype=torch.float64)
    log_std = torch.tensor([-0.5], dtype=torch.float64)
    grid = torch.linspace(-6.0, 6.0, 12001, dtype=torch.float64).unsqueeze(1)
    density = torch.exp(gaussian_log_prob(mean, log_std, grid))
    assert torch.trapezoid(density, grid[:, 0]).item() == pytest.approx(1.0, abs=1e-3)


def test_sample_collapses_to_mean():
    policy = init_policy(9, 2, torch.Generator().manual_seed(1))
    policy.log_std = torch.full((2,), -50.0, dtype=torch.float64)
    obs = torch.randn(9, dtype=torch.float64)
    action, _ = policy_sample(policy, obs, torch.Generator().manual_seed(2))
    torch.testing.assert_close(action, policy_mean_action(policy, obs), atol=1e-15, rtol=0)


def test_sample_is_reproducible():
    policy = init_policy(9, 2, torch.Generator().manual_seed(1))
    obs = torch.randn(9, dtype=torch.float64)
    a, la = policy_sample(policy, obs, torch.Generator().manual_seed(5))
    b, lb = policy_sample(policy, obs, torch.Generator().manual_seed(5))
    assert torch.equal(a, b) and torch.equal(la, lb)


def test_monte_carlo_mean():
    policy = init_policy(9, 1, torch.Generator().manual_seed(3))
    obs = torch.randn(100000, 9, generator=torch.Generator().manual_seed(4), dtype=torch.float64)
    obs[:] = obs[0]
    actions, _ = policy_sample(policy, obs, torch.Generator().manual_seed(6))
    mean = policy_mean_action(policy, obs[0])
    sigma = math.exp(-0.5)
    assert abs(actions.mean().item() - mean.item()) <= 4 * sigma / math.sqrt(100000)


def test_log_prob_backward_matches_autograd():
    g = torch.Generator().manual_seed(11)
    policy = init_policy(9, 2, g)
    policy.log_std = torch.tensor([-0.3, 0.1], dtype=torch.float64)
    obs = torch.randn(8, 9, generator=g, dtype=torch.float64)
    actions = torch.randn(8, 2, generator=g, dtype=torch.float64)
    weights = torch.randn(8, generator=g, dtype=torch.float64)

    log_prob, mean, cache = policy_log_prob(policy, obs, actions)
    mine = log_prob_backward(policy, cache, mean, actions, weights)

    leaves = [t.clone().requires_grad_(True) for t in policy.parameters()]
    h = obs
    for i in range(0, len(leaves) - 1, 2):
        h = torch.tanh(h @ leaves[i].T + leaves[i + 1])
    (gaussian_log_prob(h, leaves[-1], actions) * weights).sum().backward()
    for a, b in zip(mine, leaves):
        torch.testing.assert_close(a, b.grad, atol=1e-12, rtol=1e-10)


def test_kl_and_entropy():
    mean = torch.randn(5, 2, dtype=torch.float64)
    log_std = torch.tensor([-0.5, 0.2], dtype=torch.float64)
    assert torch.equal(gaussian_kl(mean, log_std, mean, log_std), torch.zeros(5, dtype=torch.float64))
    assert torch.all(gaussian_kl(mean, log_std, mean + 0.1, log_std - 0.1) > 0)
    assert gaussian_entropy(torch.zeros(1, dtype=torch.float64)) == pytest.approx(0.5 * (1 + math.log(2 * math.pi)))


def test_clip_action():
    np.testing.assert_array_equal(clip_action(torch.tensor([-3.0, 0.25, 7.0])), [-1.0, 0.25, 1.0])


def test_with_parameters_round_trip():
    policy = init_policy(9, 2, torch.Generator().manual_seed(0))
    copy = policy.with_parameters(policy.parameters())
    obs = torch.randn(9, dtype=torch.float64)
    assert torch.equal(forward(copy.mean_net, obs)[0], forward(policy.mean_net, obs)[0])
    clone = policy.clone()
    clone.log_std += 1.0
    assert not torch.equal(clone.log_std, policy.log_std)
