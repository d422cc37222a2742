import sys
import os

# Add the project root to `sys.path`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import json

import pytest
import torch

from src.general_utils import (
    TEXT_HEADER,
    checkpoint_metadata,
    load_checkpoint,
    load_text_checkpoint,
    save_checkpoint,
    save_text_checkpoint,
    write_csv,
)
from src.models.policy.gaussian import init_critic, init_policy


def make_pair(seed=0, obs_dim=9, action_dim=1):
    g = torch.Generator().manual_seed(seed)
    policy = init_policy(obs_dim, action_dim, g)
    # non-trivial biases and log std so every tensor is exercised
    params = [p + 1e-3 * torch.randn(p.shape, generator=g, dtype=torch.float64) for p in policy.parameters()]
    return policy.with_parameters(params), init_critic(obs_dim, g)


def assert_same(checkpoint, policy, critic):
    for a, b in zip(checkpoint.policy.parameters(), policy.parameters()):
        assert a.dtype == torch.float64
        assert torch.equal(a, b)
    for a, b in zip(checkpoint.critic.tensors(), critic.tensors()):
        assert torch.equal(a, b)
    assert checkpoint.critic.out_activation == "linear"


@pytest.mark.parametrize("save", [save_checkpoint, save_text_checkpoint])
def test_checkpoint_reload_is_exact(tmp_path, save):
    policy, critic = make_pair(1, action_dim=9)
    physical = {"robot": {"n_joints": 17}, "episode": {"action_mode": "per_group"}}
    path = tmp_path / "agent.ckpt"
    save(str(path), policy, critic, checkpoint_metadata(policy, "trpo", "per_group", physical))
    checkpoint = load_checkpoint(str(path))
    assert_same(checkpoint, policy, critic)
    assert checkpoint.algo == "trpo"
    assert checkpoint.physical == physical
    assert checkpoint.metadata["action_dim"] == "9"


def test_text_format_layout(tmp_path):
    policy, critic = make_pair()
    path = tmp_path / "agent.txt"
    save_text_checkpoint(str(path), policy, critic, checkpoint_metadata(policy, "ppo", "shared_speed"))
    lines = path.read_text().splitlines()
    assert lines[0] == TEXT_HEADER == "snakenet v1"
    assert lines[1].startswith("tensor actor.w0 100x9 ")
    assert "meta algo ppo" in lines
    assert_same(load_text_checkpoint(str(path)), policy, critic)


def test_bad_checkpoints(tmp_path):
    policy, critic = make_pair()
    bad_header = tmp_path / "header.txt"
    bad_header.write_text("snakenet v2\n")
    with pytest.raises(ValueError):
        load_text_checkpoint(str(bad_header))

    path = tmp_path / "agent.txt"
    save_text_checkpoint(str(path), policy, critic, checkpoint_metadata(policy, "ppo", "shared_speed"))
    lines = path.read_text().splitlines()
    truncated = tmp_path / "truncated.txt"
    truncated.write_text("\n".join([lines[0], lines[1].rsplit(" ", 1)[0]] + lines[2:]) + "\n")
    with pytest.raises(ValueError):
        load_checkpoint(str(truncated))

    mismatch = checkpoint_metadata(policy, "ppo", "shared_speed")
    mismatch["obs_dim"] = "12"
    wrong = tmp_path / "wrong.ckpt"
    save_checkpoint(str(wrong), policy, critic, mismatch)
    with pytest.raises(ValueError):
        load_checkpoint(str(wrong))


def test_write_csv(tmp_path):
    path = tmp_path / "nested" / "out.csv"
    write_csv(str(path), ["a", "b"], [[1, 0.1], [None, "x"]])
    assert path.read_text() == "a,b\n1,0.1\n,x\n"
    with pytest.raises(ValueError):
        write_csv(str(path), ["a", "b"], [[1]])


def test_metadata_is_stringly_typed():
    policy, _ = make_pair()
    metadata = checkpoint_metadata(policy, "ppo", "shared_speed", {"gait": {"speed": 3.0}})
    assert all(isinstance(v, str) for v in metadata.values())
    assert json.loads(metadata["physical"]) == {"gait": {"speed": 3.0}}


def test_binary_checkpoint_bytes_are_stable(tmp_path):
    policy, critic = make_pair(2)
    physical = {"robot": {"n_joints": 17}, "gait": {"speed": 3.0}}
    metadata = checkpoint_metadata(policy, "ppo", "shared_speed", physical)
    shuffled = dict(reversed(list(metadata.items())))
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(str(first), policy, critic, metadata)
    save_checkpoint(str(second), policy, critic, shuffled)
    assert first.read_bytes() == second.read_bytes()
    assert load_checkpoint(str(second)).metadata == {k: str(v) for k, v in metadata.items()}
