import os
import json
import logging
from dataclasses import dataclass

import torch

from src.envs.trace import TraceRecorder
from src.general_utils import Checkpoint, load_checkpoint
from src.models.policy.gaussian import clip_action, policy_mean_action

from .config import RunConfig, make_env, physical_dict, physical_from_dict

log = logging.getLogger(__name__)

SERPENOID = "serpenoid"


class SerpenoidController:
    """Fixed-speed baseline: every joint runs the configured gait speed; steering is left to the environment."""

    name = SERPENOID

    def __init__(self, config: RunConfig):
        self.config = config

    def act(self, env, obs):
        return env.step_speeds([self.config.gait.speed])


class PolicyController:
    """Deterministic (mean-action) rollout of a trained checkpoint."""

    def __init__(self, checkpoint: Checkpoint, config: RunConfig, name):
        self.checkpoint = checkpoint
        self.config = config
        self.name = name

    def act(self, env, obs):
        action = policy_mean_action(self.checkpoint.policy, torch.as_tensor(obs, dtype=torch.float64))
        return env.step(clip_action(action))


def load_controller(spec, config: RunConfig):
    """
    ``spec`` is "serpenoid" or a checkpoint path. A checkpoint runs in the
    physical configuration it was trained under when it records one.
    """
    if spec == SERPENOID:
        return SerpenoidController(config)
    if not os.path.isfile(spec):
        raise ValueError(f"controller {spec!r} is neither {SERPENOID!r} nor an existing checkpoint file")
    checkpoint = load_checkpoint(spec)
    controller_config = config
    if checkpoint.physical is not None:
        controller_config = physical_from_dict(checkpoint.physical, base=config)
    env = make_env(controller_config)
    if checkpoint.policy.obs_dim != env.observation_size or checkpoint.policy.action_dim != env.action_size:
        raise ValueError(
            f"{spec}: checkpoint maps {checkpoint.policy.obs_dim} -> {checkpoint.policy.action_dim}, "
            f"environment needs {env.observation_size} -> {env.action_size}"
        )
    return PolicyController(checkpoint, controller_config, name=os.path.basename(spec))


def same_physics(a: RunConfig, b: RunConfig):
    return json.dumps(physical_dict(a), sort_keys=True) == json.dumps(physical_dict(b), sort_keys=True)


@dataclass
class EpisodeOutcome:
    trace: object
    episode_return: float
    reached_goal: bool
    steps: int


def record_episode(controller, env=None):
    env = env or make_env(controller.config)
    recorder = TraceRecorder()
    obs = env.reset()
    recorder.start(env.state)
    done = False
    info = {}
    while not done:
        obs, reward, done, info = controller.act(env, obs)
        recorder.record(env.state, reward, done, info)
    log.debug(f"{controller.name}: {info['episode_length']} steps, return {info['episode_return']:.3f}")
    return EpisodeOutcome(
        trace=recorder.to_trace(),
        episode_return=info["episode_return"],
        reached_goal=info["reached_goal"],
        steps=info["episode_length"],
    )
