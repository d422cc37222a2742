import os
import logging
from dataclasses import dataclass, field, asdict
from datetime import datetime
from typing import Optional

import torch
from tqdm import tqdm

import wandb

from src.envs.snake_env import SnakeEnv
from src.general_utils import (
    checkpoint_metadata,
    save_checkpoint,
    upload_to_hf,
    write_csv,
)
from src.models.policy.gaussian import init_critic, init_policy
from src.trainer.ppo import PpoConfig, make_optimizer, ppo_update
from src.trainer.rollout import EvaluationResult, collect_rollout, evaluate_policy
from src.trainer.trpo import TrpoConfig, trpo_update

log = logging.getLogger(__name__)

ALGOS = ("ppo", "trpo", "serpenoid")
LEARNED_ALGOS = ("ppo", "trpo")
REWARD_COLUMNS = ["timestep", "episode_return", "episode_length"]


@dataclass
class TrainingConfig:
    algo: str = "ppo"
    master_seed: int = 0
    save_folder: str = "runs/snake"
    checkpoint_every: int = 1  # updates between periodic checkpoints, 0 disables them
    curve_bin_steps: int = 5000
    eval_episodes: int = 1
    workers: int = 1
    wandb_key: Optional[str] = None
    wandb_project: Optional[str] = None
    wandb_run: Optional[str] = None
    wandb_entity: Optional[str] = None
    hf_repo_id: Optional[str] = None
    hf_token: Optional[str] = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.curve_bin_steps < 1:
            raise ValueError(f"curve_bin_steps must be >= 1, got {self.curve_bin_steps}")
        if self.eval_episodes < 0:
            raise ValueError(f"eval_episodes must be >= 0, got {self.eval_episodes}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass
class TrainingResult:
    policy: object
    critic: object
    episodes: list = field(default_factory=list)  # EpisodeRecord per finished episode
    updates: list = field(default_factory=list)  # per-update stats dicts
    evaluation: Optional[EvaluationResult] = None
    checkpoint_path: Optional[str] = None


def _horizon(algo, algo_config):
    return algo_config.rollout_horizon if algo == "ppo" else algo_config.batch_steps


def train_agent(
    env: SnakeEnv,
    algo: str,
    algo_config,
    training: TrainingConfig,
    seed: int,
    out_dir: Optional[str] = None,
    physical: Optional[dict] = None,
    progress: bool = True,
):
    """
    Train a fresh actor/critic pair on ``env`` until ``algo_config.total_timesteps``
    environment steps have been collected.

    Args:
        env (SnakeEnv): environment to train on; it is reset as needed.
        algo (str): "ppo" or "trpo".
        algo_config (PpoConfig | TrpoConfig): learner hyperparameters.
        training (TrainingConfig): checkpointing, logging and upload settings.
        seed (int): seeds the generator used for init, sampling and shuffling.
        out_dir (str, optional): where rewards.csv and checkpoints go; nothing is written when None.
        physical (dict, optional): physical configuration stored in checkpoint metadata.

    Returns:
        TrainingResult
    """
    if algo not in LEARNED_ALGOS:
        raise ValueError(f"cannot train algo {algo!r}; expected one of {LEARNED_ALGOS}")
    expected = PpoConfig if algo == "ppo" else TrpoConfig
    if not isinstance(algo_config, expected):
        raise ValueError(f"{algo} needs a {expected.__name__}, got {type(algo_config).__name__}")

    generator = torch.Generator().manual_seed(int(seed))
    policy = init_policy(env.observation_size, env.action_size, generator)
    critic = init_critic(env.observation_size, generator)
    if algo == "ppo":
        optimizer = make_optimizer(policy, critic, algo_config.learning_rate)
    else:
        optimizer = make_optimizer(policy, critic, algo_config.vf_learning_rate)
    metadata = checkpoint_metadata(policy, algo, env.episode.action_mode, physical)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    use_wandb = training.wandb_project is not None
    if use_wandb:
        current_datetime = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        if training.wandb_key:
            wandb.login(key=training.wandb_key)
        wandb.init(
            project=training.wandb_project,
            name=f"{training.wandb_run}_{current_datetime}",
            entity=training.wandb_entity,
            config={"algo": algo, "seed": seed, **asdict(algo_config)},
        )

    result = TrainingResult(policy, critic)
    total = algo_config.total_timesteps
    horizon = _horizon(algo, algo_config)
    timestep = 0
    update = 0

    progress_bar = tqdm(total=total, desc=f"{algo} seed {seed}", unit="step", disable=not progress)
    while timestep < total:
        n = min(horizon, total - timestep)
        buffer = collect_rollout(policy, critic, env, n, generator, timestep_offset=timestep)
        buffer.finalize(algo_config.gamma, algo_config.gae_lambda, algo_config.normalize_advantage)
        if algo == "ppo":
            policy, critic, stats = ppo_update(policy, critic, buffer, algo_config, optimizer, generator)
        else:
            policy, critic, stats = trpo_update(policy, critic, buffer, algo_config, optimizer, generator)

        timestep += n
        update += 1
        result.episodes.extend(buffer.episodes)
        record = {"update": update, "timestep": timestep, "episodes": len(buffer.episodes), **asdict(stats)}
        if buffer.episodes:
            record["mean_episode_return"] = sum(e.episode_return for e in buffer.episodes) / len(buffer.episodes)
        result.updates.append(record)
        log.debug(f"update {update}: {record}")

        progress_bar.update(n)
        progress_bar.set_postfix(
            episodes=len(result.episodes),
            ret=f"{record.get('mean_episode_return', float('nan')):.2f}",
            vloss=f"{stats.value_loss:.3g}",
        )
        if use_wandb:
            wandb.log(record, step=timestep)

        if out_dir is not None and training.checkpoint_every and update % training.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, f"update_{update:05d}.ckpt"), policy, critic, metadata)
    progress_bar.close()

    result.policy, result.critic = policy, critic
    if training.eval_episodes > 0 and total > 0:
        result.evaluation = evaluate_policy(policy, env, training.eval_episodes, seed)
        log.info(
            f"{algo} seed {seed}: eval return {result.evaluation.mean_return:.2f}, "
            f"success rate {result.evaluation.success_rate:.2f}"
        )
        if use_wandb:
            wandb.log({"eval_return": result.evaluation.mean_return, "success_rate": result.evaluation.success_rate})

    if out_dir is not None:
        write_csv(
            os.path.join(out_dir, "rewards.csv"),
            REWARD_COLUMNS,
            [[e.timestep, e.episode_return, e.episode_length] for e in result.episodes],
        )
        result.checkpoint_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(result.checkpoint_path, policy, critic, metadata)
        if training.hf_token is not None and training.hf_repo_id is not None:
            upload_to_hf(
                result.checkpoint_path,
                f"{os.path.basename(os.path.normpath(out_dir))}/final.ckpt",
                training.hf_repo_id,
                training.hf_token,
            )

    if use_wandb:
        wandb.finish()
    return result
