import os
import math
import logging
from dataclasses import asdict, replace

import numpy as np
import torch
import torch.multiprocessing as mp
from tqdm import tqdm

from src.energy_metrics import power_saving, run_summary, speed_ratios
from src.envs.trace import write_trace_csv
from src.general_utils import Checkpoint, dump_dict_to_json, write_csv
from src.trainer.train_snake_agent import LEARNED_ALGOS, train_agent

from .config import RunConfig, make_env, physical_dict, save_config_to_json
from .controllers import (
    SERPENOID,
    PolicyController,
    SerpenoidController,
    load_controller,
    record_episode,
    same_physics,
)

log = logging.getLogger(__name__)

COMPARE_COLUMNS = [
    "controller",
    "time_to_goal",
    "total_power",
    "average_power",
    "mean_velocity",
    "mean_return",
    "power_saving_pct",
    "speedup_time_pct",
    "speedup_velocity_pct",
]
SWEEP_COLUMNS = ["n_joints", "controller", "trial", "average_power_W"]
CURVE_COLUMNS = ["timestep", "mean_return", "std_return"]
DEFAULT_SWEEP_JOINTS = (5, 18)


def trial_seed(master_seed, trial, n_joints=0):
    return int(master_seed) + 1000 * int(n_joints) + int(trial)


def run_jobs(fn, jobs, workers=1, desc=None):
    """Map ``fn`` over ``jobs``, in-process or on a spawn pool; results keep job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in tqdm(jobs, desc=desc, disable=len(jobs) <= 1)]
    ctx = mp.get_context("spawn")
    with ctx.Pool(processes=min(workers, len(jobs))) as pool:
        return list(tqdm(pool.imap(fn, jobs), total=len(jobs), desc=desc))


def settle_time(gait):
    # start-up ramp plus one full cycle at the configured speed
    if gait.speed <= 0:
        return 0.0
    return (gait.ramp_cycles + 1.0) * 2.0 * math.pi / gait.speed


def cmd_train(config: RunConfig, progress=True):
    """Train ``config.algo`` and write rewards.csv, checkpoints and the resolved config into ``config.out_dir``."""
    if config.algo not in LEARNED_ALGOS:
        raise ValueError(f"train needs algo in {LEARNED_ALGOS}, got {config.algo!r}")
    os.makedirs(config.out_dir, exist_ok=True)
    save_config_to_json(os.path.join(config.out_dir, "training_config.json"), config)

    result = train_agent(
        make_env(config),
        config.algo,
        config.algo_config,
        config.training,
        config.seed,
        out_dir=config.out_dir,
        physical=physical_dict(config),
        progress=progress,
    )
    if result.evaluation is not None:
        dump_dict_to_json(asdict(result.evaluation), os.path.join(config.out_dir, "evaluation.json"))
    log.info(f"{config.algo}: {len(result.episodes)} episodes, final checkpoint {result.checkpoint_path}")
    return result


def cmd_rollout(config: RunConfig, controller=SERPENOID):
    """One deterministic episode; writes trace.csv, energy_report.csv and energy_summary.txt."""
    ctrl = load_controller(controller, config)
    outcome = record_episode(ctrl)
    report = run_summary(outcome.trace, ctrl.config.episode, warmup_s=settle_time(ctrl.config.gait))

    os.makedirs(config.out_dir, exist_ok=True)
    write_trace_csv(outcome.trace, os.path.join(config.out_dir, "trace.csv"))
    write_csv(
        os.path.join(config.out_dir, "energy_report.csv"),
        ["controller"] + report.csv_header(),
        [[ctrl.name] + report.csv_row()],
    )
    summary = f"controller           : {ctrl.name}\nepisode return       : {outcome.episode_return:.3f}\n"
    summary += report.summary()
    with open(os.path.join(config.out_dir, "energy_summary.txt"), "w") as f:
        f.write(summary + "\n")
    log.info("\n" + summary)
    return report


def _pct(value):
    return "" if value is None else value


def cmd_compare(config: RunConfig, controllers):
    """
    Roll out every controller once under one physical configuration and write
    comparison.csv; differences are reported against the serpenoid row when
    there is one, else against the last row.
    """
    if len(controllers) < 2:
        raise ValueError(f"compare needs at least two controllers, got {len(controllers)}")
    loaded = [load_controller(spec, config) for spec in controllers]
    for ctrl in loaded[1:]:
        if not same_physics(ctrl.config, loaded[0].config):
            raise ValueError(
                f"unfair comparison: {ctrl.name} runs under a different physical configuration than {loaded[0].name}"
            )

    results = []
    for ctrl in loaded:
        outcome = record_episode(ctrl)
        results.append((ctrl.name, outcome, run_summary(outcome.trace, ctrl.config.episode)))

    names = [name for name, _, _ in results]
    reference = results[names.index(SERPENOID)][2] if SERPENOID in names else results[-1][2]
    rows = []
    for name, outcome, report in results:
        ratios = speed_ratios(report, reference)
        rows.append(
            [
                name,
                _pct(report.time_to_goal),
                report.total_power,
                report.average_power,
                report.mean_forward_velocity,
                outcome.episode_return,
                _pct(power_saving(report, reference)),
                _pct(ratios["time_pct"]),
                _pct(ratios["velocity_pct"]),
            ]
        )
        ttg = "not reached" if report.time_to_goal is None else f"{report.time_to_goal:.2f} s"
        log.info(f"{name}: time to goal {ttg}, total power {report.total_power:.4f} W")

    os.makedirs(config.out_dir, exist_ok=True)
    write_csv(os.path.join(config.out_dir, "comparison.csv"), COMPARE_COLUMNS, rows)
    return rows


def _sweep_job(job):
    config, n_joints, trial, out_dir = job
    torch.set_num_threads(1)
    trial_config = config.with_joints(n_joints)
    trial_config = replace(trial_config, gait=replace(trial_config.gait, phase_offset=None))

    baseline = run_summary(record_episode(SerpenoidController(trial_config)).trace, trial_config.episode)
    result = train_agent(
        make_env(trial_config),
        "ppo",
        trial_config.ppo,
        trial_config.training,
        trial_seed(config.seed, trial, n_joints),
        out_dir=out_dir,
        physical=physical_dict(trial_config),
        progress=False,
    )
    agent = PolicyController(
        checkpoint=_as_checkpoint(result, trial_config), config=trial_config, name="ppo"
    )
    learned = run_summary(record_episode(agent).trace, trial_config.episode)
    return [
        [n_joints, "ppo", trial, learned.average_power],
        [n_joints, SERPENOID, trial, baseline.average_power],
    ]


def _as_checkpoint(result, config):
    return Checkpoint(result.policy, result.critic, {"algo": "ppo", "action_mode": config.episode.action_mode})


def parse_joint_range(text):
    """'A..B' (inclusive) or a single count."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
        else:
            lo = hi = int(text)
    except ValueError:
        raise ValueError(f"joint range must look like A..B, got {text!r}")
    if lo < 1 or hi < lo:
        raise ValueError(f"joint range {text!r} is empty or starts below 1")
    return lo, hi


def sweep_summary(rows):
    """Baseline spread across joint counts and the joint count with the lowest learned average power."""
    table = {}
    for n_joints, controller, _, power in rows:
        table.setdefault(controller, {}).setdefault(n_joints, []).append(power)
    summary = {}
    baseline = table.get(SERPENOID, {})
    if baseline:
        means = np.array([np.mean(v) for _, v in sorted(baseline.items())])
        summary["baseline_mean_average_power_W"] = float(means.mean())
        summary["baseline_cv"] = float(means.std() / means.mean()) if means.mean() > 0 else None
    learned = table.get("ppo", {})
    if learned:
        means = {n: float(np.mean(v)) for n, v in learned.items()}
        best = min(sorted(means), key=lambda n: means[n])
        summary["ppo_min_joints"] = int(best)
        summary["ppo_min_average_power_W"] = means[best]
    return summary


def cmd_sweep(config: RunConfig, joints=DEFAULT_SWEEP_JOINTS, trials=1, workers=1):
    """Train and roll out a fresh agent per joint count and trial; writes sweep.csv and sweep_summary.json."""
    lo, hi = joints
    if lo < 1 or hi < lo:
        raise ValueError(f"joint range {lo}..{hi} is empty")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    os.makedirs(config.out_dir, exist_ok=True)
    save_config_to_json(os.path.join(config.out_dir, "training_config.json"), config)
    jobs = [
        (config, n, trial, os.path.join(config.out_dir, f"joints_{n:02d}", f"trial_{trial:02d}"))
        for n in range(lo, hi + 1)
        for trial in range(trials)
    ]
    rows = [row for job_rows in run_jobs(_sweep_job, jobs, workers, desc="sweep") for row in job_rows]
    # n_joints, then controller, then trial
    rows.sort(key=lambda r: (r[0], r[1] != "ppo", r[2]))

    write_csv(os.path.join(config.out_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    summary = sweep_summary(rows)
    dump_dict_to_json(summary, os.path.join(config.out_dir, "sweep_summary.json"))
    log.info(f"sweep summary: {summary}")
    return rows, summary


def _curve_job(job):
    config, trial, out_dir = job
    torch.set_num_threads(1)
    result = train_agent(
        make_env(config),
        config.algo,
        config.algo_config,
        config.training,
        trial_seed(config.seed, trial),
        out_dir=out_dir,
        physical=physical_dict(config),
        progress=False,
    )
    return [(e.timestep, e.episode_return) for e in result.episodes]


def bin_curve(episodes, total_timesteps, bin_steps):
    """
    Value of one trial's reward curve at every grid point ``bin_steps, 2 * bin_steps, ...``:
    the mean return of episodes ending in that bin, carried forward over empty
    bins, NaN before the first finished episode.
    """
    n_bins = -(-int(total_timesteps) // int(bin_steps))
    values = np.full(n_bins, np.nan)
    last = np.nan
    for b in range(n_bins):
        lo, hi = b * bin_steps, (b + 1) * bin_steps
        inside = [ret for t, ret in episodes if lo < t <= hi]
        if inside:
            last = float(np.mean(inside))
        values[b] = last
    grid = np.arange(1, n_bins + 1) * bin_steps
    return np.minimum(grid, total_timesteps), values


def aggregate_curves(curves, total_timesteps, bin_steps):
    grid = None
    stacked = []
    for episodes in curves:
        grid, values = bin_curve(episodes, total_timesteps, bin_steps)
        stacked.append(values)
    if grid is None or grid.size == 0:
        return []
    stacked = np.stack(stacked)
    rows = []
    for b, t in enumerate(grid):
        column = stacked[:, b]
        column = column[~np.isnan(column)]
        if column.size:
            rows.append([int(t), float(column.mean()), float(column.std(ddof=0))])
    return rows


def cmd_curves(config: RunConfig, trials=10, workers=1):
    """Train ``trials`` agents with distinct seeds and write the binned mean/std reward curve to curves.csv."""
    if config.algo not in LEARNED_ALGOS:
        raise ValueError(f"curves needs algo in {LEARNED_ALGOS}, got {config.algo!r}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    os.makedirs(config.out_dir, exist_ok=True)
    save_config_to_json(os.path.join(config.out_dir, "training_config.json"), config)
    jobs = [(config, trial, os.path.join(config.out_dir, f"trial_{trial:02d}")) for trial in range(trials)]
    curves = run_jobs(_curve_job, jobs, workers, desc=f"{config.algo} trials")

    rows = aggregate_curves(curves, config.algo_config.total_timesteps, config.training.curve_bin_steps)
    write_csv(os.path.join(config.out_dir, "curves.csv"), CURVE_COLUMNS, rows)
    if rows:
        log.info(f"final bin: mean return {rows[-1][1]:.2f} +- {rows[-1][2]:.2f}")
    return rows
