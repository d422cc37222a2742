import sys
import logging
import argparse

from src.experiments.commands import (
    DEFAULT_SWEEP_JOINTS,
    cmd_compare,
    cmd_curves,
    cmd_rollout,
    cmd_sweep,
    cmd_train,
    parse_joint_range,
)
from src.experiments.config import ENV_PREFIX, load_run_config
from src.trainer.train_snake_agent import ALGOS

log = logging.getLogger("snake_lab")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned JSON config (see training_config_snake.json)")
    common.add_argument("--seed", type=int, help="overrides training.master_seed")
    common.add_argument("--out", help="overrides training.save_folder")
    common.add_argument("--algo", choices=ALGOS, help="overrides training.algo")
    common.add_argument("--log-level", default="INFO")

    trials = ArgumentParser(add_help=False)
    trials.add_argument("--trials", type=int)
    trials.add_argument("--workers", type=int, help="parallel trial processes (overrides training.workers)")

    parser = ArgumentParser(
        prog="snake_lab",
        description="Snake robot locomotion lab: train agents, roll out and compare gaits, sweep joint counts.",
        epilog=f"Config values can be overridden with {ENV_PREFIX}<SECTION>__<KEY>=<json value>.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    sub.add_parser("train", parents=[common], help="train a ppo or trpo agent")
    rollout = sub.add_parser("rollout", parents=[common], help="record one episode and its energy report")
    rollout.add_argument("--controller", default="serpenoid", help="'serpenoid' or a checkpoint path")
    compare = sub.add_parser("compare", parents=[common], help="compare two or more controllers")
    compare.add_argument("--controller", action="append", required=True, dest="controllers")
    sweep = sub.add_parser("sweep", parents=[common, trials], help="average power versus joint count")
    sweep.add_argument("--joints", default=f"{DEFAULT_SWEEP_JOINTS[0]}..{DEFAULT_SWEEP_JOINTS[1]}")
    sub.add_parser("curves", parents=[common, trials], help="mean/std reward curves over trials")
    return parser


def resolve_config(args):
    config = load_run_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["save_folder"] = args.out
    if args.algo is not None:
        changes["algo"] = args.algo
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return config.with_training(**changes) if changes else config


def run(args):
    config = resolve_config(args)
    if args.command == "train":
        cmd_train(config)
    elif args.command == "rollout":
        cmd_rollout(config, args.controller)
    elif args.command == "compare":
        cmd_compare(config, args.controllers)
    elif args.command == "sweep":
        cmd_sweep(
            config,
            joints=parse_joint_range(args.joints),
            trials=1 if args.trials is None else args.trials,
            workers=config.training.workers,
        )
    elif args.command == "curves":
        cmd_curves(config, trials=10 if args.trials is None else args.trials, workers=config.training.workers)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        run(args)
    except (ValueError, FileNotFoundError) as e:
        log.error(str(e))
        return EXIT_USAGE
    except RuntimeError as e:
        log.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
