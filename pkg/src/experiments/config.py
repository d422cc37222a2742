import os
import json
import logging
from dataclasses import dataclass, field, asdict, fields, replace

from src.envs.snake_env import EpisodeConfig, SnakeEnv
from src.general_utils import dump_dict_to_json, load_config_from_json
from src.models.snake.dynamics import DynamicsConfig, FrictionModel, RobotConfig, ServoGains
from src.models.snake.gait import GaitParams
from src.trainer.ppo import PpoConfig
from src.trainer.train_snake_agent import TrainingConfig
from src.trainer.trpo import TrpoConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "SNAKE_LAB__"
PHYSICAL_SECTIONS = ("robot", "servo", "friction", "dynamics", "gait", "episode")


@dataclass
class RunConfig:
    robot: RobotConfig = field(default_factory=RobotConfig)
    servo: ServoGains = field(default_factory=ServoGains)
    friction: FrictionModel = field(default_factory=FrictionModel)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    gait: GaitParams = field(default_factory=GaitParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    trpo: TrpoConfig = field(default_factory=TrpoConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    @property
    def algo(self):
        return self.training.algo

    @property
    def seed(self):
        return self.training.master_seed

    @property
    def out_dir(self):
        return self.training.save_folder

    @property
    def algo_config(self):
        if self.algo == "ppo":
            return self.ppo
        if self.algo == "trpo":
            return self.trpo
        return None

    def with_joints(self, n_joints):
        return replace(self, robot=replace(self.robot, n_joints=n_joints))

    def with_training(self, **changes):
        return replace(self, training=replace(self.training, **changes))


SECTIONS = {f.name: f.type for f in fields(RunConfig)}


def run_config_from_dict(config_data):
    """
    Build a RunConfig from a sectioned dict; missing sections take defaults,
    unknown sections or keys are errors.
    """
    unknown = set(config_data) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    sections = {}
    for name, cls in SECTIONS.items():
        section = config_data.get(name) or {}
        if not isinstance(section, dict):
            raise ValueError(f"config section {name!r} must be an object")
        try:
            sections[name] = cls(**section)
        except TypeError as e:
            raise ValueError(f"config section {name!r}: {e}") from e
    return RunConfig(**sections)


def _parse_env_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env_overrides(config_data, environ=None):
    """Overlay ``SNAKE_LAB__<SECTION>__<KEY>=value`` variables onto a sectioned dict."""
    environ = os.environ if environ is None else environ
    merged = {name: dict(section or {}) for name, section in config_data.items()}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX) :].lower().split("__")
        if len(parts) != 2:
            raise ValueError(f"{name}: expected {ENV_PREFIX}<SECTION>__<KEY>")
        section, key = parts
        if section not in SECTIONS:
            raise ValueError(f"{name}: unknown config section {section!r}")
        if key not in {f.name for f in fields(SECTIONS[section])}:
            raise ValueError(f"{name}: unknown key {key!r} in section {section!r}")
        merged.setdefault(section, {})[key] = _parse_env_value(raw)
        log.debug(f"env override {section}.{key} = {raw}")
    return merged


def load_run_config(filepath=None, environ=None):
    config_data = load_config_from_json(filepath) if filepath else {}
    return run_config_from_dict(apply_env_overrides(config_data, environ))


def config_to_dict(config: RunConfig):
    return {name: asdict(getattr(config, name)) for name in SECTIONS}


def save_config_to_json(filepath: str, config: RunConfig):
    dump_dict_to_json(config_to_dict(config), filepath)


def physical_dict(config: RunConfig):
    """The sections that define the simulated world; controllers compared against each other must agree on them."""
    return {name: asdict(getattr(config, name)) for name in PHYSICAL_SECTIONS}


def physical_from_dict(physical, base: RunConfig = None):
    base = base or RunConfig()
    data = config_to_dict(base)
    data.update(physical)
    return run_config_from_dict(data)


def make_env(config: RunConfig):
    return SnakeEnv(
        robot=config.robot,
        servo=config.servo,
        friction=config.friction,
        dynamics=config.dynamics,
        gait=config.gait,
        episode=config.episode,
    )
