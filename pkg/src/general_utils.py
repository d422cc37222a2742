import os
import csv
import json
import time
import logging
from dataclasses import dataclass, field

import torch
from safetensors.torch import save_file, safe_open
from huggingface_hub import upload_file

from src.models.policy.gaussian import GaussianPolicy
from src.models.policy.mlp import MlpParams

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "snakenet"
CHECKPOINT_VERSION = 1
TEXT_HEADER = f"{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"
METADATA_KEY = CHECKPOINT_FORMAT


@dataclass
class Checkpoint:
    policy: GaussianPolicy
    critic: MlpParams
    metadata: dict = field(default_factory=dict)

    @property
    def algo(self):
        return self.metadata.get("algo")

    @property
    def physical(self):
        """Physical configuration (robot, servo, friction, dynamics, gait, episode) the agent was trained under."""
        raw = self.metadata.get("physical")
        return json.loads(raw) if raw else None


def checkpoint_tensors(policy: GaussianPolicy, critic: MlpParams):
    tensors = {}
    for prefix, net in (("actor", policy.mean_net), ("critic", critic)):
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            tensors[f"{prefix}.w{i}"] = w.contiguous()
            tensors[f"{prefix}.b{i}"] = b.contiguous()
    tensors["actor.log_std"] = policy.log_std.contiguous()
    return tensors


def _net_from_tensors(tensors, prefix, out_activation):
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in tensors:
        if f"{prefix}.b{i}" not in tensors:
            raise ValueError(f"checkpoint is missing {prefix}.b{i}")
        weights.append(tensors[f"{prefix}.w{i}"].to(torch.float64))
        biases.append(tensors[f"{prefix}.b{i}"].to(torch.float64))
        i += 1
    if not weights:
        raise ValueError(f"checkpoint holds no {prefix} layers")
    return MlpParams(weights, biases, out_activation)


def checkpoint_from_tensors(tensors, metadata):
    if metadata.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} checkpoint (format={metadata.get('format')!r})")
    if str(metadata.get("version")) != str(CHECKPOINT_VERSION):
        raise ValueError(f"unsupported checkpoint version {metadata.get('version')!r}")
    if "actor.log_std" not in tensors:
        raise ValueError("checkpoint is missing actor.log_std")

    policy = GaussianPolicy(
        _net_from_tensors(tensors, "actor", "tanh"), tensors["actor.log_std"].to(torch.float64)
    )
    critic = _net_from_tensors(tensors, "critic", "linear")
    if "obs_dim" in metadata and int(metadata["obs_dim"]) != policy.obs_dim:
        raise ValueError(f"metadata obs_dim {metadata['obs_dim']} does not match actor input {policy.obs_dim}")
    if "action_dim" in metadata and int(metadata["action_dim"]) != policy.action_dim:
        raise ValueError(
            f"metadata action_dim {metadata['action_dim']} does not match actor output {policy.action_dim}"
        )
    if critic.in_dim != policy.obs_dim:
        raise ValueError("critic and actor disagree on the observation size")
    return Checkpoint(policy, critic, metadata)


def checkpoint_metadata(policy: GaussianPolicy, algo, action_mode, physical=None):
    metadata = {
        "format": CHECKPOINT_FORMAT,
        "version": str(CHECKPOINT_VERSION),
        "algo": algo,
        "action_mode": action_mode,
        "obs_dim": str(policy.obs_dim),
        "action_dim": str(policy.action_dim),
    }
    if physical is not None:
        metadata["physical"] = json.dumps(physical, sort_keys=True)
    return metadata


def save_checkpoint(path, policy: GaussianPolicy, critic: MlpParams, metadata):
    # safetensors keeps its header metadata in a hash map, so a multi-key dict is
    # written in arbitrary order. One sorted JSON entry keeps the bytes stable.
    packed = json.dumps({k: str(v) for k, v in metadata.items()}, sort_keys=True)
    save_file(checkpoint_tensors(policy, critic), path, metadata={METADATA_KEY: packed})


def save_text_checkpoint(path, policy: GaussianPolicy, critic: MlpParams, metadata):
    """
    Line-oriented checkpoint: a header line, one ``tensor <name> <d0xd1> <values...>``
    line per tensor (row-major, repr precision) and one ``meta <key> <value>`` line
    per metadata entry.
    """
    lines = [TEXT_HEADER]
    for name, t in checkpoint_tensors(policy, critic).items():
        shape = "x".join(str(d) for d in t.shape)
        values = " ".join(repr(v) for v in t.reshape(-1).tolist())
        lines.append(f"tensor {name} {shape} {values}")
    for key, value in metadata.items():
        value = str(value)
        if "\n" in value:
            raise ValueError(f"metadata {key!r} must fit on one line")
        lines.append(f"meta {key} {value}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_text_checkpoint(path):
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != TEXT_HEADER:
        raise ValueError(f"{path}: expected header {TEXT_HEADER!r}")

    tensors, metadata = {}, {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        kind, _, rest = line.partition(" ")
        if kind == "tensor":
            parts = rest.split(" ")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: malformed tensor record")
            name, shape = parts[0], tuple(int(d) for d in parts[1].split("x"))
            values = [float(v) for v in parts[2:]]
            expected = 1
            for d in shape:
                expected *= d
            if len(values) != expected:
                raise ValueError(f"{path}:{lineno}: {name} has {len(values)} values, shape {shape} needs {expected}")
            tensors[name] = torch.tensor(values, dtype=torch.float64).reshape(shape)
        elif kind == "meta":
            key, _, value = rest.partition(" ")
            metadata[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown record {kind!r}")
    return checkpoint_from_tensors(tensors, metadata)


def load_checkpoint(path):
    """Load a checkpoint written by either ``save_checkpoint`` or ``save_text_checkpoint``."""
    with open(path, "rb") as f:
        head = f.read(len(TEXT_HEADER))
    if head == TEXT_HEADER.encode():
        return load_text_checkpoint(path)

    tensors = {}
    with safe_open(path, framework="pt", device="cpu") as f:
        metadata = dict(f.metadata() or {})
        if METADATA_KEY in metadata:
            metadata = json.loads(metadata[METADATA_KEY])
        for key in f.keys():
            tensors[key] = f.get_tensor(key)
    return checkpoint_from_tensors(tensors, metadata)


# Upload a file to Hugging Face Hub
def upload_to_hf(filename, path_in_repo, repo_id, token, max_retries=3):
    for attempt in range(max_retries):
        try:
            upload_file(
                path_or_fileobj=filename,
                path_in_repo=path_in_repo,
                repo_id=repo_id,
                token=token,
            )
            log.info(f"uploaded {filename} to {repo_id}/{path_in_repo}")
            return True

        except Exception as e:
            log.warning(f"upload attempt {attempt + 1} failed: {e}")
            time.sleep(2**attempt)  # exponential backoff

    log.error("upload failed after multiple attempts")
    return False


def dump_dict_to_json(data, file_path):
    with open(file_path, "w") as json_file:
        json.dump(data, json_file, indent=4)


def load_config_from_json(filepath: str):
    with open(filepath, "r") as json_file:
        return json.load(json_file)


def write_csv(path, header, rows):
    """Header row plus rows; floats keep their shortest exact repr."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            writer.writerow(["" if v is None else v for v in row])
