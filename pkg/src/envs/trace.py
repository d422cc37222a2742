import os
import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.models.snake.utils import centroid, joint_angles, joint_rates

log = logging.getLogger(__name__)

BASE_COLUMNS = ["step", "time_s", "head_x", "head_y", "centroid_x", "centroid_y", "reward", "done"]


class MalformedTraceError(ValueError):
    pass


@dataclass
class RolloutTrace:
    """
    One recorded episode. Row 0 is the reset state (reward 0, no torque);
    rows 1..n_steps are control steps.
    """

    time: np.ndarray  # (T + 1,)
    head: np.ndarray  # (T + 1, 2)
    centroid: np.ndarray  # (T + 1, 2)
    reward: np.ndarray  # (T + 1,)
    done: np.ndarray  # (T + 1,) bool
    joint_angle: np.ndarray  # (T + 1, K)
    joint_rate: np.ndarray
    joint_torque: np.ndarray
    joint_target: Optional[np.ndarray] = None  # commanded angles; kept in memory, not in the CSV

    def __post_init__(self):
        self.validate()

    @property
    def n_steps(self):
        return self.time.shape[0] - 1

    @property
    def n_joints(self):
        return self.joint_angle.shape[1]

    @property
    def dt(self):
        if self.n_steps < 1:
            raise MalformedTraceError("trace has no control steps")
        return float(self.time[1] - self.time[0])

    def validate(self):
        rows = self.time.shape[0]
        if rows < 1:
            raise MalformedTraceError("trace is empty")
        if self.head.shape != (rows, 2) or self.centroid.shape != (rows, 2):
            raise MalformedTraceError(
                f"position arrays must be ({rows}, 2), got {self.head.shape} and {self.centroid.shape}"
            )
        if self.reward.shape != (rows,) or self.done.shape != (rows,):
            raise MalformedTraceError("reward/done columns do not match the time column")
        joint_shape = self.joint_angle.shape
        if len(joint_shape) != 2 or joint_shape[0] != rows or joint_shape[1] < 1:
            raise MalformedTraceError(f"joint arrays must be ({rows}, K), got {joint_shape}")
        if self.joint_rate.shape != joint_shape or self.joint_torque.shape != joint_shape:
            raise MalformedTraceError("joint angle/rate/torque arrays disagree in shape")
        if self.joint_target is not None and self.joint_target.shape != joint_shape:
            raise MalformedTraceError(f"joint targets must be {joint_shape}, got {self.joint_target.shape}")


class TraceRecorder:
    def __init__(self):
        self._rows = []

    def start(self, state):
        self._rows = [
            (
                state.time,
                state.position[0].copy(),
                centroid(state),
                0.0,
                False,
                joint_angles(state),
                joint_rates(state),
                np.zeros(state.n_joints),
                joint_angles(state),
            )
        ]

    def record(self, state, reward, done, info):
        self._rows.append(
            (
                state.time,
                state.position[0].copy(),
                centroid(state),
                reward,
                done,
                info["joint_angle"],
                info["joint_rate"],
                info["joint_torque"],
                np.asarray(info["target_angle"], dtype=np.float64),
            )
        )

    def to_trace(self):
        if not self._rows:
            raise MalformedTraceError("recorder was never started")
        columns = list(zip(*self._rows))
        return RolloutTrace(
            time=np.array(columns[0], dtype=np.float64),
            head=np.stack(columns[1]),
            centroid=np.stack(columns[2]),
            reward=np.array(columns[3], dtype=np.float64),
            done=np.array(columns[4], dtype=bool),
            joint_angle=np.stack(columns[5]),
            joint_rate=np.stack(columns[6]),
            joint_torque=np.stack(columns[7]),
            joint_target=np.stack(columns[8]),
        )


def trace_header(n_joints):
    header = list(BASE_COLUMNS)
    for i in range(1, n_joints + 1):
        header += [f"angle_{i}", f"rate_{i}", f"torque_{i}"]
    return header


def write_trace_csv(trace: RolloutTrace, path):
    """Per-step trace; floats are written with repr so the file reloads bit-identically."""
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(trace_header(trace.n_joints))
        for i in range(trace.time.shape[0]):
            row = [
                i,
                repr(float(trace.time[i])),
                repr(float(trace.head[i, 0])),
                repr(float(trace.head[i, 1])),
                repr(float(trace.centroid[i, 0])),
                repr(float(trace.centroid[i, 1])),
                repr(float(trace.reward[i])),
                int(trace.done[i]),
            ]
            for k in range(trace.n_joints):
                row += [
                    repr(float(trace.joint_angle[i, k])),
                    repr(float(trace.joint_rate[i, k])),
                    repr(float(trace.joint_torque[i, k])),
                ]
            writer.writerow(row)


def read_trace_csv(path):
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedTraceError(f"{path} is empty")
        n_extra = len(header) - len(BASE_COLUMNS)
        if header[: len(BASE_COLUMNS)] != BASE_COLUMNS or n_extra <= 0 or n_extra % 3:
            raise MalformedTraceError(f"{path} does not carry a trace header")
        n_joints = n_extra // 3
        if header != trace_header(n_joints):
            raise MalformedTraceError(f"{path} has unexpected joint columns")
        try:
            table = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
        except ValueError as e:
            raise MalformedTraceError(f"{path}: {e}")

    if table.ndim != 2 or table.shape[0] == 0 or table.shape[1] != len(header):
        raise MalformedTraceError(f"{path} has ragged or missing rows")
    joints = table[:, len(BASE_COLUMNS) :].reshape(table.shape[0], n_joints, 3)
    return RolloutTrace(
        time=table[:, 1],
        head=table[:, 2:4],
        centroid=table[:, 4:6],
        reward=table[:, 6],
        done=table[:, 7].astype(bool),
        joint_angle=np.ascontiguousarray(joints[:, :, 0]),
        joint_rate=np.ascontiguousarray(joints[:, :, 1]),
        joint_torque=np.ascontiguousarray(joints[:, :, 2]),
    )
