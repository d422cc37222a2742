import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class GaitParams:
    amplitude: float = 0.6  # rad
    speed: float = 3.0  # rad/s
    phase_offset: Optional[float] = None  # rad, None means one full body wave (2 pi / K)
    initial_phase: float = 0.0  # rad, where every joint's phase starts on reset
    ramp_cycles: float = 1.0  # gait cycles to reach full amplitude; 0 starts at full amplitude
    heading_gain: float = 0.5  # steering bias per rad of heading error; 0 disables heading hold
    max_bias: float = 0.2  # rad
    bias_rate: float = 1.0  # rad/s

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.speed >= 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if self.phase_offset is not None and not math.isfinite(self.phase_offset):
            raise ValueError(f"phase_offset must be finite, got {self.phase_offset}")
        if not math.isfinite(self.initial_phase):
            raise ValueError(f"initial_phase must be finite, got {self.initial_phase}")
        # below a quarter cycle the envelope would outrun the sine and break phase continuity
        if not (self.ramp_cycles == 0 or self.ramp_cycles >= 0.25):
            raise ValueError(f"ramp_cycles must be 0 or >= 0.25, got {self.ramp_cycles}")
        if not (self.heading_gain >= 0 and self.max_bias >= 0 and self.bias_rate >= 0):
            raise ValueError(
                f"heading hold needs non-negative gain, bias and rate, got gain={self.heading_gain} "
                f"max_bias={self.max_bias} bias_rate={self.bias_rate}"
            )

    def resolved_phase(self, n_joints):
        if self.phase_offset is None:
            return 2.0 * math.pi / n_joints
        return self.phase_offset


def serpenoid_from_phase(phase, amplitude, phase_offset, n_joints):
    """
    theta_i = A sin(Phi_i - (i - 1) phi) with a scalar or per-joint accumulated phase Phi.
    """
    i = np.arange(n_joints)
    return amplitude * np.sin(np.asarray(phase, dtype=np.float64) - i * phase_offset)


def serpenoid_targets(t, params: GaitParams, n_joints):
    """Joint angle targets of the serpenoid curve at time t, joint 1 first."""
    if n_joints < 1:
        raise ValueError(f"n_joints must be >= 1, got {n_joints}")
    return serpenoid_from_phase(
        params.speed * t, params.amplitude, params.resolved_phase(n_joints), n_joints
    )


def amplitude_envelope(phase_advance, ramp_cycles):
    """
    Quarter-sine start-up ramp from 0 to 1 over ``ramp_cycles`` gait cycles of phase.

    Its slope never exceeds 1 / (4 ramp_cycles), so envelope times sine still moves
    by at most A per radian of phase.
    """
    advance = np.maximum(np.asarray(phase_advance, dtype=np.float64), 0.0)
    if ramp_cycles == 0:
        return np.ones_like(advance)
    return np.where(
        advance < 2.0 * math.pi * ramp_cycles,
        np.sin(advance / (4.0 * ramp_cycles)),
        1.0,
    )


def steering_bias(heading_error, previous, params: GaitParams, dt):
    """
    Common joint offset that bends the body toward the goal heading.

    A positive offset curls the chain counter-clockwise toward the head, and the
    body follows its own curve, so a positive heading error gets a positive bias.
    Clipped to ``max_bias`` and slewed by at most ``bias_rate * dt`` per call.
    """
    wanted = float(np.clip(params.heading_gain * heading_error, -params.max_bias, params.max_bias))
    step = params.bias_rate * dt
    return float(np.clip(wanted, previous - step, previous + step))
