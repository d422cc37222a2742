import math
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .utils import heading_vectors, perp, wrap_angle

log = logging.getLogger(__name__)


class StateDivergedError(RuntimeError):
    """Raised when the solver produces a non-finite state; reduce the substep size."""


@dataclass
class RobotConfig:
    n_joints: int = 17
    link_length: float = 0.25  # module pitch, pin to pin
    link_mass: float = 0.1

    def __post_init__(self):
        if int(self.n_joints) != self.n_joints or self.n_joints < 1:
            raise ValueError(f"n_joints must be a positive integer, got {self.n_joints}")
        if not self.link_length > 0 or not self.link_mass > 0:
            raise ValueError(
                f"link geometry must be positive, got length={self.link_length} mass={self.link_mass}"
            )


@dataclass
class ServoGains:
    kp: float = 20.0
    kd: float = 0.5
    tau_max: float = 10.0  # motor force limit, applied as a joint torque limit

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError(f"kp must be > 0, got {self.kp}")
        if not self.kd >= 0:
            raise ValueError(f"kd must be >= 0, got {self.kd}")
        if not self.tau_max > 0:
            raise ValueError(f"tau_max must be > 0, got {self.tau_max}")


@dataclass
class FrictionModel:
    c_n: float = 3.0
    c_t: float = 0.03
    c_rot: float = 0.01

    def __post_init__(self):
        if not (self.c_n >= self.c_t >= 0):
            raise ValueError(f"friction needs c_n >= c_t >= 0, got c_n={self.c_n} c_t={self.c_t}")
        if not self.c_rot >= 0:
            raise ValueError(f"c_rot must be >= 0, got {self.c_rot}")


@dataclass
class DynamicsConfig:
    dt_control: float = 1.0 / 30.0
    substeps: int = 8
    solver_iters: int = 16  # passes of the servo torque-limit active set
    position_iters: int = 8
    baumgarte_beta: float = 0.2
    gravity: float = 9.8  # planar model, folded into the friction coefficients

    def __post_init__(self):
        if not self.dt_control > 0:
            raise ValueError(f"dt_control must be > 0, got {self.dt_control}")
        if self.substeps < 1 or self.solver_iters < 1 or self.position_iters < 0:
            raise ValueError(
                f"invalid solver sizes: substeps={self.substeps} "
                f"solver_iters={self.solver_iters} position_iters={self.position_iters}"
            )
        if not 0.0 <= self.baumgarte_beta <= 1.0:
            raise ValueError(f"baumgarte_beta must lie in [0, 1], got {self.baumgarte_beta}")


@dataclass
class LinkState:
    position: np.ndarray
    heading: float
    lin_vel: np.ndarray
    ang_vel: float
    mass: float
    inertia: float
    half_len: float


@dataclass
class RobotState:
    """
    Planar state of the whole chain, stored per field as arrays over links (head first).

    Link i and link i + 1 share joint i; ``joint_torque`` holds the servo torque
    of every joint averaged over the substeps of the last control step.
    """

    position: np.ndarray  # (K + 1, 2)
    heading: np.ndarray  # (K + 1,), unwrapped
    lin_vel: np.ndarray  # (K + 1, 2)
    ang_vel: np.ndarray  # (K + 1,)
    mass: np.ndarray
    inertia: np.ndarray
    half_len: np.ndarray
    time: float = 0.0
    joint_torque: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.joint_torque is None:
            self.joint_torque = np.zeros(self.n_joints)

    @property
    def n_links(self):
        return self.heading.shape[0]

    @property
    def n_joints(self):
        return self.heading.shape[0] - 1

    def link(self, i):
        return LinkState(
            position=self.position[i].copy(),
            heading=float(self.heading[i]),
            lin_vel=self.lin_vel[i].copy(),
            ang_vel=float(self.ang_vel[i]),
            mass=float(self.mass[i]),
            inertia=float(self.inertia[i]),
            half_len=float(self.half_len[i]),
        )

    @property
    def links(self):
        return [self.link(i) for i in range(self.n_links)]

    def copy(self):
        return RobotState(
            position=self.position.copy(),
            heading=self.heading.copy(),
            lin_vel=self.lin_vel.copy(),
            ang_vel=self.ang_vel.copy(),
            mass=self.mass.copy(),
            inertia=self.inertia.copy(),
            half_len=self.half_len.copy(),
            time=self.time,
            joint_torque=self.joint_torque.copy(),
        )

    def is_finite(self):
        return all(
            np.all(np.isfinite(a))
            for a in (self.position, self.heading, self.lin_vel, self.ang_vel, self.joint_torque)
        ) and math.isfinite(self.time)


def build_robot(n_joints, link_length, link_mass):
    """
    Straight chain at rest: head link centered at the origin facing -y, the
    body trailing along +y.
    """
    RobotConfig(n_joints, link_length, link_mass)  # validates
    n_links = n_joints + 1
    position = np.zeros((n_links, 2))
    position[:, 1] = link_length * np.arange(n_links)
    return RobotState(
        position=position,
        heading=np.full(n_links, -0.5 * np.pi),
        lin_vel=np.zeros((n_links, 2)),
        ang_vel=np.zeros(n_links),
        mass=np.full(n_links, float(link_mass)),
        inertia=np.full(n_links, link_mass * link_length**2 / 12.0),
        half_len=np.full(n_links, 0.5 * link_length),
        time=0.0,
    )


def build_robot_from_config(robot: RobotConfig):
    return build_robot(robot.n_joints, robot.link_length, robot.link_mass)


def servo_torque(joint_angle, joint_rate, target, gains: ServoGains, clamp=True):
    """Clamped PD law; the torque acts +tau on the head-side link and -tau on the tail-side link."""
    torque = gains.kp * (target - joint_angle) - gains.kd * joint_rate
    if not clamp:
        return torque
    return np.clip(torque, -gains.tau_max, gains.tau_max)


def friction_force(link: LinkState, model: FrictionModel):
    """
    Viscous anisotropic ground friction on one link: (force (2,), torque).

    Only ``heading``, ``lin_vel`` and ``ang_vel`` are read, and they broadcast,
    so the same law accepts fields stacked over links.
    """
    t = heading_vectors(link.heading)
    n = perp(t)
    v_t = (link.lin_vel * t).sum(axis=-1, keepdims=True)
    v_n = (link.lin_vel * n).sum(axis=-1, keepdims=True)
    return -model.c_t * v_t * t - model.c_n * v_n * n, -model.c_rot * link.ang_vel


def friction_forces(state: RobotState, model: FrictionModel):
    """Friction on every link at once: forces (K + 1, 2), torques (K + 1,)."""
    return friction_force(state, model)


def _decay_gain(rate, h):
    # (1 - exp(-rate h)) / (rate h), the exponential-Euler weight; 1 at rate 0
    x = rate * h
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -np.expm1(-safe) / safe, 1.0)


def _apply_friction(state: RobotState, model: FrictionModel, h):
    """
    Exponential-Euler step of the viscous law. The law is linear in the velocity
    per body axis, so this is its closed-form integral over one substep.
    """
    t = heading_vectors(state.heading)
    n = perp(t)
    force, torque = friction_forces(state, model)
    f_t = (force * t).sum(axis=-1) * _decay_gain(model.c_t / state.mass, h)
    f_n = (force * n).sum(axis=-1) * _decay_gain(model.c_n / state.mass, h)
    state.lin_vel += (h / state.mass)[:, None] * (f_t[:, None] * t + f_n[:, None] * n)
    state.ang_vel += h * torque * _decay_gain(model.c_rot / state.inertia, h) / state.inertia


def _pin_levers(heading, half_len):
    t = heading_vectors(heading)
    r_a = -half_len[:-1, None] * t[:-1]  # rear pin of link j
    r_b = half_len[1:, None] * t[1:]  # front pin of link j + 1
    return r_a, r_b


def _inverse_mass(state):
    # per link (1/m, 1/m, 1/I), matching the [vx, vy, w] velocity layout
    inv_m = 1.0 / state.mass
    return np.column_stack([inv_m, inv_m, 1.0 / state.inertia]).reshape(-1)


def _constraint_jacobian(heading, half_len, servos):
    """
    Rows 2j, 2j + 1: pin j velocity mismatch (x, y) between link j and link j + 1.
    Rows 2K + j (servos only): relative angular velocity of joint j.
    """
    n_joints = heading.shape[0] - 1
    r_a, r_b = _pin_levers(heading, half_len)
    p_a, p_b = perp(r_a), perp(r_b)
    jac = np.zeros(((3 if servos else 2) * n_joints, 3 * (n_joints + 1)))
    j = np.arange(n_joints)
    a, b = 3 * j, 3 * (j + 1)
    for c in (0, 1):
        row = 2 * j + c
        jac[row, a + c] = 1.0
        jac[row, a + 2] = p_a[:, c]
        jac[row, b + c] = -1.0
        jac[row, b + 2] = -p_b[:, c]
    if servos:
        row = 2 * n_joints + j
        jac[row, a + 2] = 1.0
        jac[row, b + 2] = -1.0
    return jac


def _solve_clamped(system, rhs, n_pins, limit, max_passes):
    """
    Solve ``system @ x = rhs`` with rows from ``n_pins`` on boxed to [-limit, limit].

    Monotone active set: rows that overshoot are pinned at the limit and the rest
    re-solved. If ``max_passes`` runs out, every servo row is frozen at its clipped
    value and only the pins are solved, so pins stay exact either way.
    """
    clamped = np.zeros(rhs.shape[0], dtype=bool)
    impulse = np.zeros(rhs.shape[0])
    for _ in range(max_passes):
        free = ~clamped
        reduced = rhs[free] - system[np.ix_(free, clamped)] @ impulse[clamped]
        impulse[free] = np.linalg.solve(system[np.ix_(free, free)], reduced)
        over = free & (np.abs(impulse) > limit)
        over[:n_pins] = False
        if not over.any():
            return impulse
        impulse[over] = np.sign(impulse[over]) * limit
        clamped |= over

    impulse[n_pins:] = np.clip(impulse[n_pins:], -limit, limit)
    reduced = rhs[:n_pins] - system[:n_pins, n_pins:] @ impulse[n_pins:]
    impulse[:n_pins] = np.linalg.solve(system[:n_pins, :n_pins], reduced)
    return impulse


def _solve_velocities(state, heading, lin_vel, ang_vel, targets, gains, h, max_passes):
    """
    Joint impulses for one substep, all joints solved together as one linear system.

    Pins are hard velocity constraints. Servos are soft angular constraints
    (implicit PD): the torque they settle on equals ``servo_torque`` evaluated at
    the end-of-substep angle and rate, and the impulse is clamped to tau_max * h.
    Returns the servo torque per joint.
    """
    n_joints = state.n_joints
    n_pins = 2 * n_joints
    servos = gains is not None
    jac = _constraint_jacobian(heading, state.half_len, servos)
    weighted = jac * _inverse_mass(state)
    system = weighted @ jac.T
    velocity = np.column_stack([lin_vel, ang_vel]).reshape(-1)
    rhs = -(jac @ velocity)

    torque = np.zeros(n_joints)
    if servos:
        softness = gains.kd + h * gains.kp
        drive = servo_torque(wrap_angle(heading[:-1] - heading[1:]), 0.0, targets, gains, clamp=False)
        rhs[n_pins:] += drive / softness
        system[n_pins:, n_pins:] += np.eye(n_joints) / (h * softness)
        impulse = _solve_clamped(system, rhs, n_pins, gains.tau_max * h, max_passes)
        torque = impulse[n_pins:] / h
    else:
        impulse = np.linalg.solve(system, rhs)

    velocity = (velocity + weighted.T @ impulse).reshape(-1, 3)
    lin_vel[:] = velocity[:, :2]
    ang_vel[:] = velocity[:, 2]
    return torque


def _correct_positions(state, position, heading, beta, iters):
    """Baumgarte drift correction with position-only impulses; velocities are untouched."""
    inv_mass = _inverse_mass(state)
    for _ in range(iters):
        jac = _constraint_jacobian(heading, state.half_len, servos=False)
        weighted = jac * inv_mass
        r_a, r_b = _pin_levers(heading, state.half_len)
        gap = ((position[:-1] + r_a) - (position[1:] + r_b)).reshape(-1)
        impulse = np.linalg.solve(weighted @ jac.T, -beta * gap)
        delta = (weighted.T @ impulse).reshape(-1, 3)
        position += delta[:, :2]
        heading += delta[:, 2]


def step(
    state: RobotState,
    joint_targets,
    gains: Optional[ServoGains],
    friction: FrictionModel,
    config: DynamicsConfig,
):
    """
    Advance the chain by one control step of ``config.dt_control`` seconds.

    Each substep: ground friction, then servo and pin impulses on the
    velocities, then semi-implicit position update, then drift correction.
    ``gains=None`` leaves every joint limp (no servo torque).

    Raises:
        StateDivergedError: the new state holds a non-finite value.
    """
    n_joints = state.n_joints
    targets = None
    if gains is not None:
        targets = np.asarray(joint_targets, dtype=np.float64)
        if targets.shape != (n_joints,):
            raise ValueError(f"expected {n_joints} joint targets, got shape {targets.shape}")

    h = config.dt_control / config.substeps

    work = RobotState(
        position=state.position.copy(),
        heading=state.heading.copy(),
        lin_vel=state.lin_vel.copy(),
        ang_vel=state.ang_vel.copy(),
        mass=state.mass,
        inertia=state.inertia,
        half_len=state.half_len,
        time=state.time + config.dt_control,
    )
    # the substep updates below work in place on these arrays
    position, heading, lin_vel, ang_vel = work.position, work.heading, work.lin_vel, work.ang_vel
    torque_sum = np.zeros(n_joints)

    try:
        for _ in range(config.substeps):
            _apply_friction(work, friction, h)
            torque_sum += _solve_velocities(
                state, heading, lin_vel, ang_vel, targets, gains, h, config.solver_iters
            )
            position += h * lin_vel
            heading += h * ang_vel
            _correct_positions(
                state, position, heading, config.baumgarte_beta, config.position_iters
            )
    except np.linalg.LinAlgError as e:
        raise StateDivergedError(f"joint solve failed at t={state.time:.4f}s: {e}") from e

    work.joint_torque = torque_sum / config.substeps
    if not work.is_finite():
        raise StateDivergedError(
            f"simulation diverged at t={work.time:.4f}s; increase dynamics.substeps"
        )
    return work
