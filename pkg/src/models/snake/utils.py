import numpy as np


def wrap_angle(angle):
    # maps into (-pi, pi], so -pi comes back as +pi
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def heading_vectors(heading):
    """Unit body-axis vectors (N, 2); they point from the tail-side pin to the head-side pin."""
    return np.stack([np.cos(heading), np.sin(heading)], axis=-1)


def perp(vectors):
    # 90 degree ccw rotation, cross(w, r) == w * perp(r) in the plane
    return np.stack([-vectors[..., 1], vectors[..., 0]], axis=-1)


def joint_angles(state):
    return wrap_angle(state.heading[:-1] - state.heading[1:])


def joint_rates(state):
    return state.ang_vel[:-1] - state.ang_vel[1:]


def joint_pins(state):
    """
    World positions of both halves of every joint pin.

    Returns:
        (rear, front): rear pin of link i and front pin of link i + 1, each (K, 2).
        They coincide for an assembled chain.
    """
    t = heading_vectors(state.heading)
    half = state.half_len[:, None]
    rear = state.position[:-1] - half[:-1] * t[:-1]
    front = state.position[1:] + half[1:] * t[1:]
    return rear, front


def joint_gaps(state):
    rear, front = joint_pins(state)
    return np.linalg.norm(rear - front, axis=-1)


def centroid(state):
    return (state.mass[:, None] * state.position).sum(axis=0) / state.mass.sum()


def centroid_velocity(state):
    return (state.mass[:, None] * state.lin_vel).sum(axis=0) / state.mass.sum()


def centroid_heading(state):
    return np.arctan2(np.sin(state.heading).mean(), np.cos(state.heading).mean())


def linear_momentum(state):
    return (state.mass[:, None] * state.lin_vel).sum(axis=0)


def kinetic_energy(state):
    translational = 0.5 * (state.mass * (state.lin_vel**2).sum(axis=-1)).sum()
    rotational = 0.5 * (state.inertia * state.ang_vel**2).sum()
    return translational + rotational
