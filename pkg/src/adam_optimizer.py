from dataclasses import dataclass, field

import torch


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8):
        return cls(
            m=[torch.zeros_like(p) for p in params],
            v=[torch.zeros_like(p) for p in params],
            step=0,
            lr=lr,
            beta1=betas[0],
            beta2=betas[1],
            eps=eps,
        )


def adam_step(params, grads, state: AdamState):
    """
    One bias-corrected Adam update (descent on ``grads``).

    Returns:
        (new_params, new_state); inputs are left untouched.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"adam_step got {len(params)} params, {len(grads)} grads and {len(state.m)} moments"
        )
    for i, (p, g, m) in enumerate(zip(params, grads, state.m)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(
                f"shape mismatch at tensor {i}: param {tuple(p.shape)}, grad {tuple(g.shape)}, moment {tuple(m.shape)}"
            )

    t = state.step + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = (m / correction1) / (torch.sqrt(v / correction2) + state.eps)
        new_params.append(p - state.lr * update)
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state


class GroupedAdam:
    def __init__(self, groups, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, group_lr=None):
        """
        Adam with an independent state per named parameter group (actor, critic, ...).

        Args:
            groups (dict[str, list[Tensor]]): initial parameters per group, used for moment shapes
            lr (float): default learning rate
            group_lr (dict[str, float], optional): per-group learning rate overrides
        """
        group_lr = group_lr or {}
        self.states = {
            name: AdamState.zeros_like(params, lr=group_lr.get(name, lr), betas=betas, eps=eps)
            for name, params in groups.items()
        }

    def step(self, name, params, grads):
        if name not in self.states:
            raise KeyError(f"unknown parameter group {name!r}")
        new_params, self.states[name] = adam_step(params, grads, self.states[name])
        return new_params
