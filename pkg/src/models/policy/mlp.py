from dataclasses import dataclass

import torch
from torch import Tensor

HIDDEN_SIZES = (100, 50, 25)
OUT_ACTIVATIONS = ("tanh", "linear")


class DimensionMismatchError(ValueError):
    pass


@dataclass
class MlpParams:
    """
    Fully connected tanh network. ``weights[i]`` is (out, in) like nn.Linear;
    the last layer uses ``out_activation``.
    """

    weights: list[Tensor]
    biases: list[Tensor]
    out_activation: str = "tanh"

    def __post_init__(self):
        if self.out_activation not in OUT_ACTIVATIONS:
            raise ValueError(f"out_activation must be one of {OUT_ACTIVATIONS}, got {self.out_activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatchError("weights and biases must be non-empty and paired")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.dim() != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatchError(f"layer {i}: weight {tuple(w.shape)} vs bias {tuple(b.shape)}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionMismatchError(f"layer {i} input does not match layer {i - 1} output")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def sizes(self):
        return (self.in_dim,) + tuple(w.shape[0] for w in self.weights)

    @property
    def num_params(self):
        return sum(w.numel() + b.numel() for w, b in zip(self.weights, self.biases))

    def tensors(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_tensors(cls, tensors, out_activation="tanh"):
        return cls(list(tensors[0::2]), list(tensors[1::2]), out_activation)

    def clone(self):
        return MlpParams.from_tensors([t.clone() for t in self.tensors()], self.out_activation)

    def zeros_like(self):
        return MlpParams.from_tensors([torch.zeros_like(t) for t in self.tensors()], self.out_activation)


@dataclass
class MlpCache:
    activations: list[Tensor]  # layer inputs: x, h1, h2, h3
    output: Tensor
    batched: bool


def init_mlp(
    in_dim,
    out_dim,
    out_activation="tanh",
    hidden_sizes=HIDDEN_SIZES,
    hidden_gain=1.0,
    out_gain=0.01,
    generator=None,
):
    """Orthogonal weights with per-layer gain, zero biases, float64."""
    sizes = (in_dim,) + tuple(hidden_sizes) + (out_dim,)
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        w = torch.empty(sizes[i + 1], sizes[i], dtype=torch.float64)
        gain = out_gain if i == len(sizes) - 2 else hidden_gain
        torch.nn.init.orthogonal_(w, gain=gain, generator=generator)
        weights.append(w)
        biases.append(torch.zeros(sizes[i + 1], dtype=torch.float64))
    return MlpParams(weights, biases, out_activation)


def forward(net: MlpParams, x):
    """
    Returns:
        (y, cache): y is (out_dim,) for a single input or (B, out_dim) for a batch.
    """
    x = torch.as_tensor(x, dtype=torch.float64)
    batched = x.dim() == 2
    if not batched:
        x = x.unsqueeze(0)
    if x.dim() != 2 or x.shape[1] != net.in_dim:
        raise DimensionMismatchError(f"network expects inputs of size {net.in_dim}, got {tuple(x.shape)}")

    activations = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if i < last:
            h = torch.tanh(z)
            activations.append(h)
        else:
            h = torch.tanh(z) if net.out_activation == "tanh" else z

    cache = MlpCache(activations=activations, output=h, batched=batched)
    return (h if batched else h[0]), cache


def _check_cache(net: MlpParams, cache: MlpCache):
    if len(cache.activations) != len(net.weights):
        raise DimensionMismatchError("stale cache: layer count differs from the network")
    for w, a in zip(net.weights, cache.activations):
        if a.shape[1] != w.shape[1]:
            raise DimensionMismatchError("stale cache: activation width differs from the network")


def _as_batch(grad, cache: MlpCache):
    grad = torch.as_tensor(grad, dtype=torch.float64)
    if not cache.batched:
        grad = grad.unsqueeze(0)
    if grad.shape != cache.output.shape:
        raise DimensionMismatchError(
            f"upstream gradient {tuple(grad.shape)} does not match output {tuple(cache.output.shape)}"
        )
    return grad


def backward(net: MlpParams, cache: MlpCache, upstream_grad):
    """
    Reverse-mode pass; gradients are summed over the batch.

    Returns:
        (grads, grad_in): grads is an MlpParams holding dL/dW and dL/db.
    """
    _check_cache(net, cache)
    g = _as_batch(upstream_grad, cache)
    if net.out_activation == "tanh":
        g = g * (1.0 - cache.output**2)

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.weights)
    for i in reversed(range(len(net.weights))):
        h_in = cache.activations[i]
        grad_w[i] = g.T @ h_in
        grad_b[i] = g.sum(dim=0)
        g = g @ net.weights[i]
        if i > 0:
            g = g * (1.0 - h_in**2)

    grads = MlpParams(grad_w, grad_b, net.out_activation)
    return grads, (g if cache.batched else g[0])


def jvp(net: MlpParams, cache: MlpCache, tangent: MlpParams):
    """Forward-mode directional derivative of the outputs along a parameter tangent."""
    _check_cache(net, cache)
    dh = torch.zeros_like(cache.activations[0])
    last = len(net.weights) - 1
    for i, (w, dw, db) in enumerate(zip(net.weights, tangent.weights, tangent.biases)):
        dz = dh @ w.T + cache.activations[i] @ dw.T + db
        if i < last:
            dh = dz * (1.0 - cache.activations[i + 1] ** 2)
        elif net.out_activation == "tanh":
            dh = dz * (1.0 - cache.output**2)
        else:
            dh = dz
    return dh if cache.batched else dh[0]
