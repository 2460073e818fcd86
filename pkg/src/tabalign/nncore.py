"""Dense network kernel: ReLU MLPs, cosine similarity, the contrastive
alignment loss, and Adam.

All gradients are hand-derived for this fixed architecture. Matrices are
row-major with one sample per row; a layer computes ``x @ W.T + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LossError, OptimizerError

NORM_EPS = 1e-12


@dataclass
class DenseLayer:
    """Affine layer parameters with matching gradient buffers."""

    weight: np.ndarray
    bias: np.ndarray
    grad_weight: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])


def init_layer(
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    dtype: np.dtype = np.float64,
) -> DenseLayer:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    bound = 1.0 / math.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)
    bias = rng.uniform(-bound, bound, size=fan_out).astype(dtype)
    return DenseLayer(weight=weight, bias=bias)


def mlp_forward(
    layers: list[DenseLayer], x: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Forward pass with ReLU between layers (none after the last).

    Returns the output and a cache of (input, pre-activation) per layer for
    :func:`mlp_backward`.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-d batch, got shape {x.shape}")
    if x.shape[1] != layers[0].in_dim:
        raise DimensionError(
            f"input width {x.shape[1]} != first layer in_dim {layers[0].in_dim}"
        )
    cache: list[tuple[np.ndarray, np.ndarray]] = []
    h = x
    for i, layer in enumerate(layers):
        z = h @ layer.weight.T + layer.bias
        cache.append((h, z))
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return h, cache


def mlp_backward(
    layers: list[DenseLayer],
    cache: list[tuple[np.ndarray, np.ndarray]],
    d_out: np.ndarray,
) -> np.ndarray:
    """Backpropagate through the stack, filling each layer's gradient buffers.

    Returns the gradient with respect to the network input.
    """
    d_z = np.asarray(d_out)
    d_in = d_z
    for i in reversed(range(len(layers))):
        h_in, _ = cache[i]
        layers[i].grad_weight[...] = d_z.T @ h_in
        layers[i].grad_bias[...] = d_z.sum(axis=0)
        d_in = d_z @ layers[i].weight
        if i > 0:
            d_z = d_in * (cache[i - 1][1] > 0.0)
    return d_in


def cosine_sim_flagged(u: np.ndarray, v: np.ndarray) -> tuple[float, bool]:
    """Cosine similarity plus a flag set when either norm is below 1e-12."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < NORM_EPS or nv < NORM_EPS:
        return 0.0, True
    return float(u @ v / (nu * nv)), False


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; degenerate (near-zero) vectors yield 0."""
    value, _ = cosine_sim_flagged(u, v)
    return value


def infonce_loss(
    z: np.ndarray,
    pos_index: np.ndarray,
    temperature: float = 0.1,
) -> tuple[float, np.ndarray]:
    """Contrastive alignment loss over a batch of projected embeddings.

    Per row i the loss is
    ``-log( exp(s(z_i, z_pos(i)) / t) / sum_{a != i} exp(s(z_i, z_a) / t) )``
    with s = cosine similarity; the denominator runs over all other batch
    rows including the positive. Returns the mean loss and the exact
    analytic gradient with respect to ``z``.
    """
    z = np.asarray(z, dtype=np.float64)
    b = z.shape[0]
    if b < 2:
        raise LossError(f"contrastive loss needs a batch of >= 2, got {b}")
    pos = np.asarray(pos_index, dtype=np.int64)
    if pos.shape != (b,):
        raise LossError(f"pos_index shape {pos.shape} != ({b},)")
    if np.any(pos == np.arange(b)):
        raise LossError("a row cannot be its own positive partner")
    if np.any((pos < 0) | (pos >= b)):
        raise LossError("pos_index out of range")

    norms = np.linalg.norm(z, axis=1)
    degenerate = norms < NORM_EPS
    safe = np.where(degenerate, 1.0, norms)
    zhat = z / safe[:, None]
    zhat[degenerate] = 0.0

    sims = zhat @ zhat.T
    logits = sims / temperature
    np.fill_diagonal(logits, -np.inf)

    row_max = logits.max(axis=1)
    expl = np.exp(logits - row_max[:, None])
    np.fill_diagonal(expl, 0.0)
    denom = expl.sum(axis=1)
    losses = -(logits[np.arange(b), pos] - row_max) + np.log(denom)
    loss = float(losses.mean())

    # Loss is bounded because similarities live in [-1, 1]; non-finite rows
    # are left for the caller's abort path.
    if np.all(np.isfinite(losses)):
        bound = math.log(b - 1) + 2.0 / temperature
        assert losses.min() >= -1e-9 and losses.max() <= bound + 1e-9

    softmax = expl / denom[:, None]
    coeff = softmax / (temperature * b)
    coeff[np.arange(b), pos] -= 1.0 / (temperature * b)
    np.fill_diagonal(coeff, 0.0)

    d_zhat = (coeff + coeff.T) @ zhat
    inner = (d_zhat * zhat).sum(axis=1, keepdims=True)
    d_z = (d_zhat - inner * zhat) / safe[:, None]
    d_z[degenerate] = 0.0
    return loss, d_z


@dataclass
class AdamState:
    """First/second-moment accumulators and step counter for one tensor list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 0.001) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            lr=lr,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place.

    Fails fast on non-finite gradients. Deterministic: identical inputs and
    state produce bitwise-identical results.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise OptimizerError("parameter, gradient, and state lists disagree in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise OptimizerError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError("non-finite gradient")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
