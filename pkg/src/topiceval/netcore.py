"""Dense layers, activations, loss, Adam and gradient checking in plain numpy.

Everything runs in float64. Functions accept a single vector or a batch of
row vectors where that makes sense.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

PROB_FLOOR = 1e-12


@dataclass
class DenseLayer:
    W: np.ndarray  # (out_dim, in_dim)
    b: np.ndarray  # (out_dim,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "DenseLayer":
        # Glorot uniform
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-bound, bound, size=(out_dim, in_dim)), np.zeros(out_dim))


def linear_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} features, layer expects {layer.in_dim}")
    return x @ layer.W.T + layer.b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(p: np.ndarray, label: int) -> float:
    return float(-np.log(max(p[label], PROB_FLOOR)))


def normalized_entropy(p: np.ndarray) -> float:
    """Shannon entropy divided by ln K, with 0 ln 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.size < 2:
        return 0.0
    nz = p[p > 0]
    h = float(-np.sum(nz * np.log(nz)) / np.log(p.size))
    return min(max(h, 0.0), 1.0)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> tuple[Mapping[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.

    Parameter arrays are updated in place (models hold references to them)
    and returned together with the advanced state.
    """
    for name, g in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: param {params[name].shape}, grad {g.shape}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


LossFn = Callable[..., "tuple[float, Mapping[str, np.ndarray]]"]


def finite_diff_gradcheck(loss_and_grads: LossFn, params: Mapping[str, np.ndarray], inputs, labels,
                          eps: float = 1e-5, max_coords: int | None = None,
                          seed: int = 0, loss_only: Callable[..., float] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads(inputs, labels)`` must read the arrays in ``params`` (which
    are perturbed in place and restored) and return ``(loss, grads)``. Every
    coordinate is checked unless ``max_coords`` is given, in which case a
    seeded random subset of at least ``min(200, total)`` coordinates is used.
    ``loss_only`` is an optional cheaper loss evaluation for the perturbed runs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if loss_only is None:
        def loss_only(x, y):
            return loss_and_grads(x, y)[0]
    _, grads = loss_and_grads(inputs, labels)
    grads = {k: np.array(v, dtype=np.float64) for k, v in grads.items()}

    coords = [(name, i) for name in grads for i in range(params[name].size)]
    if max_coords is not None and len(coords) > max(max_coords, 200):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max(max_coords, 200), replace=False)
        coords = [coords[i] for i in sorted(pick)]

    worst = 0.0
    for name, i in coords:
        flat = params[name].reshape(-1)
        assert np.shares_memory(flat, params[name]), f"{name} is not contiguous"
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_only(inputs, labels)
        flat[i] = orig - eps
        down = loss_only(inputs, labels)
        flat[i] = orig
        numeric = (up - down) / (2 * eps)
        analytic = grads[name].reshape(-1)[i]
        err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
