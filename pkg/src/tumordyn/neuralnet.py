"""Small tanh multilayer perceptrons with deterministic training machinery.

Parameters live in one flat vector per network (weights then bias for each
consecutive layer pair, in order), initialization is Glorot-uniform drawn
from a seeded xoshiro256** stream so runs are bit-reproducible, gradients
come from the reverse-mode tape in `autodiff`, and updates use a plain
full-batch Adam.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad

__all__ = [
    "Xoshiro256StarStar",
    "MLPArch",
    "MLPParams",
    "AdamState",
    "GradientError",
    "init_params",
    "init_params_from_stream",
    "unpack_layers",
    "mlp_apply",
    "forward",
    "grad",
    "value_and_grad",
    "adam_update",
    "adam_step",
    "save_params",
    "load_params",
    "params_to_blob",
    "params_from_blob",
]

_MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** PRNG (Blackman & Vigna), state seeded via splitmix64."""

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s = (s + 0x9E3779B97F4A7C15) & _MASK64
            z = s
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            state.append(z ^ (z >> 31))
        self._s = state

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random mantissa bits."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)])


@dataclass(frozen=True)
class MLPArch:
    """Layer widths, input first and output last; tanh on hidden layers."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("architecture needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be >= 1, got {widths}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        ws = self.layer_widths
        return sum((ws[i] + 1) * ws[i + 1] for i in range(len(ws) - 1))

    def layout(self):
        """(weight_start, weight_stop, bias_stop, (fan_out, fan_in)) per layer."""
        spans = []
        offset = 0
        ws = self.layer_widths
        for i in range(len(ws) - 1):
            fi, fo = ws[i], ws[i + 1]
            w_stop = offset + fo * fi
            b_stop = w_stop + fo
            spans.append((offset, w_stop, b_stop, (fo, fi)))
            offset = b_stop
        return spans


@dataclass(frozen=True)
class MLPParams:
    """Architecture plus the flat parameter vector it indexes into."""

    arch: MLPArch
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or theta.size != self.arch.n_params:
            raise ValueError(
                f"theta has {theta.size} entries, architecture {self.arch.layer_widths} "
                f"needs {self.arch.n_params}"
            )


@dataclass(frozen=True)
class AdamState:
    """Adam optimizer moments; step_count drives bias correction."""

    learning_rate: float
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.m.shape != self.v.shape or self.step_count < 0:
            raise ValueError("inconsistent Adam state")

    @classmethod
    def fresh(cls, n_params: int, learning_rate: float) -> "AdamState":
        return cls(learning_rate=learning_rate, m=np.zeros(n_params), v=np.zeros(n_params))


class GradientError(ArithmeticError):
    """Raised when backpropagation meets a non-finite intermediate."""


def init_params_from_stream(arch: MLPArch, rng: Xoshiro256StarStar) -> MLPParams:
    """Glorot-uniform weights drawn from `rng` in layer order; zero biases."""
    pieces = []
    ws = arch.layer_widths
    for i in range(len(ws) - 1):
        fi, fo = ws[i], ws[i + 1]
        limit = np.sqrt(6.0 / (fi + fo))
        pieces.append(limit * (2.0 * rng.uniforms(fo * fi) - 1.0))
        pieces.append(np.zeros(fo))
    return MLPParams(arch, np.concatenate(pieces))


def init_params(arch: MLPArch, seed: int) -> MLPParams:
    return init_params_from_stream(arch, Xoshiro256StarStar(seed))


def unpack_layers(arch: MLPArch, theta):
    """Split a flat vector (ndarray or tape Var) into (W, b) per layer."""
    layers = []
    for w_start, w_stop, b_stop, shape in arch.layout():
        W = ad.slice_reshape(theta, w_start, w_stop, shape)
        b = ad.slice_reshape(theta, w_stop, b_stop, (shape[0],))
        layers.append((W, b))
    return layers


def mlp_apply(layers, x):
    """Affine + tanh per hidden layer, affine only on the output layer."""
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = ad.affine(W, b, h)
        if i < last:
            h = ad.tanh(h)
    return h


def forward(params: MLPParams, x) -> np.ndarray:
    """Evaluate the network on one input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.arch.in_width,):
        raise ValueError(f"input shape {x.shape} does not match input width {params.arch.in_width}")
    return mlp_apply(unpack_layers(params.arch, params.theta), x)


def value_and_grad(loss_fn, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Evaluate loss_fn on a tape leaf for theta; return (value, d/dtheta).

    loss_fn must be built from the operations in `autodiff` (plus anything
    operand-generic layered on them, such as the unrolled RK4 solver) and
    return a size-1 value.
    """
    theta = np.asarray(theta, dtype=float)
    leaf = ad.Var(theta, op="theta")
    out = loss_fn(leaf)
    if not isinstance(out, ad.Var):
        # loss did not touch theta; gradient is identically zero
        return float(np.asarray(out).reshape(())), np.zeros_like(theta)
    value = float(out.value.reshape(()))
    if not np.isfinite(value):
        where = ad.find_nonfinite(out)
        raise GradientError(f"non-finite loss; first bad value at {where}")
    ad.backward(out)
    g = leaf.grad if leaf.grad is not None else np.zeros_like(theta)
    if not np.all(np.isfinite(g)):
        where = ad.find_nonfinite(out)
        raise GradientError(f"non-finite gradient; first bad value at {where}")
    return value, g


def grad(loss_fn, params: MLPParams) -> np.ndarray:
    """Exact reverse-mode gradient of loss_fn with respect to params.theta."""
    _, g = value_and_grad(loss_fn, params.theta)
    return g


def adam_update(theta: np.ndarray, g: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step on a raw parameter vector."""
    if theta.shape != g.shape or theta.shape != state.m.shape:
        raise ValueError("theta, gradient, and Adam moments must have equal length")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_theta = theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_theta, replace(state, m=m, v=v, step_count=t)


def adam_step(params: MLPParams, g: np.ndarray, state: AdamState) -> tuple[MLPParams, AdamState]:
    theta, new_state = adam_update(params.theta, g, state)
    return MLPParams(params.arch, theta), new_state


# --- checkpoint format -----------------------------------------------
#
# JSON with float64 entries serialized through float.hex() so a checkpoint
# round-trips bit-exactly:
#   {"format": "tumordyn-mlp-v1", "layer_widths": [...],
#    "seed": <int or null>, "theta_hex": ["0x1.5p+3", ...]}


def params_to_blob(params: MLPParams, seed=None) -> dict:
    return {
        "format": "tumordyn-mlp-v1",
        "layer_widths": list(params.arch.layer_widths),
        "seed": seed,
        "theta_hex": [float(x).hex() for x in params.theta],
    }


def params_from_blob(blob: dict) -> MLPParams:
    if blob.get("format") != "tumordyn-mlp-v1":
        raise ValueError(f"unrecognized checkpoint format: {blob.get('format')!r}")
    arch = MLPArch(tuple(blob["layer_widths"]))
    theta = np.array([float.fromhex(h) for h in blob["theta_hex"]])
    return MLPParams(arch, theta)


def save_params(params: MLPParams, path, seed=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_blob(params, seed), fh, indent=1)


def load_params(path) -> MLPParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_blob(json.load(fh))
