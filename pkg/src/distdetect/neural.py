"""Tiny multi-layer perceptrons with manual backprop and Adam.

Networks map a batch ``x`` of shape ``(n, in)`` through tanh hidden layers to
either a clamped sigmoid scalar (probability controller) or a softmax pair
(posterior approximator).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .rng import stream

SIGMOID = "sigmoid"
SOFTMAX = "softmax"
HEADS = (SIGMOID, SOFTMAX)

PROB_FLOOR = 1e-9
PROB_CEIL = 1.0 - 1e-9


class TraceError(RuntimeError):
    """Raised when a trace does not belong to the network's current parameters."""


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = SIGMOID
    init_seed: int | None = None
    train_seed: int | None = None
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        want = 1 if self.head == SIGMOID else 2
        if self.layer_sizes[-1] != want:
            raise ValueError(f"{self.head} head needs final width {want}, got {self.layer_sizes[-1]}")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("parameter count does not match layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {i}: expected {shape}, got W{w.shape} b{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layer_sizes) - 2

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
            self.init_seed,
            self.train_seed,
        )

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


def init_params(layer_sizes, head: str = SIGMOID, seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, head, init_seed=int(seed))


def zeros_like_net(layer_sizes, head: str = SIGMOID) -> Mlp:
    sizes = tuple(int(s) for s in layer_sizes)
    return Mlp(
        sizes,
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
        head,
    )


@dataclass
class Trace:
    net_id: int
    version: int
    activations: list[np.ndarray]  # input followed by each hidden tanh output
    output: np.ndarray
    clipped: np.ndarray | None  # sigmoid head only


def _as_batch(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if net.layer_sizes[0] == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} does not match layer size {net.layer_sizes[0]}")
    return x


def forward(net: Mlp, x) -> tuple[np.ndarray, Trace]:
    """Evaluate ``net`` on a batch; returns ``(output, trace)``.

    Output has shape ``(n, 1)`` for the sigmoid head (clamped into
    ``[1e-9, 1 - 1e-9]``) and ``(n, 2)`` for the softmax head.
    """
    h = _as_batch(net, x)
    acts = [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < last:
            h = np.tanh(z)
            acts.append(h)
    clipped = None
    if net.head == SIGMOID:
        y = expit(z)
        clipped = (y < PROB_FLOOR) | (y > PROB_CEIL)
        out = np.clip(y, PROB_FLOOR, PROB_CEIL)
    else:
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=1, keepdims=True)
    return out, Trace(id(net), net.version, acts, out, clipped)


def backward(net: Mlp, trace: Trace, upstream) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients ``[(dW, db), ...]`` of ``sum(upstream * output)``."""
    if trace.net_id != id(net) or trace.version != net.version:
        raise TraceError("trace is stale or was produced by a different network")
    g = np.asarray(upstream, dtype=float)
    if g.shape != trace.output.shape:
        raise ValueError(f"upstream shape {g.shape} != output shape {trace.output.shape}")
    y = trace.output
    if net.head == SIGMOID:
        dz = np.where(trace.clipped, 0.0, g * y * (1.0 - y))
    else:
        dz = y * (g - np.sum(g * y, axis=1, keepdims=True))
    grads = []
    for i in range(len(net.weights) - 1, -1, -1):
        a = trace.activations[i]
        grads.append((a.T @ dz, dz.sum(axis=0)))
        if i > 0:
            dz = (dz @ net.weights[i].T) * (1.0 - a * a)
    grads.reverse()
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-4, **kw) -> "AdamState":
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        return cls([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()], lr=lr, **kw)


def adam_step(net: Mlp, state: AdamState, grads) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    flat = [g for pair in grads for g in pair]
    params = net.params()
    if len(flat) != len(params):
        raise ValueError("gradient list does not match parameters")
    for p, g in zip(params, flat):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient (max |g| = {np.nanmax(np.abs(g))})")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, flat, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.version += 1
    return net, state


# -- checkpoints -------------------------------------------------------------


def net_to_dict(net: Mlp) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "head": net.head,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "init_seed": net.init_seed,
        "train_seed": net.train_seed,
    }


def net_from_dict(d: dict) -> Mlp:
    return Mlp(
        tuple(d["layer_sizes"]),
        [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], d["layer_sizes"][:-1], d["layer_sizes"][1:])],
        [np.array(b, dtype=float) for b in d["biases"]],
        d["head"],
        d.get("init_seed"),
        d.get("train_seed"),
    )


def adam_to_dict(state: AdamState) -> dict:
    return {
        "t": state.t,
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "m": [a.tolist() for a in state.m],
        "v": [a.tolist() for a in state.v],
    }


def adam_from_dict(d: dict, net: Mlp) -> AdamState:
    shapes = [p.shape for p in net.params()]
    return AdamState(
        [np.array(a, dtype=float).reshape(s) for a, s in zip(d["m"], shapes)],
        [np.array(a, dtype=float).reshape(s) for a, s in zip(d["v"], shapes)],
        int(d["t"]),
        float(d["lr"]),
        float(d["beta1"]),
        float(d["beta2"]),
        float(d["eps"]),
    )


def save_net(net: Mlp, path) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net)) + "\n")


def load_net(path) -> Mlp:
    return net_from_dict(json.loads(Path(path).read_text()))
