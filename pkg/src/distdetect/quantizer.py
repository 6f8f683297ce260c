"""Binary probabilistic quantizer: probability controller + uniform dither."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad

from .hypothesis_model import GaussianObservationModel, pdf
from .neural import PROB_CEIL, PROB_FLOOR, SIGMOID, Mlp, forward


class GammaPair(NamedTuple):
    """``(P(u=1 | H0), P(u=1 | H1))`` for one sensor."""

    gamma0: float
    gamma1: float

    def clamped(self) -> "GammaPair":
        return GammaPair(
            float(np.clip(self.gamma0, PROB_FLOOR, PROB_CEIL)),
            float(np.clip(self.gamma1, PROB_FLOOR, PROB_CEIL)),
        )


@dataclass(frozen=True)
class ThresholdController:
    """Deterministic controller: emits 1 iff ``x > tau``."""

    tau: float = 0.0

    def prob(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) > self.tau).astype(float)

    @property
    def name(self) -> str:
        return "threshold"


@dataclass(frozen=True)
class NeuralController:
    """Controller backed by an MLP with a sigmoid head."""

    phi: Mlp

    def __post_init__(self):
        if self.phi.head != SIGMOID or self.phi.layer_sizes[0] != 1:
            raise ValueError("a neural controller needs a scalar-input sigmoid network")

    def prob(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out, _ = forward(self.phi, x.reshape(-1, 1))
        return out.reshape(x.shape)

    @property
    def name(self) -> str:
        return "neural"


def controller_eval(g, x):
    """Probability of emitting bit 1 for observation(s) ``x``."""
    p = g.prob(x)
    return float(p) if np.ndim(p) == 0 else p


def quantize(p, z):
    """Dithered comparison: 1 iff ``p >= z`` (sign of zero counts as +1)."""
    bit = np.asarray(p) >= np.asarray(z)
    return int(bit) if bit.ndim == 0 else bit.astype(np.int8)


def quantize_array(g, xs, rng: np.random.Generator) -> np.ndarray:
    """Quantize each sensor's observation with its own fresh dither draw."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("no observations to quantize")
    p = g.prob(xs)
    return quantize(p, rng.random(xs.shape))


def gamma_empirical(g, batch) -> float:
    """Batch mean of the controller output, estimating ``E[G(X) | H]``."""
    batch = np.asarray(batch, dtype=float)
    if batch.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(g.prob(batch)))


def gamma_exact_threshold(tau: float, model: GaussianObservationModel, h) -> float:
    """``P(X > tau | H)`` for the Gaussian model."""
    if tau == math.inf:
        return 0.0
    if tau == -math.inf:
        return 1.0
    return 0.5 * math.erfc((tau - model.mean(h)) / (model.sigma * math.sqrt(2.0)))


def gamma_quadrature(g, model: GaussianObservationModel, h, tol: float = 1e-10) -> float:
    """``E[G(X) | H]`` by adaptive quadrature over +-12 sigma around the mean."""
    if isinstance(g, ThresholdController):
        return gamma_exact_threshold(g.tau, model, h)
    mu, s = model.mean(h), model.sigma
    val, _ = quad(
        lambda x: float(g.prob(np.array([x]))[0]) * pdf(model, x, h),
        mu - 12 * s,
        mu + 12 * s,
        epsabs=tol,
        epsrel=tol,
        limit=400,
    )
    return float(min(1.0, max(0.0, val)))


def gamma_pair(g, model: GaussianObservationModel) -> GammaPair:
    return GammaPair(gamma_quadrature(g, model, 0), gamma_quadrature(g, model, 1))
