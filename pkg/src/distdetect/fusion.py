"""Fusion center: average-bit detection and Monte Carlo evaluation."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .hypothesis_model import BinaryHypothesis, GaussianObservationModel, Hypothesis
from .metrics import _gammas, _priors, log_binomial_pmf, map_decide_ratio
from .neural import SOFTMAX, Mlp, forward
from .quantizer import quantize
from .rng import stream

Z95 = 1.96


def average_bits(bits) -> tuple[int, int]:
    """Exact ``(k, K)`` representation of the average of a bit vector."""
    bits = np.asarray(bits)
    if bits.size == 0:
        raise ValueError("empty bit vector")
    return int(bits.sum()), int(bits.size)


def oracle_posterior(priors, gammas, k: int, K: int) -> tuple[float, float]:
    """Exact ``(p(H0 | k/K), p(H1 | k/K))`` under the binomial count law."""
    if not 0 <= k <= K:
        raise ValueError(f"k={k} out of range for K={K}")
    return tuple(oracle_posterior_table(priors, gammas, K)[k])


def oracle_posterior_table(priors, gammas, K: int, unreachable: str = "raise") -> np.ndarray:
    """Posterior pairs for every ``k = 0..K`` as a ``(K + 1, 2)`` array.

    Counts with zero probability under both hypotheses raise, or get the
    prior pair when ``unreachable="prior"`` (they never occur, so any
    decision there is harmless).
    """
    pi0, pi1 = _priors(priors)
    g0, g1 = _gammas(gammas)
    with np.errstate(divide="ignore"):
        lj = np.stack(
            [np.log(pi0) + log_binomial_pmf(g0, K), np.log(pi1) + log_binomial_pmf(g1, K)],
            axis=1,
        )
    top = lj.max(axis=1, keepdims=True)
    dead = top[:, 0] == -np.inf
    if np.any(dead) and unreachable == "prior":
        with np.errstate(divide="ignore"):
            lj[dead] = np.log([pi0, pi1])
        top = lj.max(axis=1, keepdims=True)
    elif np.any(dead):
        bad = int(np.flatnonzero(top[:, 0] == -np.inf)[0])
        raise ValueError(f"u_bar = {bad}/{K} has zero probability under both hypotheses")
    w = np.exp(lj - top)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class NeuralDetector:
    theta: Mlp

    def __post_init__(self):
        if self.theta.head != SOFTMAX or self.theta.layer_sizes[0] != 1:
            raise ValueError("a neural detector needs a scalar-input softmax network")

    def table(self, K: int) -> np.ndarray:
        out, _ = forward(self.theta, np.arange(K + 1, dtype=float) / K)
        return out

    @property
    def name(self) -> str:
        return "neural"


@dataclass(frozen=True)
class OracleDetector:
    priors: BinaryHypothesis
    gammas: tuple[float, float]
    K: int

    def table(self, K: int) -> np.ndarray:
        if K != self.K:
            raise ValueError(f"oracle detector built for K={self.K}, asked for K={K}")
        return oracle_posterior_table(self.priors, self.gammas, K, unreachable="prior")

    @property
    def name(self) -> str:
        return "oracle"


def detector_posterior(d, k: int, K: int) -> tuple[float, float]:
    if not 0 <= k <= K:
        raise ValueError(f"k={k} out of range for K={K}")
    p0, p1 = d.table(K)[k]
    return float(p0), float(p1)


def decide_posterior(posterior) -> Hypothesis:
    """Arg-max of a posterior pair; ties go to H1."""
    p0, p1 = posterior
    return Hypothesis.H0 if p0 > p1 else Hypothesis.H1


def decide(d, k: int, K: int) -> Hypothesis:
    return decide_posterior(detector_posterior(d, k, K))


def map_decide_vector(priors, gammas, bits) -> Hypothesis:
    """MAP decision from the full bit vector, ignoring the average shortcut."""
    pi0, pi1 = _priors(priors)
    g0, g1 = _gammas(gammas)
    bits = np.asarray(bits)
    ones = bits == 1
    l0 = float(np.prod(np.where(ones, g0, 1 - g0)))
    l1 = float(np.prod(np.where(ones, g1, 1 - g1)))
    return map_decide_ratio((pi0, pi1), l0, l1)


def decision_table(d, K: int) -> np.ndarray:
    """Decision (0 or 1) for each count ``k = 0..K``."""
    t = d.table(K)
    return np.where(t[:, 0] > t[:, 1], 0, 1).astype(np.int8)


# -- Monte Carlo -------------------------------------------------------------


def wilson_halfwidth(errors: int, n: int, z: float = Z95) -> float:
    p = errors / n
    return z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)


@dataclass
class EvaluationReport:
    error_rate: float
    trials: int
    ci_halfwidth: float
    errors: int
    trials_h0: int
    errors_h0: int
    trials_h1: int
    errors_h1: int
    config: dict = field(default_factory=dict)

    @property
    def error_rate_h0(self) -> float:
        return self.errors_h0 / self.trials_h0 if self.trials_h0 else float("nan")

    @property
    def error_rate_h1(self) -> float:
        return self.errors_h1 / self.trials_h1 if self.trials_h1 else float("nan")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _run_block(model, priors, controller, decisions, K, n, seed, block):
    rng = stream(seed, "mc", block)
    h = (rng.random(n) < priors.pi1).astype(np.int8)
    means = np.where(h == 1, model.mean1, model.mean0)
    x = means[:, None] + model.sigma * rng.standard_normal((n, K))
    bits = quantize(controller.prob(x), rng.random((n, K)))
    k = bits.sum(axis=1)
    wrong = decisions[k] != h
    return (
        int(np.sum(h == 0)),
        int(np.sum(wrong & (h == 0))),
        int(np.sum(h == 1)),
        int(np.sum(wrong & (h == 1))),
    )


def monte_carlo_error(
    model: GaussianObservationModel,
    priors: BinaryHypothesis,
    controller,
    detector,
    K: int,
    trials: int,
    seed: int,
    block_size: int = 20_000,
    workers: int = 1,
) -> EvaluationReport:
    """End-to-end error rate of (controller, detector) over fresh trials.

    Trials are split into fixed-size blocks, each with its own derived stream,
    so the result does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    decisions = decision_table(detector, K)
    sizes = [min(block_size, trials - s) for s in range(0, trials, block_size)]
    args = [(model, priors, controller, decisions, K, n, seed, b) for b, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _run_block(*a), args))
    else:
        parts = [_run_block(*a) for a in args]
    n0, e0, n1, e1 = (sum(col) for col in zip(*parts))
    errors = e0 + e1
    rate = errors / trials
    if errors < 10:
        ci = wilson_halfwidth(errors, trials)
    else:
        ci = Z95 * math.sqrt(rate * (1 - rate) / trials)
    return EvaluationReport(
        error_rate=rate,
        trials=trials,
        ci_halfwidth=ci,
        errors=errors,
        trials_h0=n0,
        errors_h0=e0,
        trials_h1=n1,
        errors_h1=e1,
        config={
            "K": K,
            "sigma": model.sigma,
            "snr_db": -20.0 * math.log10(model.sigma),
            "seed": seed,
            "controller": getattr(controller, "name", type(controller).__name__),
            "detector": getattr(detector, "name", type(detector).__name__),
        },
    )

