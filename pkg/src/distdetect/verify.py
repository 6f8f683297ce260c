"""Self-contained property suite behind ``distdetect verify``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import mpmath
import numpy as np

from . import metrics, training
from .hypothesis_model import BinaryHypothesis
from .neural import SIGMOID, SOFTMAX, init_params
from .quantizer import quantize
from .rng import stream

Q1 = 0.15865525393145707  # standard normal upper tail at 1


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<44} max deviation {self.max_deviation:.3e}  (tol {self.tolerance:.1e}, {self.seconds:.2f}s)"


def _random_case(rng):
    g0, g1 = rng.random(2)
    pi0 = float(rng.uniform(0.05, 0.95))
    return (pi0, 1.0 - pi0), (float(g0), float(g1))


def check_enumeration(seed=1, draws=200, max_k=12):
    rng = stream(seed, "verify", "enumerate")
    dev = 0.0
    for K in range(1, max_k + 1):
        for _ in range(draws):
            priors, g = _random_case(rng)
            a = metrics.mapdep_enumerate(priors, metrics.DiscreteChannel.binary(*g), K)
            dev = max(dev, abs(a - metrics.mapdep_binary(priors, g, K)))
    return dev, 1e-10


def check_average_fusion(seed=2, draws=1000, max_k=64):
    rng = stream(seed, "verify", "average")
    dev = 0.0
    for _ in range(draws):
        priors, g = _random_case(rng)
        K = int(rng.integers(1, max_k + 1))
        dev = max(dev, abs(metrics.mapdep_binary(priors, g, K) - metrics.mapdep_average(priors, g, K)))
    return dev, 1e-12


def check_chernoff_gap(seed=3, pairs=100):
    rng = stream(seed, "verify", "chernoff")
    worst = 0.0
    for _ in range(pairs):
        a = metrics.DiscreteChannel.binary(*rng.uniform(0.01, 0.99, 2))
        b = metrics.DiscreteChannel.binary(*rng.uniform(0.01, 0.99, 2))
        common, mean = metrics.identical_quantizer_gap([a, b])
        worst = max(worst, common - mean)  # must stay <= 0
        common, mean = metrics.identical_quantizer_gap([a, a, a])
        worst = max(worst, abs(common - mean))
    return worst, 1e-9


def check_chernoff_symmetric():
    r = metrics.chernoff_information(metrics.DiscreteChannel.binary(0.2, 0.8))
    return max(abs(r.value + math.log(0.8)), abs(r.alpha_star - 0.5)), 1e-8


def check_spot_value():
    return abs(metrics.mapdep_binary((0.5, 0.5), (Q1, 1 - Q1), 1) - 0.158655), 1e-6


def check_monotone_in_k(seed=4, draws=20):
    rng = stream(seed, "verify", "monotone")
    worst = 0.0
    for _ in range(draws):
        g0, g1 = np.sort(rng.random(2))
        prev = metrics.mapdep_binary((0.5, 0.5), (g0, g1), 1)
        for K in range(2, 201):
            cur = metrics.mapdep_binary((0.5, 0.5), (g0, g1), K)
            worst = max(worst, cur - prev)
            prev = cur
    return worst, 1e-15


def check_log_binomial():
    dev = 0.0
    with mpmath.workdps(40):
        for K, k in [(4, 2), (60, 30), (1000, 500), (10**5, 17), (10**6, 1), (10**6, 65), (10**6, 500_000)]:
            exact = float(mpmath.log(mpmath.binomial(K, k)))
            dev = max(dev, abs(metrics.log_binomial(K, k) - exact) / exact)
    return dev, 1e-12


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-10)


def fd_check_phi(seed=5, probes=100, h=1e-5, K=5, B=32):
    """Central differences against the analytic controller-loss gradient."""
    rng = stream(seed, "verify", "fd-phi")
    priors = BinaryHypothesis()
    worst = 0.0
    for p in range(probes):
        net = init_params((1, 4, 1), SIGMOID, seed=seed * 1000 + p)
        for w in net.weights + net.biases:
            w += rng.normal(0, 0.5, w.shape)
        x0 = rng.normal(-1, 1, B)
        x1 = rng.normal(1, 1, B)
        _, grads, _ = training.loss_phi(net, x0, x1, priors, K)
        flat = [g for pair in grads for g in pair]
        params = net.params()
        i = int(rng.integers(len(params)))
        j = tuple(int(rng.integers(s)) for s in params[i].shape)
        old = params[i][j]
        params[i][j] = old + h
        lp = training.loss_phi(net, x0, x1, priors, K)[0]
        params[i][j] = old - h
        lm = training.loss_phi(net, x0, x1, priors, K)[0]
        params[i][j] = old
        worst = max(worst, _rel_err(flat[i][j], (lp - lm) / (2 * h)))
    return worst, 1e-4


def fd_check_theta(seed=6, probes=100, h=1e-5, K=7):
    rng = stream(seed, "verify", "fd-theta")
    priors = BinaryHypothesis()
    worst = 0.0
    for p in range(probes):
        net = init_params((1, 6, 6, 2), SOFTMAX, seed=seed * 1000 + p)
        for w in net.biases:
            w += rng.normal(0, 0.3, w.shape)
        g = tuple(np.sort(rng.uniform(0.05, 0.95, 2)))
        _, grads = training.loss_theta(net, g, priors, K)
        flat = [x for pair in grads for x in pair]
        params = net.params()
        i = int(rng.integers(len(params)))
        j = tuple(int(rng.integers(s)) for s in params[i].shape)
        old = params[i][j]
        params[i][j] = old + h
        lp = training.loss_theta(net, g, priors, K)[0]
        params[i][j] = old - h
        lm = training.loss_theta(net, g, priors, K)[0]
        params[i][j] = old
        worst = max(worst, _rel_err(flat[i][j], (lp - lm) / (2 * h)))
    return worst, 1e-4


def check_dither(seed=7, n=10**6, ps=(0.1, 0.3, 0.5, 0.9)):
    """Largest bit-mean deviation in units of the 4-sigma binomial band."""
    worst = 0.0
    for p in ps:
        bits = quantize(np.full(n, p), stream(seed, "verify", "dither", p).random(n))
        band = 4 * math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(bits.mean() - p) / band)
    return worst, 1.0


CHECKS = [
    ("enumeration == binomial closed form", check_enumeration),
    ("binomial closed form == average fusion", check_average_fusion),
    ("common-alpha Chernoff <= per-sensor mean", check_chernoff_gap),
    ("symmetric Chernoff value", check_chernoff_symmetric),
    ("K=1 threshold spot value", check_spot_value),
    ("MAP error non-increasing in K", check_monotone_in_k),
    ("log binomial coefficient", check_log_binomial),
    ("controller loss gradient", fd_check_phi),
    ("detector loss gradient", fd_check_theta),
    ("dither unbiasedness (4-sigma units)", check_dither),
]


def run_verify(checks=CHECKS) -> list[CheckResult]:
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            dev, tol = fn()
            ok = bool(dev <= tol)
        except Exception as exc:  # a crashing check is a failed check
            dev, tol, ok = float("inf"), 0.0, False
            name = f"{name} [{type(exc).__name__}: {exc}]"
        results.append(CheckResult(name, ok, float(dev), tol, time.perf_counter() - t0))
    return results
