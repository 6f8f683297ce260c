"""Detection-performance metrics.

MAP detection error probability (by brute-force enumeration, by the binomial
closed form, and over the sensor-average statistic), Chernoff information,
the posterior KL divergence of a fusion detector, and helpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import xlogy

from .hypothesis_model import Hypothesis
from .optimize import golden_section_min

ENUMERATION_LIMIT = 2**24
LOG_SPACE_K = 60
LOG_FLOOR = 1e-12


def _priors(priors) -> tuple[float, float]:
    if hasattr(priors, "pi0"):
        return float(priors.pi0), float(priors.pi1)
    pi0, pi1 = priors
    return float(pi0), float(pi1)


def _gammas(gammas) -> tuple[float, float]:
    g0, g1 = gammas
    return float(g0), float(g1)


# -- binomial coefficients ---------------------------------------------------


def _stirlerr(n: float) -> float:
    """``ln n! - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`` for n > 15."""
    n2 = n * n
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * n2)) / n2) / n2) / n2) / n


def log_binomial(K: int, k: int) -> float:
    """Natural log of the binomial coefficient ``C(K, k)``.

    Small ``min(k, K - k)`` sums the ratio logs directly; otherwise a
    Stirling expansion whose leading terms are all non-negative is used, which
    avoids the cancellation of a log-gamma difference when ``K`` is large.
    """
    K, k = int(K), int(k)
    if not 0 <= k <= K:
        raise ValueError(f"k={k} out of range for K={K}")
    m = min(k, K - k)
    if m == 0:
        return 0.0
    if m <= 30:
        return math.fsum(math.log((K - i) / (i + 1)) for i in range(m))
    j = K - m
    return (
        m * math.log(K / m)
        - j * math.log1p(-m / K)
        + 0.5 * math.log(K / (2.0 * math.pi * m * j))
        + _stirlerr(K)
        - _stirlerr(m)
        - _stirlerr(j)
    )


@lru_cache(maxsize=256)
def _log_binomial_row(K: int) -> np.ndarray:
    row = np.array([log_binomial(K, k) for k in range(K + 1)])
    row.setflags(write=False)
    return row


@lru_cache(maxsize=256)
def _binomial_row(K: int) -> np.ndarray:
    row = np.array([float(math.comb(K, k)) for k in range(K + 1)])
    row.setflags(write=False)
    return row


def log_binomial_pmf(gamma: float, K: int) -> np.ndarray:
    """``ln[C(K,k) g^k (1-g)^(K-k)]`` for k = 0..K, with 0 log 0 := 0."""
    k = np.arange(K + 1)
    with np.errstate(divide="ignore"):
        return _log_binomial_row(K) + xlogy(k, gamma) + xlogy(K - k, 1.0 - gamma)


def binomial_pmf(gamma: float, K: int) -> np.ndarray:
    k = np.arange(K + 1)
    if K <= LOG_SPACE_K:
        return _binomial_row(K) * gamma**k * (1.0 - gamma) ** (K - k)
    return np.exp(log_binomial_pmf(gamma, K))


# -- channels ----------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteChannel:
    """Per-sensor message law ``p(u | H_n)`` over L levels."""

    p_given_h0: np.ndarray
    p_given_h1: np.ndarray

    def __post_init__(self):
        p0 = np.asarray(self.p_given_h0, dtype=float)
        p1 = np.asarray(self.p_given_h1, dtype=float)
        if p0.ndim != 1 or p0.shape != p1.shape or p0.size < 2:
            raise ValueError("channel needs two equal-length vectors with L >= 2")
        for p in (p0, p1):
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(f"not a probability vector: {p}")
        object.__setattr__(self, "p_given_h0", p0)
        object.__setattr__(self, "p_given_h1", p1)

    @property
    def levels(self) -> int:
        return self.p_given_h0.size

    @classmethod
    def binary(cls, gamma0: float, gamma1: float) -> "DiscreteChannel":
        return cls(np.array([1.0 - gamma0, gamma0]), np.array([1.0 - gamma1, gamma1]))


# -- MAP detection error probability ----------------------------------------


def mapdep_enumerate(priors, channel: DiscreteChannel, K: int) -> float:
    """Exact ``sum_u min{pi0 p(u|H0), pi1 p(u|H1)}`` over all ``L**K`` vectors."""
    pi0, pi1 = _priors(priors)
    if K < 1 or channel.levels**K > ENUMERATION_LIMIT:
        raise ValueError(f"cannot enumerate {channel.levels}**{K} message vectors")
    j0 = np.array([pi0])
    j1 = np.array([pi1])
    for _ in range(K):
        j0 = np.outer(j0, channel.p_given_h0).ravel()
        j1 = np.outer(j1, channel.p_given_h1).ravel()
    return float(np.minimum(j0, j1).sum())


def mapdep_binary(priors, gammas, K: int) -> float:
    """Minimum MAP error for K i.i.d. binary sensors, summed over the count k."""
    pi0, pi1 = _priors(priors)
    g0, g1 = _gammas(gammas)
    K = int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(K + 1)
    if K <= LOG_SPACE_K:
        c = _binomial_row(K)
        a0 = pi0 * c * g0**k * (1.0 - g0) ** (K - k)
        a1 = pi1 * c * g1**k * (1.0 - g1) ** (K - k)
        return float(np.minimum(a0, a1).sum())
    with np.errstate(divide="ignore"):
        l0 = math.log(pi0) if pi0 > 0 else -np.inf
        l1 = math.log(pi1) if pi1 > 0 else -np.inf
        lmin = np.minimum(l0 + log_binomial_pmf(g0, K), l1 + log_binomial_pmf(g1, K))
    top = lmin.max()
    if top == -np.inf:
        return 0.0
    return float(math.exp(top) * np.exp(lmin - top).sum())


def average_count_law(gamma: float, K: int) -> np.ndarray:
    """Law of ``K * u_bar`` built by convolving K Bernoulli(gamma) messages."""
    dist = np.array([1.0])
    for _ in range(K):
        nxt = np.zeros(dist.size + 1)
        nxt[:-1] += dist * (1.0 - gamma)
        nxt[1:] += dist * gamma
        dist = nxt
    return dist


def mapdep_average(priors, gammas, K: int) -> float:
    """Minimum MAP error when the fusion center only sees the average bit."""
    pi0, pi1 = _priors(priors)
    g0, g1 = _gammas(gammas)
    if K < 1:
        raise ValueError("K must be >= 1")
    return float(np.minimum(pi0 * average_count_law(g0, K), pi1 * average_count_law(g1, K)).sum())


# -- Chernoff information ----------------------------------------------------


@dataclass(frozen=True)
class ChernoffResult:
    value: float
    alpha_star: float


def _log_affinity(channel: DiscreteChannel):
    keep = (channel.p_given_h0 > 0) | (channel.p_given_h1 > 0)
    p0 = channel.p_given_h0[keep]
    p1 = channel.p_given_h1[keep]

    def f(alpha):
        with np.errstate(divide="ignore"):
            return float(np.log(np.sum(p0**alpha * p1 ** (1.0 - alpha))))

    return f


def chernoff_information(channel: DiscreteChannel, tol: float = 1e-9) -> ChernoffResult:
    """``-min_a log sum_u p(u|H0)^a p(u|H1)^(1-a)`` over ``a`` in [0, 1] (nats)."""
    alpha, fmin = golden_section_min(_log_affinity(channel), 0.0, 1.0, tol)
    return ChernoffResult(max(0.0, -fmin), alpha)


def identical_quantizer_gap(channels, tol: float = 1e-9) -> tuple[float, float]:
    """Compare one shared exponent against per-sensor exponents.

    Returns ``(common, mean)`` where ``common`` is the average Chernoff
    information of the K independent sensors (one ``alpha`` for all) and
    ``mean`` averages each sensor's own Chernoff information. Always
    ``common <= mean``, with equality for identical channels.
    """
    channels = list(channels)
    if not channels:
        raise ValueError("need at least one channel")
    L = channels[0].levels
    if any(c.levels != L for c in channels):
        raise ValueError("all channels must share the same number of levels")
    fs = [_log_affinity(c) for c in channels]
    _, fmin = golden_section_min(lambda a: sum(f(a) for f in fs), 0.0, 1.0, tol)
    common = max(0.0, -fmin / len(channels))
    mean = float(np.mean([chernoff_information(c, tol).value for c in channels]))
    return common, mean


# -- detector divergence and MAP rule -----------------------------------------


def kl_binary(priors, gammas, detector_table, K: int) -> float:
    """Expected KL divergence from the exact posterior to a detector table.

    ``detector_table[k]`` is the detector's posterior pair at ``u_bar = k/K``.
    """
    pi0, pi1 = _priors(priors)
    g0, g1 = _gammas(gammas)
    F = np.asarray(detector_table, dtype=float)
    if F.shape != (K + 1, 2):
        raise ValueError(f"detector table must have shape {(K + 1, 2)}, got {F.shape}")
    if np.any(F < 0) or np.any(np.abs(F.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("detector table rows must be normalized probability pairs")
    with np.errstate(divide="ignore"):
        lj = np.stack(
            [np.log(pi0) + log_binomial_pmf(g0, K), np.log(pi1) + log_binomial_pmf(g1, K)],
            axis=1,
        )
        lmarg = np.logaddexp(lj[:, 0], lj[:, 1])[:, None]
    j = np.exp(lj)
    live = j > 0
    log_post = np.where(live, lj - np.where(np.isfinite(lmarg), lmarg, 0.0), 0.0)
    terms = np.where(live, j * (log_post - np.log(np.maximum(F, LOG_FLOOR))), 0.0)
    return float(max(0.0, terms.sum()))


def map_decide_ratio(priors, likelihood0: float, likelihood1: float) -> Hypothesis:
    """MAP rule on a likelihood pair: H0 iff pi0*l0 > pi1*l1, ties go to H1."""
    if likelihood0 < 0 or likelihood1 < 0:
        raise ValueError("likelihoods must be non-negative")
    if likelihood0 == 0 and likelihood1 == 0:
        raise ValueError("both likelihoods are zero")
    pi0, pi1 = _priors(priors)
    return Hypothesis.H0 if pi0 * likelihood0 > pi1 * likelihood1 else Hypothesis.H1
