"""Chernoff-optimal deterministic threshold quantizer used as reference."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .hypothesis_model import GaussianObservationModel
from .metrics import DiscreteChannel, chernoff_information
from .optimize import golden_section_min
from .quantizer import GammaPair, ThresholdController, gamma_exact_threshold

TAU_TOL = 1e-8
GRID_POINTS = 201


@dataclass(frozen=True)
class BaselineQuantizer:
    tau_star: float
    gamma0: float
    gamma1: float
    chernoff: float
    snr_db: float | None = None

    @property
    def gammas(self) -> GammaPair:
        return GammaPair(self.gamma0, self.gamma1)

    @property
    def controller(self) -> ThresholdController:
        return ThresholdController(self.tau_star)

    def to_dict(self) -> dict:
        return asdict(self)


def threshold_channel(tau: float, model: GaussianObservationModel) -> DiscreteChannel:
    return DiscreteChannel.binary(gamma_exact_threshold(tau, model, 0), gamma_exact_threshold(tau, model, 1))


def threshold_chernoff(tau: float, model: GaussianObservationModel) -> float:
    return chernoff_information(threshold_channel(tau, model)).value


def optimal_threshold(model: GaussianObservationModel, snr_db: float | None = None) -> BaselineQuantizer:
    """Threshold maximising the per-sensor Chernoff information.

    A coarse grid over the region between the two means (padded by 4 sigma)
    locates the best cell, then golden-section search refines it to 1e-8.
    """
    lo = min(model.mean0, model.mean1) - 4 * model.sigma
    hi = max(model.mean0, model.mean1) + 4 * model.sigma
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = [threshold_chernoff(t, model) for t in grid]
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    tau, neg = golden_section_min(lambda t: -threshold_chernoff(t, model), a, b, TAU_TOL)
    g = threshold_channel(tau, model)
    return BaselineQuantizer(float(tau), float(g.p_given_h0[1]), float(g.p_given_h1[1]), float(-neg), snr_db)
