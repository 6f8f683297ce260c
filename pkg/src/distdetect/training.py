"""Separate two-stage training.

Stage one fits the probability controller against the closed-form MAP error
of its batch-estimated gammas. Stage two freezes the controller and fits the
fusion detector against the expected posterior KL divergence.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hypothesis_model import BinaryHypothesis, Dataset
from .metrics import binomial_pmf, log_binomial_pmf
from .neural import (
    PROB_CEIL,
    PROB_FLOOR,
    SIGMOID,
    SOFTMAX,
    AdamState,
    Mlp,
    adam_from_dict,
    adam_step,
    adam_to_dict,
    backward,
    forward,
    init_params,
    net_from_dict,
    net_to_dict,
)
from .quantizer import GammaPair
from .rng import derive_seed, stream

CONTROLLER = "controller"
DETECTOR = "detector"


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainingConfig:
    K: int = 20
    T: int = 50_000
    B: int = 500
    epochs: int = 500
    lr: float = 1e-4
    seed: int = 0
    controller_widths: tuple[int, ...] = (20, 20, 20)
    detector_widths: tuple[int, ...] = (30, 30, 30)
    pi0: float = 0.5
    shuffle: bool = True

    def __post_init__(self):
        self.controller_widths = tuple(int(w) for w in self.controller_widths)
        self.detector_widths = tuple(int(w) for w in self.detector_widths)
        if self.K < 1 or self.T < 1 or self.B < 1:
            raise ValueError("K, T and B must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    @property
    def priors(self) -> BinaryHypothesis:
        return BinaryHypothesis.from_pi0(self.pi0)

    @property
    def n_batches(self) -> int:
        return -(-self.T // self.B)


@dataclass
class LossCurve:
    stage: str
    losses: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("epoch,loss,stage\n")
            for i, v in enumerate(self.losses, start=1):
                fh.write(f"{i},{v:.17g},{self.stage}\n")

    @classmethod
    def read_csv(cls, path) -> "LossCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        stage = rows[0]["stage"] if rows else ""
        return cls(stage, [float(r["loss"]) for r in rows])


# -- losses ------------------------------------------------------------------


def _pmf_and_slope(gamma: float, K: int):
    """Binomial pmf over k and its derivative with respect to gamma."""
    k = np.arange(K + 1)
    pmf = binomial_pmf(gamma, K)
    return pmf, pmf * (k / gamma - (K - k) / (1.0 - gamma))


def mapdep_with_grad(priors, gammas, K: int):
    """Closed-form MAP error and its partial derivatives in (gamma0, gamma1).

    The minimum of each pair of terms takes the derivative of its active
    branch; exact ties resolve to the H0 branch.
    """
    pi0, pi1 = priors.pi0, priors.pi1
    p0, s0 = _pmf_and_slope(gammas[0], K)
    p1, s1 = _pmf_and_slope(gammas[1], K)
    a0, a1 = pi0 * p0, pi1 * p1
    pick0 = a0 <= a1
    loss = float(np.where(pick0, a0, a1).sum())
    d0 = float(pi0 * s0[pick0].sum())
    d1 = float(pi1 * s1[~pick0].sum())
    return loss, (d0, d1)


def loss_phi(net: Mlp, x0, x1, priors: BinaryHypothesis, K: int):
    """Batch MAP-error loss of a controller network.

    Returns ``(loss, grads, gammas)`` where ``gammas`` are the batch means of
    the controller output over the H0 and H1 columns.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    x1 = np.asarray(x1, dtype=float).ravel()
    if x0.size == 0 or x1.size == 0:
        raise ValueError("empty batch")
    out, trace = forward(net, np.concatenate([x0, x1])[:, None])
    n0 = x0.size
    raw = (float(out[:n0].mean()), float(out[n0:].mean()))
    g = tuple(min(PROB_CEIL, max(PROB_FLOOR, v)) for v in raw)
    loss, (d0, d1) = mapdep_with_grad(priors, g, K)
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite controller loss at gammas {raw}")
    d0 = d0 if g[0] == raw[0] else 0.0
    d1 = d1 if g[1] == raw[1] else 0.0
    up = np.empty_like(out)
    up[:n0] = d0 / n0
    up[n0:] = d1 / x1.size
    return loss, backward(net, trace, up), GammaPair(*raw)


def kl_table_loss(table, gammas, priors: BinaryHypothesis, K: int):
    """Expected KL from the exact posterior to ``table`` and its gradient.

    Detector probabilities are floored at 1e-9 before the log; floored
    entries get zero gradient. Only the lower end needs guarding since the
    loss takes ``log F`` and never ``log(1 - F)``.
    """
    F = np.asarray(table, dtype=float)
    g0, g1 = gammas
    with np.errstate(divide="ignore", invalid="ignore"):
        lj = np.stack(
            [np.log(priors.pi0) + log_binomial_pmf(g0, K), np.log(priors.pi1) + log_binomial_pmf(g1, K)],
            axis=1,
        )
        lmarg = np.logaddexp(lj[:, 0], lj[:, 1])[:, None]
        j = np.exp(lj)
        Fc = np.maximum(F, PROB_FLOOR)
        terms = np.where(j > 0, j * (lj - lmarg - np.log(Fc)), 0.0)
    loss = float(terms.sum())
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite detector loss at gammas {tuple(gammas)}")
    grad = np.where(F == Fc, -j / Fc, 0.0)
    return loss, grad


def loss_theta(net: Mlp, gamma_star, priors: BinaryHypothesis, K: int):
    """KL loss of a detector network queried at ``u_bar = k/K``; returns ``(loss, grads)``."""
    g = GammaPair(*gamma_star).clamped()
    out, trace = forward(net, (np.arange(K + 1, dtype=float) / K)[:, None])
    loss, dF = kl_table_loss(out, g, priors, K)
    return loss, backward(net, trace, dF)


# -- loops -------------------------------------------------------------------


def _epoch_order(cfg: TrainingConfig, stage: str, epoch: int) -> np.ndarray:
    if not cfg.shuffle:
        return np.arange(cfg.T)
    return stream(cfg.seed, "shuffle", stage, epoch).permutation(cfg.T)


def _batches(cfg: TrainingConfig, stage: str, epoch: int):
    order = _epoch_order(cfg, stage, epoch)
    for s in range(0, cfg.T, cfg.B):
        yield order[s : s + cfg.B]


@dataclass
class TrainState:
    """Everything needed to resume a stage exactly where it stopped."""

    stage: str
    net: Mlp
    adam: AdamState
    curve: LossCurve
    epoch: int = 0

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epoch": self.epoch,
            "net": net_to_dict(self.net),
            "adam": adam_to_dict(self.adam),
            "losses": self.curve.losses,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainState":
        net = net_from_dict(d["net"])
        return cls(d["stage"], net, adam_from_dict(d["adam"], net), LossCurve(d["stage"], list(d["losses"])), int(d["epoch"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TrainState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_dataset(cfg: TrainingConfig, dataset: Dataset) -> None:
    if dataset.T != cfg.T:
        raise ValueError(f"dataset has T={dataset.T} but config says T={cfg.T}")


def _run_stage(cfg, state, step, epochs, checkpoint_every, checkpoint_path, on_epoch):
    while state.epoch < epochs:
        epoch = state.epoch
        batch_losses = []
        for idx in _batches(cfg, state.stage, epoch):
            loss, grads = step(state.net, idx)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"{state.stage} loss became {loss} in epoch {epoch + 1}")
            batch_losses.append(loss)
            adam_step(state.net, state.adam, grads)
        state.curve.losses.append(float(np.mean(batch_losses)))
        state.epoch += 1
        if checkpoint_path and checkpoint_every and state.epoch % checkpoint_every == 0:
            state.save(checkpoint_path)
        if on_epoch is not None:
            on_epoch(state)
    if checkpoint_path:
        state.save(checkpoint_path)
    return state


def new_controller(cfg: TrainingConfig) -> Mlp:
    return init_params((1, *cfg.controller_widths, 1), SIGMOID, derive_seed(cfg.seed, CONTROLLER))


def new_detector(cfg: TrainingConfig) -> Mlp:
    return init_params((1, *cfg.detector_widths, 2), SOFTMAX, derive_seed(cfg.seed, DETECTOR, cfg.K))


def train_quantizer(
    cfg: TrainingConfig,
    dataset: Dataset,
    *,
    resume: TrainState | None = None,
    stop_after: int | None = None,
    checkpoint_every: int | None = None,
    checkpoint_path=None,
    on_epoch=None,
) -> tuple[Mlp, LossCurve]:
    """Mini-batch Adam on the controller for ``cfg.epochs`` epochs (no early stop).

    ``stop_after`` ends the run after that many epochs so it can be resumed
    later from ``checkpoint_path``.
    """
    _check_dataset(cfg, dataset)
    if resume is None:
        net = new_controller(cfg)
        net.train_seed = cfg.seed
        state = TrainState(CONTROLLER, net, AdamState.for_net(net, cfg.lr), LossCurve(CONTROLLER))
    else:
        state = resume
    priors = cfg.priors

    def step(net, idx):
        loss, grads, _ = loss_phi(net, dataset.x_h0[idx], dataset.x_h1[idx], priors, cfg.K)
        return loss, grads

    _run_stage(cfg, state, step, stop_after or cfg.epochs, checkpoint_every, checkpoint_path, on_epoch)
    return state.net, state.curve


def controller_outputs(phi: Mlp, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-controller probabilities over both dataset columns."""
    g0, _ = forward(phi, dataset.x_h0[:, None])
    g1, _ = forward(phi, dataset.x_h1[:, None])
    return g0.ravel(), g1.ravel()


def train_detector(
    cfg: TrainingConfig,
    phi_star: Mlp,
    dataset: Dataset,
    *,
    resume: TrainState | None = None,
    stop_after: int | None = None,
    checkpoint_every: int | None = None,
    checkpoint_path=None,
    on_epoch=None,
) -> tuple[Mlp, LossCurve]:
    """Train the detector against the KL loss with the controller frozen.

    Each batch re-estimates the gammas from the frozen controller's outputs on
    that batch before one Adam step on the detector.
    """
    _check_dataset(cfg, dataset)
    g0_all, g1_all = controller_outputs(phi_star, dataset)
    if resume is None:
        net = new_detector(cfg)
        net.train_seed = cfg.seed
        state = TrainState(DETECTOR, net, AdamState.for_net(net, cfg.lr), LossCurve(DETECTOR))
    else:
        state = resume
    priors = cfg.priors

    def step(net, idx):
        gammas = (float(g0_all[idx].mean()), float(g1_all[idx].mean()))
        return loss_theta(net, gammas, priors, cfg.K)

    _run_stage(cfg, state, step, stop_after or cfg.epochs, checkpoint_every, checkpoint_path, on_epoch)
    return state.net, state.curve


def config_to_dict(cfg: TrainingConfig) -> dict:
    d = asdict(cfg)
    d["controller_widths"] = list(cfg.controller_widths)
    d["detector_widths"] = list(cfg.detector_widths)
    return d
