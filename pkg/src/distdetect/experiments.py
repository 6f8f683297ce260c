"""Experiment pipeline behind the CLI: data, training, baseline, sweep, report.

Output layout under ``out_dir``::

    run.json                          resolved config of the last command
    data/snr_<s>/dataset.csv          + manifest.json
    train/snr_<s>/controller.json     final controller checkpoint
    train/snr_<s>/loss_controller.csv
    train/snr_<s>/detector_K<k>.json  one detector per K in k_list
    train/snr_<s>/loss_detector_K<k>.csv
    train/snr_<s>/*_state.json        resumable training state
    baseline/snr_<s>.json
    sweep.csv                         deterministic results
    sweep_timing.csv                  wall-clock per inference (not deterministic)
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .baseline import BaselineQuantizer, optimal_threshold
from .fusion import NeuralDetector, OracleDetector, monte_carlo_error
from .hypothesis_model import GaussianObservationModel, read_dataset, sample_dataset, write_dataset
from .neural import load_net, save_net
from .quantizer import NeuralController, gamma_pair, quantize
from .rng import derive_seed
from .training import (
    CONTROLLER,
    DETECTOR,
    LossCurve,
    TrainingConfig,
    TrainState,
    train_detector,
    train_quantizer,
)

log = logging.getLogger(__name__)

SWEEP_HEADER = ["K", "snr_db", "detector", "controller", "error_rate", "ci", "trials", "seed"]


@dataclass
class ExperimentConfig:
    K: int = 20
    T: int = 50_000
    B: int = 500
    epochs: int = 500
    lr: float = 1e-4
    seed: int = 0
    controller_widths: list[int] = field(default_factory=lambda: [20, 20, 20])
    detector_widths: list[int] = field(default_factory=lambda: [30, 30, 30])
    pi0: float = 0.5
    shuffle: bool = True
    snr_list: list[float] = field(default_factory=lambda: [0.0])
    k_list: list[int] = field(default_factory=lambda: [20])
    trials: int = 10_000
    out_dir: str = "runs/default"
    baseline: bool = True
    checkpoint_every: int = 50
    workers: int = 1

    def __post_init__(self):
        if not self.snr_list or not self.k_list:
            raise ValueError("snr_list and k_list must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.training(self.K)  # validates the shared fields

    def training(self, K: int | None = None) -> TrainingConfig:
        return TrainingConfig(
            K=self.K if K is None else K,
            T=self.T,
            B=self.B,
            epochs=self.epochs,
            lr=self.lr,
            seed=self.seed,
            controller_widths=tuple(self.controller_widths),
            detector_widths=tuple(self.detector_widths),
            pi0=self.pi0,
            shuffle=self.shuffle,
        )

    def model(self, snr_db: float) -> GaussianObservationModel:
        return GaussianObservationModel.from_snr_db(snr_db)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Config file values, then non-None ``overrides`` on top."""
    d = {}
    if path is not None:
        d.update(json.loads(Path(path).read_text()))
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    return ExperimentConfig.from_dict(d)


def snr_tag(snr_db: float) -> str:
    return f"snr_{snr_db:g}"


def data_dir(cfg: ExperimentConfig, snr_db: float) -> Path:
    return cfg.out / "data" / snr_tag(snr_db)


def train_dir(cfg: ExperimentConfig, snr_db: float) -> Path:
    return cfg.out / "train" / snr_tag(snr_db)


def write_snapshot(cfg: ExperimentConfig, command: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "run.json"
    path.write_text(json.dumps({"command": command, "config": cfg.to_dict()}, indent=2, sort_keys=True) + "\n")
    return path


# -- gen-data ----------------------------------------------------------------


def dataset_seed(cfg: ExperimentConfig, snr_db: float) -> int:
    return derive_seed(cfg.seed, "data", float(snr_db))


def gen_data(cfg: ExperimentConfig) -> list[Path]:
    paths = []
    for snr in cfg.snr_list:
        ds = sample_dataset(cfg.model(snr), cfg.T, dataset_seed(cfg, snr))
        paths.append(write_dataset(ds, data_dir(cfg, snr)))
        log.info("wrote %s (T=%d)", paths[-1], cfg.T)
    return paths


# -- train -------------------------------------------------------------------


def _load_state(path: Path, resume: bool) -> TrainState | None:
    return TrainState.load(path) if resume and path.exists() else None


def _finish_stage(net_path: Path, loss_path: Path, net, curve, epochs: int) -> bool:
    """Write final checkpoint and loss CSV once a stage has run all epochs."""
    if len(curve.losses) < epochs:
        return False
    save_net(net, net_path)
    curve.write_csv(loss_path)
    return True


def train(cfg: ExperimentConfig, resume: bool = False, stop_after: int | None = None) -> dict:
    """Controller per SNR (at ``cfg.K``), then one detector per K in ``k_list``.

    ``stop_after`` interrupts every stage after that many epochs, leaving
    resumable ``*_state.json`` files; a later ``resume=True`` run finishes
    with results identical to an uninterrupted run.
    """
    status = {}
    for snr in cfg.snr_list:
        ddir = data_dir(cfg, snr)
        if not (ddir / "dataset.csv").exists():
            raise FileNotFoundError(f"no dataset at {ddir}; run gen-data first")
        ds = read_dataset(ddir)
        tdir = train_dir(cfg, snr)
        tdir.mkdir(parents=True, exist_ok=True)
        tc = cfg.training()

        spath = tdir / f"{CONTROLLER}_state.json"
        state = _load_state(spath, resume)
        if state is not None and state.epoch >= tc.epochs:
            phi, curve = state.net, state.curve
        else:
            log.info("controller @ %g dB: epochs %d..%d", snr, state.epoch if state else 0, tc.epochs)
            phi, curve = train_quantizer(
                tc, ds, resume=state, stop_after=stop_after, checkpoint_every=cfg.checkpoint_every, checkpoint_path=spath
            )
        if not _finish_stage(tdir / "controller.json", tdir / "loss_controller.csv", phi, curve, tc.epochs):
            status[snr] = "interrupted"
            continue

        status[snr] = "complete"
        for K in cfg.k_list:
            dc = cfg.training(K)
            dpath = tdir / f"{DETECTOR}_K{K}_state.json"
            dstate = _load_state(dpath, resume)
            if dstate is not None and dstate.epoch >= dc.epochs:
                theta, dcurve = dstate.net, dstate.curve
            else:
                log.info("detector K=%d @ %g dB: epochs %d..%d", K, snr, dstate.epoch if dstate else 0, dc.epochs)
                theta, dcurve = train_detector(
                    dc, phi, ds, resume=dstate, stop_after=stop_after, checkpoint_every=cfg.checkpoint_every, checkpoint_path=dpath
                )
            if not _finish_stage(tdir / f"detector_K{K}.json", tdir / f"loss_detector_K{K}.csv", theta, dcurve, dc.epochs):
                status[snr] = "interrupted"
    return status


# -- baseline ----------------------------------------------------------------


def baseline(cfg: ExperimentConfig) -> dict[float, BaselineQuantizer]:
    out = {}
    bdir = cfg.out / "baseline"
    bdir.mkdir(parents=True, exist_ok=True)
    for snr in cfg.snr_list:
        b = optimal_threshold(cfg.model(snr), snr)
        (bdir / f"{snr_tag(snr)}.json").write_text(json.dumps(b.to_dict(), indent=2, sort_keys=True) + "\n")
        out[snr] = b
    return out


def _load_baseline(cfg: ExperimentConfig, snr: float) -> BaselineQuantizer:
    path = cfg.out / "baseline" / f"{snr_tag(snr)}.json"
    if path.exists():
        return BaselineQuantizer(**json.loads(path.read_text()))
    return optimal_threshold(cfg.model(snr), snr)


# -- sweep -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sweep_point(cfg: ExperimentConfig, snr: float, K: int):
    """All rows for one (K, SNR) point plus its inference timing."""
    tdir = train_dir(cfg, snr)
    cpath, dpath = tdir / "controller.json", tdir / f"detector_K{K}.json"
    for p in (cpath, dpath):
        if not p.exists():
            raise FileNotFoundError(f"missing checkpoint {p}; run train first")
    model = cfg.model(snr)
    priors = cfg.training().priors
    ctrl = NeuralController(load_net(cpath))
    det = NeuralDetector(load_net(dpath))
    base = _load_baseline(cfg, snr)
    rows = []

    seed = derive_seed(cfg.seed, "sweep", K, float(snr), "trained")
    rep = monte_carlo_error(model, priors, ctrl, det, K, cfg.trials, seed)
    rows.append([K, snr, "neural", "neural", rep.error_rate, rep.ci_halfwidth, cfg.trials, seed])
    if cfg.baseline:
        seed = derive_seed(cfg.seed, "sweep", K, float(snr), "baseline")
        rep = monte_carlo_error(model, priors, base.controller, OracleDetector(priors, base.gammas, K), K, cfg.trials, seed)
        rows.append([K, snr, "oracle", "threshold", rep.error_rate, rep.ci_halfwidth, cfg.trials, seed])
        rows.append([K, snr, "closed-form", "threshold", metrics.mapdep_binary(priors, base.gammas, K), 0.0, 0, cfg.seed])
    g = gamma_pair(ctrl, model)
    rows.append([K, snr, "closed-form", "neural", metrics.mapdep_binary(priors, g, K), 0.0, 0, cfg.seed])

    rng = np.random.default_rng(0)
    x = model.mean1 + model.sigma * rng.standard_normal((2000, K))
    z = rng.random(x.shape)
    t0 = time.perf_counter()
    k = quantize(ctrl.prob(x), z).sum(axis=1)
    post = det.table(K)[k]
    np.where(post[:, 0] > post[:, 1], 0, 1)
    per_inference = (time.perf_counter() - t0) / x.shape[0]
    return rows, [K, snr, per_inference]


def _sweep_point_star(args):
    return _sweep_point(*args)


def sweep(cfg: ExperimentConfig) -> Path:
    points = [(cfg, snr, K) for snr in cfg.snr_list for K in cfg.k_list]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_sweep_point_star, points))
    else:
        results = [_sweep_point(*p) for p in points]
    rows = sorted((r for rs, _ in results for r in rs), key=lambda r: (r[1], r[0], r[2], r[3]))
    path = cfg.out / "sweep.csv"
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for K, snr, d, c, e, ci, n, s in rows:
            w.writerow([K, f"{snr:g}", d, c, _fmt(e), _fmt(ci), n, s])
    with open(cfg.out / "sweep_timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "snr_db", "seconds_per_inference"])
        for _, (K, snr, sec) in sorted(results, key=lambda r: (r[1][1], r[1][0])):
            w.writerow([K, f"{snr:g}", f"{sec:.3e}"])
    return path


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["K"] = int(r["K"])
        r["snr_db"] = float(r["snr_db"])
        r["error_rate"] = float(r["error_rate"])
        r["ci"] = float(r["ci"])
        r["trials"] = int(r["trials"])
        r["seed"] = int(r["seed"])
    return rows


# -- report ------------------------------------------------------------------


def report(cfg: ExperimentConfig) -> str:
    """Plain-text summary of whatever outputs exist under ``out_dir``."""
    lines = []
    for snr in cfg.snr_list:
        tdir = train_dir(cfg, snr)
        lc = tdir / "loss_controller.csv"
        if lc.exists():
            c = LossCurve.read_csv(lc)
            lines.append(f"{snr:g} dB controller loss: first {c.losses[0]:.4e} last {c.losses[-1]:.4e} ({len(c.losses)} epochs)")
            for K in cfg.k_list:
                ld = tdir / f"loss_detector_K{K}.csv"
                if ld.exists():
                    d = LossCurve.read_csv(ld)
                    lines.append(f"{snr:g} dB detector K={K} loss: first {d.losses[0]:.4e} last {d.losses[-1]:.4e}")
    sp = cfg.out / "sweep.csv"
    if sp.exists():
        lines.append("")
        lines.append(f"{'snr':>6} {'K':>4} {'detector':>12} {'controller':>10} {'error':>12} {'ci':>10}")
        for r in read_sweep(sp):
            lines.append(
                f"{r['snr_db']:>6g} {r['K']:>4d} {r['detector']:>12} {r['controller']:>10} {r['error_rate']:>12.4e} {r['ci']:>10.2e}"
            )
    if not lines:
        lines.append(f"no outputs under {cfg.out}")
    return "\n".join(lines)
