"""Binary hypothesis, Gaussian observation model and training datasets."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .rng import stream

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Hypothesis(IntEnum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class BinaryHypothesis:
    """Prior probabilities of the two hypotheses."""

    pi0: float = 0.5
    pi1: float = 0.5

    def __post_init__(self):
        for p in (self.pi0, self.pi1):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"prior {p!r} outside [0, 1]")
        if abs(self.pi0 + self.pi1 - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1, got {self.pi0} + {self.pi1}")

    @classmethod
    def from_pi0(cls, pi0: float) -> "BinaryHypothesis":
        return cls(pi0, 1.0 - pi0)

    def __getitem__(self, h: int) -> float:
        return self.pi0 if int(h) == 0 else self.pi1

    def as_tuple(self) -> tuple[float, float]:
        return (self.pi0, self.pi1)


@dataclass(frozen=True)
class GaussianObservationModel:
    """Conditionally i.i.d. sensor observations ``X | H_n ~ N(mean_n, sigma^2)``."""

    sigma: float = 1.0
    mean0: float = -1.0
    mean1: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")

    @classmethod
    def from_snr_db(cls, snr_db: float, mean0: float = -1.0, mean1: float = 1.0):
        return cls(snr_to_sigma(snr_db), mean0, mean1)

    def mean(self, h: int) -> float:
        return self.mean0 if int(h) == 0 else self.mean1


def snr_to_sigma(snr_db: float) -> float:
    """Noise std for ``SNR = 1 / sigma^2`` given in dB."""
    if not math.isfinite(snr_db):
        raise ValueError(f"SNR must be finite, got {snr_db!r}")
    return 10.0 ** (-snr_db / 20.0)


def pdf(model: GaussianObservationModel, x, h):
    z = (np.asarray(x, dtype=float) - model.mean(h)) / model.sigma
    out = np.exp(-0.5 * z * z) / (_SQRT_2PI * model.sigma)
    return float(out) if out.ndim == 0 else out


def logpdf(model: GaussianObservationModel, x, h):
    z = (np.asarray(x, dtype=float) - model.mean(h)) / model.sigma
    out = -0.5 * z * z - math.log(_SQRT_2PI * model.sigma)
    return float(out) if out.ndim == 0 else out


def sample_observation(model: GaussianObservationModel, h, rng: np.random.Generator, size=None):
    """Draw observation(s) under hypothesis ``h``; advances ``rng``."""
    return model.mean(h) + model.sigma * rng.standard_normal(size)


@dataclass(frozen=True)
class Dataset:
    """Paired training observations: row t holds one H0 draw and one H1 draw."""

    x_h0: np.ndarray
    x_h1: np.ndarray
    seed: int
    sigma: float
    mean0: float = -1.0
    mean1: float = 1.0

    def __post_init__(self):
        if self.x_h0.shape != self.x_h1.shape or self.x_h0.ndim != 1:
            raise ValueError("dataset columns must be 1-D and equally long")

    @property
    def T(self) -> int:
        return int(self.x_h0.shape[0])

    def __len__(self) -> int:
        return self.T

    def manifest(self) -> dict:
        return {"seed": self.seed, "sigma": self.sigma, "T": self.T, "mean0": self.mean0, "mean1": self.mean1}


def sample_dataset(model: GaussianObservationModel, T: int, seed: int) -> Dataset:
    if int(T) != T or T < 1:
        raise ValueError(f"dataset size T must be a positive integer, got {T!r}")
    T = int(T)
    x0 = sample_observation(model, Hypothesis.H0, stream(seed, "dataset", 0), T)
    x1 = sample_observation(model, Hypothesis.H1, stream(seed, "dataset", 1), T)
    return Dataset(x0, x1, int(seed), model.sigma, model.mean0, model.mean1)


DATASET_CSV = "dataset.csv"
MANIFEST_JSON = "manifest.json"


def write_dataset(ds: Dataset, directory) -> Path:
    """Write ``dataset.csv`` (17 significant digits) and ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / DATASET_CSV
    with open(path, "w", newline="") as fh:
        fh.write("t,x_h0,x_h1\n")
        for t, (a, b) in enumerate(zip(ds.x_h0.tolist(), ds.x_h1.tolist())):
            fh.write(f"{t},{a:.17g},{b:.17g}\n")
    with open(directory / MANIFEST_JSON, "w") as fh:
        json.dump(ds.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    with open(directory / MANIFEST_JSON) as fh:
        meta = json.load(fh)
    with open(directory / DATASET_CSV, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "x_h0", "x_h1"]:
            raise ValueError(f"{directory / DATASET_CSV}: unexpected header {header}")
        rows = [(float(r[1]), float(r[2])) for r in reader]
    if len(rows) != meta["T"]:
        raise ValueError(f"{directory}: manifest says T={meta['T']} but CSV has {len(rows)} rows")
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return Dataset(
        np.ascontiguousarray(arr[:, 0]),
        np.ascontiguousarray(arr[:, 1]),
        int(meta["seed"]),
        float(meta["sigma"]),
        float(meta["mean0"]),
        float(meta["mean1"]),
    )
