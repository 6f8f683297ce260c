"""Distributed binary detection with learned probabilistic quantizers."""
from .hypothesis_model import BinaryHypothesis, GaussianObservationModel, Hypothesis, sample_dataset
from .metrics import chernoff_information, kl_binary, mapdep_average, mapdep_binary, mapdep_enumerate
from .quantizer import GammaPair, NeuralController, ThresholdController

__version__ = "0.1.0"

__all__ = [
    "BinaryHypothesis",
    "GammaPair",
    "GaussianObservationModel",
    "Hypothesis",
    "NeuralController",
    "ThresholdController",
    "chernoff_information",
    "kl_binary",
    "mapdep_average",
    "mapdep_binary",
    "mapdep_enumerate",
    "sample_dataset",
]
