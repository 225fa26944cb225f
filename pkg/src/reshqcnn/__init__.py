"""Residual quantum neural networks: density-matrix simulation and training."""

from .network import NetworkSpec, SpecError, enumerate_paths, feedforward, parse_spec
from .qmath import InvariantError
from .training import HyperParams, TrainingPair, cost, k_matrices, train

__all__ = [
    "HyperParams",
    "InvariantError",
    "NetworkSpec",
    "SpecError",
    "TrainingPair",
    "cost",
    "enumerate_paths",
    "feedforward",
    "k_matrices",
    "parse_spec",
    "train",
]
