"""Training data: clean pairs from a hidden unitary, random noisy pairs, corruption."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmath import make_rng, random_pure_state, random_unitary
from .training import TrainingPair

DATA_STREAM = 0
CORRUPT_STREAM = 2  # offset by n_noisy
HELDOUT_STREAM = 1 << 20  # clear of every corruption stream


def make_target_unitary(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(2**n_qubits, rng)


def make_clean_pairs(v: np.ndarray, n_pairs: int, rng: np.random.Generator) -> list:
    n = v.shape[0].bit_length() - 1
    pairs = []
    for _ in range(n_pairs):
        phi = random_pure_state(n, rng)
        pairs.append(TrainingPair(phi, v @ phi))
    return pairs


def make_noisy_pairs(n_in: int, n_out: int, n_pairs: int, rng: np.random.Generator) -> list:
    """Input and target drawn independently."""
    return [
        TrainingPair(random_pure_state(n_in, rng), random_pure_state(n_out, rng))
        for _ in range(n_pairs)
    ]


def corrupt(pairs: list, n: int, rng: np.random.Generator) -> list:
    """Replace a uniformly random size-``n`` subset by fresh noisy pairs, keeping order."""
    if not 0 <= n <= len(pairs):
        raise ValueError(f"cannot replace {n} of {len(pairs)} pairs")
    if n == 0:
        return list(pairs)
    idx = np.sort(rng.choice(len(pairs), size=n, replace=False))
    n_in = pairs[0].input.shape[0].bit_length() - 1
    n_out = pairs[0].target.shape[0].bit_length() - 1
    noisy = make_noisy_pairs(n_in, n_out, n, rng)
    out = list(pairs)
    for i, p in zip(idx, noisy):
        out[i] = p
    return out


@dataclass(frozen=True)
class DataSetDescriptor:
    n_in: int
    n_out: int
    n_pairs: int
    n_noisy: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_noisy <= self.n_pairs:
            raise ValueError("need 0 <= n_noisy <= n_pairs")
        if self.n_in != self.n_out:
            raise ValueError("clean pairs need equal input and output widths")

    def build(self) -> tuple:
        """Returns ``(good, train, v)``: clean pairs, the training set after corruption, and V.

        The clean pairs depend only on ``(seed, n_in, n_pairs)``; corruption
        draws from a separate stream keyed by ``n_noisy``.
        """
        rng = make_rng(self.seed, DATA_STREAM)
        v = make_target_unitary(self.n_in, rng)
        good = make_clean_pairs(v, self.n_pairs, rng)
        train = corrupt(good, self.n_noisy, make_rng(self.seed, CORRUPT_STREAM + self.n_noisy))
        return good, train, v

    def heldout(self, v: np.ndarray, n_pairs: int | None = None) -> list:
        """Fresh clean pairs from the same ``V``, disjoint in draw from the training data."""
        rng = make_rng(self.seed, HELDOUT_STREAM)
        return make_clean_pairs(v, self.n_pairs if n_pairs is None else n_pairs, rng)
