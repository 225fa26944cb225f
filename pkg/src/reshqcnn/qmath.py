"""Dense complex linear algebra on qubit registers.

Conventions
-----------
Qubit 0 is the leftmost Kronecker factor, i.e. the most significant bit of a
row/column index. Every routine here accepts plain ``numpy`` arrays; operators
are ``(2**n, 2**n)`` complex matrices, pure states are length ``2**n``
vectors. Functions that say so also accept leading batch axes.
"""

from __future__ import annotations

import itertools
from functools import reduce
from typing import Sequence

import numpy as np

RNG_ALGORITHM = "numpy.PCG64+SeedSequence/v1"

HERM_TOL = 1e-10
IMAG_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SIGMA_X, SIGMA_Y, SIGMA_Z)


class InvariantError(ValueError):
    """A numerical invariant (Hermiticity, unitarity, trace, ...) was violated."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator for ``(seed, stream)``.

    Distinct streams of one seed are statistically independent, so data
    generation and perceptron initialisation can share a user-facing seed.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; ``result[i*p + r, j*q + c] = a[i, j] * b[r, c]``."""
    return np.kron(a, b)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


def ket(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("01")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2) if bits else 0] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    """``|v><v|``; batched over leading axes."""
    return v[..., :, None] * v[..., None, :].conj()


def zero_projector(n: int) -> np.ndarray:
    p = np.zeros((2**n, 2**n), dtype=complex)
    p[0, 0] = 1.0
    return p


def partial_trace(m: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced operator on the qubits in ``keep``.

    The result's qubit order follows ``keep`` as given. Leading batch axes
    are allowed.
    """
    dim = m.shape[-1]
    n = num_qubits(dim)
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate qubit in keep={keep}")
    for q in keep:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    rest = [q for q in range(n) if q not in keep]
    batch = m.shape[:-2]
    nb = len(batch)
    t = m.reshape(batch + (2,) * (2 * n))
    rows = [nb + q for q in keep + rest]
    cols = [nb + n + q for q in keep + rest]
    t = t.transpose(list(range(nb)) + rows + cols)
    dk, dr = 2 ** len(keep), 2 ** len(rest)
    t = t.reshape(batch + (dk, dr, dk, dr))
    return np.einsum("...irjr->...ij", t)


def embed(u: np.ndarray, total: int, targets: Sequence[int]) -> np.ndarray:
    """Extend ``u`` to ``total`` qubits, acting on ``targets`` (in order)."""
    targets = list(targets)
    k = num_qubits(u.shape[0])
    if len(targets) != k:
        raise ValueError(f"operator acts on {k} qubits but {len(targets)} targets given")
    if len(set(targets)) != k:
        raise ValueError(f"duplicate target in {targets}")
    for q in targets:
        if not 0 <= q < total:
            raise IndexError(f"target {q} out of range for {total} qubits")
    rest = [q for q in range(total) if q not in targets]
    full = np.kron(u, np.eye(2 ** len(rest), dtype=complex))
    # axis a of `full` carries qubit order[a]; move it to position order[a]
    order = targets + rest
    inv = np.argsort(order)
    t = full.reshape((2,) * (2 * total))
    t = t.transpose(list(inv) + [total + i for i in inv])
    return t.reshape(2**total, 2**total)


def is_hermitian(k: np.ndarray, tol: float = HERM_TOL) -> bool:
    return bool(np.max(np.abs(k - k.conj().swapaxes(-1, -2)), initial=0.0) <= tol)


def unitarity_error(u: np.ndarray) -> float:
    eye = np.eye(u.shape[-1])
    return float(np.max(np.abs(u.conj().swapaxes(-1, -2) @ u - eye)))


def expm_i_herm(k: np.ndarray, eps: float) -> np.ndarray:
    """``exp(i * eps * k)`` for Hermitian ``k`` via eigendecomposition."""
    if not is_hermitian(k):
        raise InvariantError("expm_i_herm: input is not Hermitian within 1e-10")
    w, v = np.linalg.eigh(k)
    return (v * np.exp(1j * eps * w)) @ v.conj().T


def random_pure_state(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian amplitudes, normalised."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    d = 2**n_qubits
    while True:
        v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm >= 1e-8:
            return v / norm


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian matrix with R-phase fix."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    num_qubits(dim)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def fidelity_pure(phi: np.ndarray, rho: np.ndarray) -> float | np.ndarray:
    """``<phi|rho|phi>``; batched over leading axes of both arguments."""
    if phi.shape[-1] != rho.shape[-1] or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"dimension mismatch: state {phi.shape}, operator {rho.shape}")
    val = np.einsum("...i,...ij,...j->...", phi.conj(), rho, phi)
    if np.max(np.abs(val.imag), initial=0.0) > IMAG_TOL:
        raise InvariantError(f"fidelity has imaginary part {np.max(np.abs(val.imag)):.3e}")
    return val.real if np.ndim(val) else float(val.real)


def pauli_products(k: int) -> list[np.ndarray]:
    """All ``4**k`` products of {I, X, Y, Z}.

    Ordered lexicographically with qubit 0 as the most significant digit:
    ``k=2`` gives II, IX, IY, IZ, XI, ..., ZZ.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return [kron_all(ps) for ps in itertools.product(PAULIS, repeat=k)]
