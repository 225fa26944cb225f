"""Independent reference computations for the update matrices.

Neither routine shares code with the layer-wise contraction in
:mod:`reshqcnn.training`:

* :func:`k_matrix_fd_oracle` differentiates the network output numerically
  along every Pauli direction of one perceptron (via branch-by-branch
  :func:`~reshqcnn.network.feedforward`) and solves the penalised
  maximisation in closed form.
* :func:`k_matrix_unrolled_oracle` builds the explicit commutator terms of
  the hand-derived shapes in the full unrolled register of each branch (every
  layer keeps its own qubits, nothing is traced until the end).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .network import NetworkSpec, Path, Perceptrons, copy_perceptrons, enumerate_paths, feedforward
from .qmath import embed, expm_i_herm, fidelity_pure, partial_trace, pauli_products
from .training import _check_index


def _mean_fidelity_branchwise(spec, perceptrons, pairs) -> float:
    vals = [fidelity_pure(p.target, feedforward(p.input, spec, perceptrons)[0]) for p in pairs]
    return float(np.mean(vals))


def k_matrix_fd_oracle(spec, perceptrons, pairs, l: int, j: int, delta: float = 1e-4, eta: float = 1.0):
    """Central-difference estimate of ``K_j^l``.

    For each Pauli product ``G`` on the perceptron's qubits, ``g_G`` is the
    derivative of the mean fidelity (not divided by the path count) under
    ``U_j^l -> exp(i theta G) U_j^l``. Maximising ``sum_G g_G k_G - sum_G k_G**2 / eta``
    gives ``k_G = eta * g_G / 2``.
    """
    _check_index(spec, l, j)
    if not 0 < delta <= 1e-2:
        raise ValueError("delta must lie in (0, 1e-2]")
    u0 = perceptrons[l - 1][j - 1]
    n = spec.widths[l - 1] + 1
    work = copy_perceptrons(perceptrons)
    k_fd = np.zeros((2**n, 2**n), dtype=complex)
    for g in pauli_products(n):
        vals = []
        for theta in (delta, -delta):
            work[l - 1][j - 1] = expm_i_herm(g, theta) @ u0
            vals.append(_mean_fidelity_branchwise(spec, work, pairs))
        k_fd += (vals[0] - vals[1]) / (2 * delta) * g
    return eta / 2 * k_fd


# ---------------------------------------------------------------------------
# Unrolled branch terms


def _unroll(spec: NetworkSpec, path: Path):
    """Qubit bookkeeping for one branch in its own register.

    Returns ``(n_qubits, ops, final_register)`` where ``ops`` lists
    ``(layer, j, targets)`` in application order.
    """
    nq = spec.widths[0]
    cur = list(range(nq))
    ops = []
    for hop in path.hops:
        if hop.kind == "apply":
            k = hop.source
            out = list(range(nq, nq + spec.widths[k]))
            nq += spec.widths[k]
            ops.extend((k, jj, cur + [out[jj - 1]]) for jj in range(1, spec.widths[k] + 1))
            cur = out
        elif hop.delta >= 0:
            cur = cur + list(range(nq, nq + hop.delta))
            nq += hop.delta
        else:
            cur = cur[: len(cur) + hop.delta]
    return nq, ops, cur


def unrolled_branch_term(spec, perceptrons, pairs, path: Path, l: int, j: int) -> np.ndarray:
    """``(1/N) sum_x tr_rest(i [A, B])`` for one branch, built in full.

    ``A = W_<= |in,0..0><in,0..0| W_<=^dagger`` with ``W_<=`` the branch's
    perceptrons up to and including ``U_j^l``, ``B = W_>^dagger (Id ⊗
    |out><out|) W_>`` with the remaining ones. Inputs are pure, so ``A`` is
    rank one and ``[A, B] = |a><b| - |b><a|`` with ``b = B a``.
    """
    if l not in path.layers:
        raise ValueError(f"branch {path.layers} does not pass through layer {l}")
    nq, ops, final = _unroll(spec, path)
    mats = [embed(perceptrons[k - 1][jj - 1], nq, tg) for k, jj, tg in ops]
    split = next(i for i, (k, jj, _) in enumerate(ops) if (k, jj) == (l, j)) + 1
    keep = ops[split - 1][2]
    pad = np.zeros(2 ** (nq - spec.widths[0]), dtype=complex)
    pad[0] = 1.0
    acc = np.zeros((2 ** len(keep),) * 2, dtype=complex)
    for pair in pairs:
        a = np.kron(pair.input, pad)
        for m in mats[:split]:
            a = m @ a
        w = a
        for m in mats[split:]:
            w = m @ w
        proj = embed(np.outer(pair.target, pair.target.conj()), nq, final)
        b = proj @ w
        for m in reversed(mats[split:]):
            b = m.conj().T @ b
        comm = np.outer(a, b.conj()) - np.outer(b, a.conj())
        acc += partial_trace(1j * comm, keep)
    return acc / len(pairs)


# Branch (applied-layer list) behind each named term of the hand-derived
# update matrices, keyed by (shape, layer).
_LISTED_TERMS = {
    ("plain", None): {"M": "full"},
    ("one-hidden", 1): {"M": "full"},
    ("one-hidden", 2): {"M": "full", "N": (2,)},
    ("two-hidden", 1): {"M": "full", "P": (1, 3)},
    ("two-hidden", 2): {"M": "full", "Q": (2, 3)},
    ("two-hidden", 3): {"M": "full", "S": (3,), "T": (1, 3)},
}


def oracle_shape(spec: NetworkSpec) -> str:
    if not spec.residual_edges:
        return "plain"
    if spec.L == 1 and spec.residual_edges == ((2, 1),):
        return "one-hidden"
    if spec.L == 2 and spec.residual_edges == ((2, 1), (3, 2)) and spec.p is None:
        return "two-hidden"
    raise ValueError(f"no hand-derived update formula for {spec}")


def listed_terms(spec: NetworkSpec, l: int) -> dict:
    """Named terms of ``K_j^l`` mapped to their branch layer lists."""
    shape = oracle_shape(spec)
    terms = _LISTED_TERMS[(shape, None if shape == "plain" else l)]
    full = tuple(range(1, spec.n_layers + 1))
    return {name: full if br == "full" else br for name, br in terms.items()}


def missing_branches(spec: NetworkSpec, l: int) -> list:
    """Branches through layer ``l`` that no named term covers."""
    listed = set(listed_terms(spec, l).values())
    return [p.layers for p in enumerate_paths(spec).containing(l) if p.layers not in listed]


def unrolled_terms(spec, perceptrons, pairs, l: int, j: int, eta: float = 1.0) -> dict:
    """Each named term's contribution to ``K_j^l`` (prefactor and mixing weight included)."""
    _check_index(spec, l, j)
    by_layers = {p.layers: p for p in enumerate_paths(spec).paths}
    pref = eta * 2 ** spec.widths[l - 1]
    out = {}
    for name, layers in listed_terms(spec, l).items():
        path = by_layers[layers]
        w = path.weight(spec) if spec.p is not None else 1.0
        out[name] = pref * w * unrolled_branch_term(spec, perceptrons, pairs, path, l, j)
    return out


def k_matrix_unrolled_oracle(spec, perceptrons, pairs, l: int, j: int, eta: float = 1.0) -> np.ndarray:
    """Sum of the named terms for the supported hand-derived shapes."""
    return sum(unrolled_terms(spec, perceptrons, pairs, l, j, eta).values())


def unrolled_path_sum(spec, perceptrons, pairs, l: int, j: int, eta: float = 1.0) -> np.ndarray:
    """Unrolled construction summed over every branch through layer ``l`` (any shape)."""
    _check_index(spec, l, j)
    pref = eta * 2 ** spec.widths[l - 1]
    total = 0
    for path in enumerate_paths(spec).containing(l):
        w = path.weight(spec) if spec.p is not None else 1.0
        total = total + pref * w * unrolled_branch_term(spec, perceptrons, pairs, path, l, j)
    return total
