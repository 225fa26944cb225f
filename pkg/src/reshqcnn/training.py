"""Cost, update matrices and the training loop.

Each perceptron is updated as ``U <- exp(i*eps*K) U`` with

    K_j^l = eta * 2**m_{l-1} / N * sum_x sum_{paths through l} tr_rest(i [A, B])

where ``A`` is the path's input pushed forward through ``U_1^l..U_j^l`` and
``B`` the target projector pulled back through everything after ``U_j^l``.
Summing over paths is done implicitly: the combined stage states are pushed
forward and the combined effects pulled back layer by layer, which by
linearity equals the explicit sum over branches.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .network import (
    NetworkSpec,
    Perceptrons,
    SpecError,
    _to_front,
    apply_left,
    check_perceptrons,
    conjugate,
    enumerate_paths,
    forward_stages,
    random_perceptrons,
)
from .qmath import InvariantError, expm_i_herm, fidelity_pure, make_rng, projector

log = logging.getLogger(__name__)

INIT_STREAM = 1
COST_TOL = 1e-10

# learning rates used for the published curves
ETA_PRESETS = {
    "1/1.8": 1 / 1.8,
    "1/2": 1 / 2,
    "1/3": 1 / 3,
    "1/5": 1 / 5,
    "1/9": 1 / 9,
    "1/15": 1 / 15,
    "1/35": 1 / 35,
}


@dataclass(frozen=True)
class TrainingPair:
    input: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        for name in ("input", "target"):
            v = getattr(self, name)
            if abs(np.linalg.norm(v) - 1.0) > 1e-10:
                raise ValueError(f"{name} state is not normalised")


@dataclass(frozen=True)
class HyperParams:
    eta: float = 1.0
    eps: float = 0.1
    rounds: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0 or self.eps <= 0 or self.rounds < 0:
            raise ValueError(f"invalid hyper-parameters {self}")


@dataclass
class CostTrace:
    rounds: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def append(self, r: int, c: float, ms: float):
        self.rounds.append(r)
        self.costs.append(c)
        self.wall_ms.append(ms)

    def __len__(self):
        return len(self.rounds)

    @property
    def final(self) -> float:
        return self.costs[-1]

    def rounds_to(self, threshold: float) -> Optional[int]:
        """First round whose cost reaches ``threshold``, or None."""
        for r, c in zip(self.rounds, self.costs):
            if c >= threshold:
                return r
        return None


def _stack(pairs: Sequence[TrainingPair], spec: NetworkSpec) -> tuple:
    if not pairs:
        raise ValueError("training set is empty")
    phi_in = np.stack([p.input for p in pairs])
    phi_out = np.stack([p.target for p in pairs])
    if phi_in.shape[1] != 2 ** spec.widths[0]:
        raise SpecError(f"inputs have dim {phi_in.shape[1]}, network expects {2 ** spec.widths[0]}")
    if phi_out.shape[1] != 2 ** spec.widths[-1]:
        raise SpecError(f"targets have dim {phi_out.shape[1]}, network expects {2 ** spec.widths[-1]}")
    return phi_in, phi_out


def normalization(spec: NetworkSpec) -> int:
    """Trace of the network output: the path count, or 1 for p-mix."""
    return 1 if spec.p is not None else len(enumerate_paths(spec))


def output_states(pairs, spec, perceptrons) -> np.ndarray:
    phi_in, _ = _stack(pairs, spec)
    stages, _ = forward_stages(projector(phi_in), spec, perceptrons)
    return stages[spec.terminal]


def mean_fidelity(pairs, spec, perceptrons) -> float:
    """``(1/N) sum_x <phi_x^out| rho_x^out |phi_x^out>`` without trace normalisation."""
    _, phi_out = _stack(pairs, spec)
    return float(np.mean(fidelity_pure(phi_out, output_states(pairs, spec, perceptrons))))


def cost(pairs, spec: NetworkSpec, perceptrons: Perceptrons) -> float:
    c = mean_fidelity(pairs, spec, perceptrons) / normalization(spec)
    if not -COST_TOL <= c <= 1 + COST_TOL:
        raise InvariantError(f"cost {c} outside [0, 1]")
    return c


def evaluate(pairs, spec: NetworkSpec, perceptrons: Perceptrons) -> float:
    """Cost of a trained network on an evaluation set (e.g. the uncorrupted pairs)."""
    return cost(pairs, spec, perceptrons)


def _adapt_adjoint(e: np.ndarray, delta: int) -> np.ndarray:
    if delta >= 0:
        s = 2**delta
        return e[..., ::s, ::s]
    eye = np.eye(2 ** (-delta))
    d = e.shape[-1] * eye.shape[0]
    return np.einsum("...ij,ab->...iajb", e, eye).reshape(e.shape[:-2] + (d, d))


def _tr_rest_product(a: np.ndarray, b: np.ndarray, m_in: int, m_out: int, j: int) -> np.ndarray:
    """``tr_rest(a @ b)`` keeping the input qubits and output qubit ``j``."""
    a4 = _to_front(a, m_in, m_out, j)  # (..., k, r, D)
    b4 = _to_front(b.swapaxes(-1, -2), m_in, m_out, j)  # (..., k', r, D)
    prod = np.swapaxes(a4, -2, -3) @ np.moveaxis(b4, -3, -1)  # (..., r, k, k')
    return prod.sum(axis=-3)


def layer_backward(factors, layer, effect: np.ndarray, m_in: int) -> tuple:
    """Pull ``effect`` back through one layer.

    ``factors`` are the layer's :class:`~reshqcnn.network.LayerFactors`.
    Returns ``(grads, effect_in)``: ``grads[j-1]`` is the batch-mean of
    ``tr_rest(i [A_j, B_j])`` and ``effect_in`` the adjoint-channel image of
    ``effect`` on the layer input.

    With ``A_j = W_j S W_j^dagger`` and ``B_j = V^dagger (Id ⊗ effect) V``
    (``V`` the perceptrons after ``j``), ``B_j W_j = V^dagger (Id ⊗ effect) W_m``,
    so only the thin factor ``Y = (Id ⊗ effect) W_m`` is pulled back.
    """
    m_out = len(layer)
    a, s = 2**m_in, 2**m_out
    ws, sign = factors.w, factors.sign
    r = ws[-1].shape[-1]
    w3 = ws[-1].reshape(ws[-1].shape[:-2] + (a, s, r))
    y = (effect[..., None, :, :] @ w3).reshape(ws[-1].shape)
    grads = [None] * m_out
    for j in reversed(range(m_out)):
        t = _tr_rest_product(ws[j] * sign[..., None, :], y.conj().swapaxes(-1, -2), m_in, m_out, j)
        g = 1j * (t - t.conj().swapaxes(-1, -2))
        grads[j] = g.reshape((-1,) + g.shape[-2:]).mean(axis=0)
        y = apply_left(layer[j].conj().T, y, m_in, m_out, j)
    # adjoint channel: <i,0| U^dagger (Id ⊗ effect) U |i',0>
    iso = np.zeros((a * s, a), dtype=complex)
    iso[::s, :] = np.eye(a)
    for j, u in enumerate(layer):
        iso = apply_left(u, iso, m_in, m_out, j)
    iso3 = iso.reshape(a, s, a)
    pulled = (effect[..., None, :, :] @ iso3).reshape(effect.shape[:-2] + (a * s, a))
    return grads, iso.conj().T @ pulled


def gradient_pass(spec: NetworkSpec, perceptrons: Perceptrons, pairs) -> tuple:
    """One forward/backward sweep.

    Returns ``(F, grads)`` with ``F`` the un-normalised mean fidelity and
    ``grads[l-1][j-1] = (1/N) sum_x sum_paths tr_rest(i [A, B])``, so that
    ``dF/ds = sum tr(grads * K)`` for generators ``K``.
    """
    phi_in, phi_out = _stack(pairs, spec)
    stages, caches = forward_stages(projector(phi_in), spec, perceptrons)
    T = spec.terminal
    fid = fidelity_pure(phi_out, stages[T])
    effects = {T: projector(phi_out)}
    grads = [None] * spec.n_layers
    for l in range(spec.n_layers, 0, -1):
        out_effect = spec.apply_weight(l + 1) * effects[l + 1]
        m_in = spec.widths[l - 1]
        grads[l - 1], e = layer_backward(caches[l], perceptrons[l - 1], out_effect, m_in)
        for t in spec.edges_from(l):
            delta = spec.stage_width(t) - spec.stage_width(l)
            e = e + spec.residual_weight() * _adapt_adjoint(effects[t], delta)
        effects[l] = e
    return float(np.mean(fid)), grads


def _k_from_grads(spec, grads, eta) -> list:
    return [
        [eta * 2 ** spec.widths[l] * g for g in layer_grads]
        for l, layer_grads in enumerate(grads)
    ]


def k_matrices(spec: NetworkSpec, perceptrons: Perceptrons, pairs, eta: float = 1.0) -> list:
    """All ``K_j^l``, indexed ``[l-1][j-1]``."""
    _, grads = gradient_pass(spec, perceptrons, pairs)
    return _k_from_grads(spec, grads, eta)


def _check_index(spec, l, j):
    if not 1 <= l <= spec.n_layers:
        raise IndexError(f"layer {l} out of range 1..{spec.n_layers}")
    if not 1 <= j <= spec.widths[l]:
        raise IndexError(f"perceptron {j} out of range 1..{spec.widths[l]} in layer {l}")


def k_matrix(spec, perceptrons, pairs, l: int, j: int, eta: float = 1.0) -> np.ndarray:
    _check_index(spec, l, j)
    return k_matrices(spec, perceptrons, pairs, eta)[l - 1][j - 1]


def dcost_ds_analytic(spec, perceptrons, pairs, k_all) -> float:
    """First-order rate of change of :func:`cost` under ``U <- exp(i s K) U``."""
    _, grads = gradient_pass(spec, perceptrons, pairs)
    if len(k_all) != len(grads) or any(len(a) != len(b) for a, b in zip(k_all, grads)):
        raise ValueError("k_all does not match the network shape")
    total = 0.0
    for gl, kl in zip(grads, k_all):
        for g, k in zip(gl, kl):
            if g.shape != k.shape:
                raise ValueError(f"K shape {k.shape} does not match {g.shape}")
            total += np.trace(g @ k).real
    return total / normalization(spec)


def apply_updates(perceptrons: Perceptrons, k_all, eps: float) -> Perceptrons:
    new = []
    for l, (layer, kl) in enumerate(zip(perceptrons, k_all), start=1):
        row = []
        for j, (u, k) in enumerate(zip(layer, kl), start=1):
            v = expm_i_herm(k, eps) @ u
            row.append(v)
        new.append(row)
    return new


def update_step(spec, perceptrons, pairs, hp: HyperParams) -> Perceptrons:
    """Simultaneous update of every perceptron from the current parameters."""
    new = apply_updates(perceptrons, k_matrices(spec, perceptrons, pairs, hp.eta), hp.eps)
    check_perceptrons(spec, new)
    return new


def train(spec: NetworkSpec, pairs, hp: HyperParams, perceptrons: Optional[Perceptrons] = None):
    """Run ``hp.rounds`` update steps from Haar-random (or given) perceptrons.

    Returns ``(perceptrons, trace)``; ``trace`` has ``hp.rounds + 1`` entries,
    the first being the initial cost.
    """
    if perceptrons is None:
        perceptrons = random_perceptrons(spec, make_rng(hp.seed, INIT_STREAM))
    check_perceptrons(spec, perceptrons)
    norm = normalization(spec)
    trace = CostTrace()
    t0 = time.perf_counter()
    for r in range(hp.rounds + 1):
        F, grads = gradient_pass(spec, perceptrons, pairs)
        c = F / norm
        if not -COST_TOL <= c <= 1 + COST_TOL:
            raise InvariantError(f"round {r}: cost {c} outside [0, 1]")
        trace.append(r, c, (time.perf_counter() - t0) * 1e3)
        if r == hp.rounds:
            break
        perceptrons = apply_updates(perceptrons, _k_from_grads(spec, grads, hp.eta), hp.eps)
        if r % 50 == 49:
            check_perceptrons(spec, perceptrons)
            log.debug("round %d cost %.6f", r + 1, c)
    check_perceptrons(spec, perceptrons)
    return perceptrons, trace
