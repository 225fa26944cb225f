"""Res-HQCNN computation graph: spec strings, branch paths and feedforward.

Stages are numbered from 1. Stage ``t`` (``1 <= t <= L+1``) is the input of
layer ``t`` and lives on ``widths[t-1]`` qubits; stage ``L+2`` is the
network output (``widths[L+1]`` qubits). A residual edge ``(t, s)`` adds the
state that entered stage ``s`` to the state entering stage ``t``, zero-padded
with trailing ``|0>`` qubits (or, into the output stage, reduced by tracing
out trailing qubits).

Perceptrons are stored as ``perceptrons[l-1][j-1]`` for layer ``l`` and
perceptron ``j``. Within the layer register the ``m_{l-1}`` input qubits come
first and the ``m_l`` output qubits follow; perceptron ``j`` acts on all
input qubits plus output qubit ``j``, in that order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .qmath import (
    InvariantError,
    num_qubits,
    projector,
    random_unitary,
    unitarity_error,
)

Perceptrons = list  # list[list[np.ndarray]], indexed [l-1][j-1]

UNITARY_TOL = 1e-10


class SpecError(ValueError):
    """Malformed spec string or inconsistent network description."""


@dataclass(frozen=True)
class NetworkSpec:
    widths: tuple
    residual_edges: tuple = ()
    p: Optional[float] = None  # None: standard (additive) mode, else p-mix

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        edges = tuple(sorted((int(t), int(s)) for t, s in self.residual_edges))
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "residual_edges", edges)
        if len(widths) < 2:
            raise SpecError("need at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise SpecError(f"all widths must be >= 1, got {widths}")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise SpecError(f"p must lie in [0, 1], got {self.p}")
        L = len(widths) - 2
        targets = [t for t, _ in edges]
        if len(set(targets)) != len(targets):
            raise SpecError(f"more than one residual edge into a stage: {edges}")
        for t, s in edges:
            if not 1 <= s < t <= L + 2:
                raise SpecError(f"residual edge {(t, s)} outside 1 <= s < t <= {L + 2}")
            src = widths[s - 1]
            if t <= L + 1 and src > widths[t - 1]:
                raise SpecError(
                    f"edge {(t, s)}: source width {src} exceeds target width {widths[t - 1]}"
                )
            if t == L + 2 and src < widths[L + 1]:
                raise SpecError(
                    f"output edge {(t, s)}: source width {src} below output width {widths[L + 1]}"
                )

    @property
    def L(self) -> int:
        """Number of hidden layers."""
        return len(self.widths) - 2

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def terminal(self) -> int:
        return len(self.widths)

    @property
    def mode(self) -> str:
        return "standard" if self.p is None else "pmix"

    def stage_width(self, t: int) -> int:
        return self.widths[t - 1]

    def edge_into(self, t: int) -> Optional[int]:
        for tt, s in self.residual_edges:
            if tt == t:
                return s
        return None

    def edges_from(self, s: int) -> list:
        return [t for t, ss in self.residual_edges if ss == s]

    def apply_weight(self, t: int) -> float:
        """Weight of the applied-layer branch arriving at stage ``t``."""
        if self.p is not None and self.edge_into(t) is not None:
            return 1.0 - self.p
        return 1.0

    def residual_weight(self) -> float:
        return 1.0 if self.p is None else self.p

    def stripped(self) -> "NetworkSpec":
        """Same widths, no residual edges, standard mode."""
        return NetworkSpec(self.widths)

    def __str__(self) -> str:
        return format_spec(self)


_TOKEN = re.compile(r"^\s*(\d+)\s*([~^]?)\s*$")


def parse_spec(text: str) -> NetworkSpec:
    """Parse ``"2,3~,2"``-style network descriptions.

    ``~`` on layer ``l`` adds a residual block around it (edge ``(l+1, l)``);
    each ``^`` immediately before a ``~`` moves that block's source back by
    one layer, so ``"2,3^,3~,2"`` feeds the network input into stage 3. A
    ``~`` on the output layer adds the input of the output layer to the
    final output. ``";p=0.3"`` selects the convex-mixing variant.
    """
    body, _, opts = text.partition(";")
    p = None
    if opts.strip():
        key, eq, val = opts.partition("=")
        if key.strip() != "p" or not eq:
            raise SpecError(f"unknown option {opts.strip()!r}")
        try:
            p = float(val)
        except ValueError:
            raise SpecError(f"bad p value {val!r}") from None
    widths, edges = [], []
    pending = 0
    tokens = body.split(",")
    for i, tok in enumerate(tokens):
        m = _TOKEN.match(tok)
        if m is None:
            raise SpecError(f"malformed token {tok!r}")
        widths.append(int(m.group(1)))
        mark = m.group(2)
        if mark and i == 0:
            raise SpecError("the input layer cannot carry '~' or '^'")
        if mark == "^":
            if i == len(tokens) - 1:
                raise SpecError("'^' on the output layer has no residual to shift")
            pending += 1
        elif mark == "~":
            src = i - pending
            if src < 1:
                raise SpecError(f"'^' run before token {i} reaches past the input layer")
            edges.append((i + 1, src))
            pending = 0
        elif pending:
            raise SpecError(f"'^' must be followed by a '~' layer (token {i})")
    if pending:
        raise SpecError("dangling '^'")
    return NetworkSpec(tuple(widths), tuple(edges), p)


def format_spec(spec: NetworkSpec) -> str:
    marks = [""] * len(spec.widths)
    for t, s in spec.residual_edges:
        for k in range(s, t - 1):
            if marks[k]:
                raise SpecError(f"{spec!r} is not expressible as a spec string")
            marks[k] = "^"
        if marks[t - 1]:
            raise SpecError(f"{spec!r} is not expressible as a spec string")
        marks[t - 1] = "~"
    text = ",".join(f"{w}{mk}" for w, mk in zip(spec.widths, marks))
    if spec.p is not None:
        text += f";p={spec.p!r}"
    return text


# ---------------------------------------------------------------------------
# Branch paths


class Hop(NamedTuple):
    kind: str  # "apply" or "residual"
    source: int  # stage left
    target: int  # stage entered
    delta: int = 0  # residual width change: >0 pad qubits, <0 traced-out qubits


@dataclass(frozen=True)
class Path:
    hops: tuple

    @property
    def layers(self) -> tuple:
        return tuple(h.source for h in self.hops if h.kind == "apply")

    @property
    def pads(self) -> tuple:
        return tuple(h.delta for h in self.hops if h.kind == "residual")

    def weight(self, spec: NetworkSpec) -> float:
        w = 1.0
        for h in self.hops:
            w *= spec.apply_weight(h.target) if h.kind == "apply" else spec.residual_weight()
        return w


@dataclass(frozen=True)
class PathDag:
    spec: NetworkSpec
    paths: tuple

    def __len__(self) -> int:
        return len(self.paths)

    def containing(self, layer: int) -> list:
        return [p for p in self.paths if layer in p.layers]


def enumerate_paths(spec: NetworkSpec) -> PathDag:
    """All input-to-output routes; full path first, then lexicographic on layers."""
    memo = {1: [()]}

    def routes(t):
        if t not in memo:
            out = [r + (Hop("apply", t - 1, t),) for r in routes(t - 1)]
            s = spec.edge_into(t)
            if s is not None:
                delta = spec.stage_width(t) - spec.stage_width(s)
                out += [r + (Hop("residual", s, t, delta),) for r in routes(s)]
            memo[t] = out
        return memo[t]

    paths = [Path(h) for h in routes(spec.terminal)]
    full = tuple(range(1, spec.n_layers + 1))
    paths.sort(key=lambda p: (p.layers != full, p.layers))
    return PathDag(spec, tuple(paths))


# ---------------------------------------------------------------------------
# Perceptrons


def random_perceptrons(spec: NetworkSpec, rng: np.random.Generator) -> Perceptrons:
    """Independent Haar-random ``U_j^l``, drawn layer by layer, j ascending."""
    out = []
    for l in range(1, spec.n_layers + 1):
        dim = 2 ** (spec.widths[l - 1] + 1)
        out.append([random_unitary(dim, rng) for _ in range(spec.widths[l])])
    return out


def identity_perceptrons(spec: NetworkSpec) -> Perceptrons:
    return [
        [np.eye(2 ** (spec.widths[l - 1] + 1), dtype=complex) for _ in range(spec.widths[l])]
        for l in range(1, spec.n_layers + 1)
    ]


def check_perceptrons(spec: NetworkSpec, perceptrons: Perceptrons, tol: float = UNITARY_TOL):
    if len(perceptrons) != spec.n_layers:
        raise SpecError(f"expected {spec.n_layers} layers of perceptrons, got {len(perceptrons)}")
    for l, layer in enumerate(perceptrons, start=1):
        if len(layer) != spec.widths[l]:
            raise SpecError(f"layer {l}: expected {spec.widths[l]} perceptrons, got {len(layer)}")
        dim = 2 ** (spec.widths[l - 1] + 1)
        for j, u in enumerate(layer, start=1):
            if u.shape != (dim, dim):
                raise SpecError(f"U_{j}^{l} has shape {u.shape}, expected {(dim, dim)}")
            err = unitarity_error(u)
            if err > tol:
                raise InvariantError(f"U_{j}^{l} not unitary: deviation {err:.3e}")


def copy_perceptrons(perceptrons: Perceptrons) -> Perceptrons:
    return [[u.copy() for u in layer] for layer in perceptrons]


# ---------------------------------------------------------------------------
# Layer kernels. Operators carry leading batch axes; the layer register has
# m_in input qubits followed by m_out output qubits.


def _to_front(x: np.ndarray, m_in: int, m_out: int, j: int) -> np.ndarray:
    """Rows reordered to (input qubits, output qubit j, other output qubits)."""
    *batch, _, cols = x.shape
    y = x.reshape(*batch, 2**m_in, 2**j, 2, 2 ** (m_out - j - 1), cols)
    y = np.moveaxis(y, -3, -4)
    return y.reshape(*batch, 2 ** (m_in + 1), 2 ** (m_out - 1), cols)


def _from_front(y: np.ndarray, m_in: int, m_out: int, j: int) -> np.ndarray:
    *batch, _, _, cols = y.shape
    y = y.reshape(*batch, 2**m_in, 2, 2**j, 2 ** (m_out - j - 1), cols)
    y = np.moveaxis(y, -4, -3)
    return y.reshape(*batch, 2 ** (m_in + m_out), cols)


def apply_left(u: np.ndarray, x: np.ndarray, m_in: int, m_out: int, j: int) -> np.ndarray:
    """``U_j x`` with ``u`` acting on the input qubits and output qubit ``j`` (0-based)."""
    y = _to_front(x, m_in, m_out, j)
    *batch, k, r, cols = y.shape
    y = (u @ y.reshape(*batch, k, r * cols)).reshape(*batch, k, r, cols)
    return _from_front(y, m_in, m_out, j)


def conjugate(u: np.ndarray, x: np.ndarray, m_in: int, m_out: int, j: int) -> np.ndarray:
    """``U_j x U_j^dagger``."""
    y = apply_left(u, x, m_in, m_out, j)
    y = apply_left(u, y.conj().swapaxes(-1, -2), m_in, m_out, j)
    return y.conj().swapaxes(-1, -2)


def pad_zeros(rho: np.ndarray, n: int) -> np.ndarray:
    """``rho ⊗ |0...0><0...0|`` on ``n`` trailing qubits."""
    if n == 0:
        return rho
    d = rho.shape[-1]
    s = 2**n
    out = np.zeros(rho.shape[:-2] + (d * s, d * s), dtype=complex)
    out[..., ::s, ::s] = rho
    return out


def trace_trailing(rho: np.ndarray, n: int) -> np.ndarray:
    """Partial trace over the last ``n`` qubits."""
    if n == 0:
        return rho
    d = rho.shape[-1] // 2**n
    t = rho.reshape(rho.shape[:-2] + (d, 2**n, d, 2**n))
    return np.einsum("...iaja->...ij", t)


def trace_leading(x: np.ndarray, n: int) -> np.ndarray:
    """Partial trace over the first ``n`` qubits."""
    a = 2**n
    d = x.shape[-1] // a
    t = x.reshape(x.shape[:-2] + (a, d, a, d))
    return np.einsum("...aiaj->...ij", t)


def adapt(rho: np.ndarray, delta: int) -> np.ndarray:
    """Width change along a residual edge: pad if ``delta > 0``, trace down if ``< 0``."""
    return pad_zeros(rho, delta) if delta >= 0 else trace_trailing(rho, -delta)


def layer_forward(rho_in: np.ndarray, layer: Sequence[np.ndarray]) -> tuple:
    """Run one layer, keeping every partial product.

    Returns ``(rho_out, states)`` where ``states[j-1]`` is
    ``U_j...U_1 (rho_in ⊗ |0..0><0..0|) U_1^dagger...U_j^dagger``.
    """
    m_in = num_qubits(rho_in.shape[-1])
    m_out = len(layer)
    x = pad_zeros(rho_in, m_out)
    states = []
    for j, u in enumerate(layer):
        if u.shape[-1] != 2 ** (m_in + 1):
            raise SpecError(f"perceptron of dim {u.shape[-1]} cannot act on {m_in} input qubits")
        x = conjugate(u, x, m_in, m_out, j)
        states.append(x)
    return trace_leading(x, m_in), states


@dataclass
class LayerFactors:
    """Low-rank form of a layer's intermediate states.

    ``states[j-1] = w[j-1] @ diag(sign) @ w[j-1]^dagger`` where ``w[j-1]`` is
    ``U_j...U_1 (V ⊗ |0..0>)`` and ``rho_in = V diag(sign) V^dagger``. Each
    factor has ``2**m_in`` columns instead of ``2**(m_in+m_out)``.
    """

    w: list
    sign: np.ndarray


def hermitian_factor(rho: np.ndarray) -> tuple:
    """``rho = v @ diag(sign) @ v^dagger`` from the eigendecomposition (batched)."""
    lam, q = np.linalg.eigh(rho)
    return q * np.sqrt(np.abs(lam))[..., None, :], np.sign(lam)


def layer_forward_factored(rho_in: np.ndarray, layer: Sequence[np.ndarray]) -> tuple:
    """Same output as :func:`layer_forward`, with the states kept as :class:`LayerFactors`."""
    m_in = num_qubits(rho_in.shape[-1])
    m_out = len(layer)
    a, s = 2**m_in, 2**m_out
    v, sign = hermitian_factor(rho_in)
    w = np.zeros(v.shape[:-2] + (a * s, v.shape[-1]), dtype=complex)
    w[..., ::s, :] = v
    ws = []
    for j, u in enumerate(layer):
        if u.shape[-1] != 2 ** (m_in + 1):
            raise SpecError(f"perceptron of dim {u.shape[-1]} cannot act on {m_in} input qubits")
        w = apply_left(u, w, m_in, m_out, j)
        ws.append(w)
    # tr_in: group (input qubits, rank) as the contracted axis
    wt = np.swapaxes(w.reshape(w.shape[:-2] + (a, s, w.shape[-1])), -2, -3)
    wt = wt.reshape(w.shape[:-2] + (s, a * w.shape[-1]))
    signed = wt * np.tile(sign, a)[..., None, :]
    rho_out = signed @ wt.conj().swapaxes(-1, -2)
    return rho_out, LayerFactors(ws, sign)


def layer_channel(rho_in: np.ndarray, l: int, perceptrons: Perceptrons) -> np.ndarray:
    """``tr_in( U^l (rho_in ⊗ |0..0><0..0|) U^l^dagger )`` with ``U^l = U_m...U_1``."""
    return layer_forward(rho_in, perceptrons[l - 1])[0]


# ---------------------------------------------------------------------------
# Feedforward


@dataclass
class BranchState:
    stage: int
    state: np.ndarray
    layers: tuple = ()
    weight: float = 1.0


def residual_combine(branches: Sequence[BranchState], spec: NetworkSpec) -> np.ndarray:
    """Sum (standard mode) or weighted convex sum (p-mix) of branch states."""
    if not branches:
        raise ValueError("no branches to combine")
    shape = branches[0].state.shape
    total = np.zeros(shape, dtype=complex)
    for b in branches:
        if b.state.shape != shape:
            raise SpecError(f"branch width mismatch: {b.state.shape} vs {shape}")
        total += (b.weight if spec.p is not None else 1.0) * b.state
    return total


def feedforward(phi_in: np.ndarray, spec: NetworkSpec, perceptrons: Perceptrons) -> tuple:
    """Propagate ``|phi_in><phi_in|`` branch by branch.

    Returns ``(rho_out, branch_log)``; ``branch_log`` holds every branch state
    at every stage, terminal branches included.
    """
    if phi_in.shape[-1] != 2 ** spec.widths[0]:
        raise SpecError(f"input state has dim {phi_in.shape[-1]}, expected {2 ** spec.widths[0]}")
    at = {1: [BranchState(1, projector(phi_in))]}
    for t in range(2, spec.terminal + 1):
        arrived = []
        w_apply = spec.apply_weight(t)
        for b in at[t - 1]:
            out = layer_channel(b.state, t - 1, perceptrons)
            arrived.append(BranchState(t, out, b.layers + (t - 1,), b.weight * w_apply))
        s = spec.edge_into(t)
        if s is not None:
            delta = spec.stage_width(t) - spec.stage_width(s)
            for b in at[s]:
                arrived.append(
                    BranchState(t, adapt(b.state, delta), b.layers, b.weight * spec.residual_weight())
                )
        at[t] = arrived
    log = [b for t in sorted(at) for b in at[t]]
    return residual_combine(at[spec.terminal], spec), log


def forward_stages(rho_in: np.ndarray, spec: NetworkSpec, perceptrons: Perceptrons) -> tuple:
    """Summed stage states, batched over leading axes of ``rho_in``.

    Returns ``(stages, caches)``: ``stages[t]`` is the (combined) state entering
    stage ``t`` for ``t = 1..L+2`` and ``caches[l]`` the :class:`LayerFactors`
    of layer ``l``.
    """
    stages = {1: rho_in}
    caches = {}
    for t in range(2, spec.terminal + 1):
        out, caches[t - 1] = layer_forward_factored(stages[t - 1], perceptrons[t - 2])
        w = spec.apply_weight(t)
        x = out if w == 1.0 else w * out
        s = spec.edge_into(t)
        if s is not None:
            delta = spec.stage_width(t) - spec.stage_width(s)
            x = x + spec.residual_weight() * adapt(stages[s], delta)
        stages[t] = x
    return stages, caches
