"""Experiment runners shared by the CLI and the acceptance suite."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .datagen import DataSetDescriptor
from .network import NetworkSpec, parse_spec
from .training import CostTrace, HyperParams, evaluate, train


@dataclass(frozen=True)
class RunConfig:
    spec: str = "2,3~,2"
    pairs: int = 10
    rounds: int = 250
    eta: float = 1 / 1.8
    eps: float = 0.1
    seed: int = 0
    noisy: int = 0
    p: Optional[float] = None
    out: str = "run"

    def network(self) -> NetworkSpec:
        spec = parse_spec(self.spec)
        if self.p is not None:
            spec = replace(spec, p=self.p)
        return spec

    def hyper(self, seed: Optional[int] = None) -> HyperParams:
        return HyperParams(self.eta, self.eps, self.rounds, self.seed if seed is None else seed)


@dataclass
class RunResult:
    trace: CostTrace
    train_cost: float
    eval_cost: float


EVAL_SETS = ("good", "heldout")


def run_single(spec: NetworkSpec, n_pairs: int, n_noisy: int, hp: HyperParams, eval_set: str = "good") -> RunResult:
    """Generate data for ``hp.seed``, train, and evaluate.

    ``eval_set="good"`` scores the uncorrupted originals of the training
    pairs; ``"heldout"`` scores ``n_pairs`` fresh clean pairs from the same V.
    """
    if eval_set not in EVAL_SETS:
        raise ValueError(f"eval_set must be one of {EVAL_SETS}")
    desc = DataSetDescriptor(spec.widths[0], spec.widths[-1], n_pairs, n_noisy, hp.seed)
    good, train_set, v = desc.build()
    perceptrons, trace = train(spec, train_set, hp)
    test = good if eval_set == "good" else desc.heldout(v)
    return RunResult(trace, trace.final, evaluate(test, spec, perceptrons))


def _pmap(fn, jobs: Sequence[tuple], workers: int) -> list:
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


@dataclass
class NoiseRow:
    n_noisy: int
    cost_res: float
    cost_plain: float
    variance: float


def _noise_cell(spec, n_pairs, n, hp, eval_set):
    res = run_single(spec, n_pairs, n, hp, eval_set).eval_cost
    plain = run_single(spec.stripped(), n_pairs, n, hp, eval_set).eval_cost
    return res, plain


def noise_sweep(cfg: RunConfig, stride: int, seeds: int = 5, workers: int = 1, eval_set: str = "good") -> list:
    """Residual vs. residual-stripped network under growing label corruption.

    Replicate ``k`` uses seed ``cfg.seed + k`` for data and initialisation;
    both networks see identical data and identical initial perceptrons.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    spec = cfg.network()
    ns = list(range(0, cfg.pairs + 1, stride))
    jobs = [(spec, cfg.pairs, n, cfg.hyper(cfg.seed + k), eval_set) for n in ns for k in range(seeds)]
    results = iter(_pmap(_noise_cell, jobs, workers))
    rows = []
    for n in ns:
        cells = [next(results) for _ in range(seeds)]
        res = [c[0] for c in cells]
        plain = [c[1] for c in cells]
        rows.append(
            NoiseRow(n, float(np.mean(res)), float(np.mean(plain)), float(np.mean(np.subtract(res, plain))))
        )
    return rows


@dataclass
class PRow:
    p: float
    final_cost: float
    rounds_to_095: int
    mean_curve: list


def _p_cell(spec, n_pairs, hp):
    return run_single(spec, n_pairs, 0, hp).trace.costs


def p_sweep(cfg: RunConfig, p_values: Sequence[float], seeds: int = 1, workers: int = 1) -> list:
    """Mixing variant at each ``p`` plus the ``p = 0`` baseline (first row).

    Costs are averaged over ``seeds`` replicates; ``rounds_to_095`` is read off
    the averaged curve (``-1`` when it never reaches 0.95).
    """
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0, 1]")
    base = cfg.network()
    ps = [0.0] + list(p_values)
    jobs = [
        (replace(base, p=p), cfg.pairs, cfg.hyper(cfg.seed + k)) for p in ps for k in range(seeds)
    ]
    results = iter(_pmap(_p_cell, jobs, workers))
    rows = []
    for p in ps:
        curve = np.mean([next(results) for _ in range(seeds)], axis=0)
        hit = np.nonzero(curve >= 0.95)[0]
        rows.append(PRow(p, float(curve[-1]), int(hit[0]) if hit.size else -1, curve.tolist()))
    return rows


def rounds_to_median(spec: NetworkSpec, n_pairs: int, hp: HyperParams, seeds: Sequence[int], threshold=0.95):
    """Median over seeds of the first round reaching ``threshold`` (inf if never)."""
    vals = []
    for s in seeds:
        r = run_single(spec, n_pairs, 0, replace(hp, seed=s)).trace.rounds_to(threshold)
        vals.append(float("inf") if r is None else r)
    return statistics.median(vals), vals


# ---------------------------------------------------------------------------
# Figure presets: caption settings verbatim.


@dataclass(frozen=True)
class CurvesPreset:
    specs: tuple
    pairs: int
    rounds: int
    eta: float
    eps: float = 0.1
    kind: str = "curves"


@dataclass(frozen=True)
class NoisePreset:
    spec: str
    pairs: int
    rounds: int
    eta: float
    stride: int
    eps: float = 0.1
    kind: str = "noise"


@dataclass(frozen=True)
class PPreset:
    specs: tuple
    p_values: tuple
    pairs: int
    rounds: int
    eta: float = 1.0
    eps: float = 0.1
    kind: str = "p"


FIG13_ROUNDS = 300

PRESETS = {
    "fig7a": CurvesPreset(("1,2~,1", "1,2,1", "2,3~,2", "2,3,2"), 10, 250, 1 / 1.8),
    "fig7b": CurvesPreset(("1,2~,1~", "1,2,1", "2,3~,2~", "2,3,2"), 10, 250, 1 / 2),
    "fig8a": CurvesPreset(("2,3~,3~,2", "2,3^,3~,2", "2,3,3~,2", "2,3~,3,2"), 10, 600, 1 / 5),
    "fig8b": CurvesPreset(("2,3^,3~,2", "2,3,3~,2"), 10, 600, 1 / 3),
    "fig9a": CurvesPreset(("2,3~,4~,2", "2,3^,4~,2", "2,3,4~,2", "2,3~,4,2"), 10, 1000, 1 / 9),
    "fig9b": CurvesPreset(("2,3^,4~,2", "2,3,4~,2"), 10, 1000, 1 / 5),
    "fig10a": CurvesPreset(("2,3~,3~,3~,2", "2,3,3,3,2"), 5, 1000, 1 / 15),
    "fig10b": CurvesPreset(("2,3~,4~,5~,2", "2,3,4,5,2"), 5, 2500, 1 / 35),
    "fig11a": NoisePreset("2,3~,2", 30, 50, 1 / 1.8, 3),
    "fig11b": NoisePreset("2,3~,2", 100, 200, 1 / 1.8, 5),
    "fig12a": NoisePreset("2,3~,4~,2", 30, 150, 1 / 9, 3),
    "fig12b": NoisePreset("2,3~,4~,2", 100, 600, 1 / 9, 5),
    "fig13": PPreset(("1,2~,1", "2,3~,2"), (0.3, 0.6, 0.9, 1.0), 10, FIG13_ROUNDS),
}
