"""Command-line harness.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 numerical invariant violated.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .datagen import DataSetDescriptor
from .network import SpecError, random_perceptrons
from .oracles import (
    k_matrix_fd_oracle,
    k_matrix_unrolled_oracle,
    missing_branches,
    oracle_shape,
    unrolled_path_sum,
)
from .plots import write_line_chart
from .qmath import InvariantError, make_rng
from .training import k_matrices

log = logging.getLogger("reshqcnn")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

FD_TOL = 1e-6
UNROLLED_TOL = 1e-10
FD_DELTA = 1e-4


class UsageError(Exception):
    pass


def real(text: str) -> float:
    """Float or fraction such as ``1/1.8``."""
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def slug(spec: str) -> str:
    return spec.replace(",", "-").replace("~", "t").replace("^", "h").replace(";p=", "_p")


# ---------------------------------------------------------------------------
# Config handling

_CONFIG_TYPES = {
    "spec": str,
    "pairs": int,
    "rounds": int,
    "eta": real,
    "eps": real,
    "seed": int,
    "noisy": int,
    "p": real,
    "out": str,
}


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key = key.strip()
        if not eq or key not in _CONFIG_TYPES:
            raise UsageError(f"{path}:{lineno}: expected key=value with key in {sorted(_CONFIG_TYPES)}")
        try:
            values[key] = _CONFIG_TYPES[key](val.strip())
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


def build_config(args, defaults: dict | None = None) -> ex.RunConfig:
    values = dict(defaults or {})
    if getattr(args, "config", None):
        try:
            values.update(read_config_file(args.config))
        except OSError as exc:
            raise UsageError(str(exc)) from None
    for key in _CONFIG_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = ex.RunConfig(**values)
    if cfg.pairs < 1 or cfg.rounds < 0 or cfg.eta <= 0 or cfg.eps <= 0 or cfg.seed < 0:
        raise UsageError(f"invalid numeric settings: {cfg}")
    if not 0 <= cfg.noisy <= cfg.pairs:
        raise UsageError("--noisy must lie in [0, pairs]")
    cfg.network()  # raises SpecError on a bad spec string
    return cfg


def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--spec", help='network, e.g. "2,3~,2" or "2,3^,3~,2" or "1,2~,1;p=0.5"')
    p.add_argument("--pairs", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--eta", type=real, help="learning rate (1/lambda); fractions allowed")
    p.add_argument("--eps", type=real)
    p.add_argument("--seed", type=int)
    p.add_argument("--p", type=real, help="mixing parameter (selects the convex variant)")
    p.add_argument("--out", help="output path prefix")


# ---------------------------------------------------------------------------
# Commands


def _train_and_write(cfg: ex.RunConfig, svg: bool = False):
    spec = cfg.network()
    res = ex.run_single(spec, cfg.pairs, cfg.noisy, cfg.hyper())
    t = res.trace
    write_csv(f"{cfg.out}.csv", ["round", "cost", "wall_ms"], zip(t.rounds, t.costs, t.wall_ms))
    if svg:
        write_line_chart(f"{cfg.out}.svg", [(str(spec), t.rounds, t.costs)], title=str(spec))
    print(f"{spec}: final cost {t.final:.17g}")
    if cfg.noisy:
        print(f"cost on good pairs {res.eval_cost:.17g}")
    return t


def cmd_train(cfg: ex.RunConfig, svg: bool = False) -> int:
    _train_and_write(cfg, svg)
    return EXIT_OK


def cmd_noise_sweep(cfg: ex.RunConfig, stride: int, seeds: int, workers: int = 1, svg: bool = False,
                    eval_set: str = "good") -> int:
    rows = ex.noise_sweep(cfg, stride, seeds, workers, eval_set)
    write_csv(
        f"{cfg.out}.csv",
        ["n_noisy", "cost_res", "cost_plain", "variance"],
        [(r.n_noisy, r.cost_res, r.cost_plain, r.variance) for r in rows],
    )
    if svg:
        ns = [r.n_noisy for r in rows]
        spec = cfg.network()
        write_line_chart(
            f"{cfg.out}.svg",
            [(str(spec), ns, [r.cost_res for r in rows]), (str(spec.stripped()), ns, [r.cost_plain for r in rows])],
            xlabel="noisy pairs",
        )
    for r in rows:
        print(f"n={r.n_noisy:4d}  res={r.cost_res:.4f}  plain={r.cost_plain:.4f}  diff={r.variance:+.4f}")
    return EXIT_OK


def cmd_p_sweep(cfg: ex.RunConfig, p_values, seeds: int = 1, workers: int = 1, svg: bool = False) -> int:
    if any(not 0.0 <= p <= 1.0 for p in p_values):
        raise UsageError(f"p values must lie in [0, 1]: {p_values}")
    rows = ex.p_sweep(cfg, p_values, seeds, workers)
    write_csv(
        f"{cfg.out}.csv",
        ["p", "final_cost", "rounds_to_095"],
        [(r.p, r.final_cost, r.rounds_to_095) for r in rows],
    )
    if svg:
        curves = [(f"p={r.p:g}", list(range(len(r.mean_curve))), r.mean_curve) for r in rows]
        write_line_chart(f"{cfg.out}.svg", curves, title=cfg.spec)
    for r in rows:
        print(f"p={r.p:g}  final={r.final_cost:.4f}  rounds_to_0.95={r.rounds_to_095}")
    return EXIT_OK


def cmd_gradcheck(cfg: ex.RunConfig) -> int:
    """Path-based K vs. finite differences vs. the unrolled term construction."""
    spec = cfg.network()
    good, _, _ = DataSetDescriptor(spec.widths[0], spec.widths[-1], cfg.pairs, 0, cfg.seed).build()
    perceptrons = random_perceptrons(spec, make_rng(cfg.seed, 1))
    ks = k_matrices(spec, perceptrons, good, cfg.eta)
    try:
        oracle_shape(spec)
        have_unrolled = True
    except ValueError:
        have_unrolled = False
        print(f"{spec}: no hand-derived term list; comparing against the unrolled sum over all branches")
    ok = True
    worst_fd = worst_un = 0.0
    for l in range(1, spec.n_layers + 1):
        for j in range(1, spec.widths[l] + 1):
            k = ks[l - 1][j - 1]
            d_fd = float(np.max(np.abs(k - k_matrix_fd_oracle(spec, perceptrons, good, l, j, FD_DELTA, cfg.eta))))
            worst_fd = max(worst_fd, d_fd)
            line = f"l={l} j={j}  |K-K_fd|={d_fd:.3e}"
            fail = d_fd > FD_TOL
            if have_unrolled:
                d_un = float(np.max(np.abs(k - k_matrix_unrolled_oracle(spec, perceptrons, good, l, j, cfg.eta))))
                missing = missing_branches(spec, l)
                if missing:
                    line += f"  |K-terms|={d_un:.3e} (term list omits branches {missing})"
                else:
                    worst_un = max(worst_un, d_un)
                    line += f"  |K-K_unrolled|={d_un:.3e}"
                    fail = fail or d_un > UNROLLED_TOL
            else:
                d_un = float(np.max(np.abs(k - unrolled_path_sum(spec, perceptrons, good, l, j, cfg.eta))))
                worst_un = max(worst_un, d_un)
                line += f"  |K-K_unrolled|={d_un:.3e}"
                fail = fail or d_un > UNROLLED_TOL
            print(line + ("  FAIL" if fail else ""))
            ok = ok and not fail
    print(f"max |K-K_fd| = {worst_fd:.3e} (tol {FD_TOL:g}); max |K-K_unrolled| = {worst_un:.3e} (tol {UNROLLED_TOL:g})")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_repro(figure: str, out_dir: str = "repro", seed: int = 0, seeds: int = 5,
              rounds: int | None = None, workers: int = 1) -> int:
    if figure not in ex.PRESETS:
        raise UsageError(f"unknown figure {figure!r}; valid names: {', '.join(ex.PRESETS)}")
    preset = ex.PRESETS[figure]
    if rounds is not None:
        preset = dataclasses.replace(preset, rounds=rounds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if preset.kind == "curves":
        curves = []
        for s in preset.specs:
            cfg = ex.RunConfig(s, preset.pairs, preset.rounds, preset.eta, preset.eps, seed,
                               out=str(out / f"{figure}_{slug(s)}"))
            t = _train_and_write(cfg, svg=True)
            curves.append((s, t.rounds, t.costs))
        write_line_chart(out / f"{figure}.svg", curves, title=figure)
    elif preset.kind == "noise":
        cfg = ex.RunConfig(preset.spec, preset.pairs, preset.rounds, preset.eta, preset.eps, seed,
                           out=str(out / figure))
        cmd_noise_sweep(cfg, preset.stride, seeds, workers, svg=True)
    else:
        for s in preset.specs:
            cfg = ex.RunConfig(s, preset.pairs, preset.rounds, preset.eta, preset.eps, seed,
                               out=str(out / f"{figure}_{slug(s)}"))
            rows = ex.p_sweep(cfg, preset.p_values, 1, workers)
            write_csv(f"{cfg.out}.csv", ["p", "final_cost", "rounds_to_095"],
                      [(r.p, r.final_cost, r.rounds_to_095) for r in rows])
            for r in rows:
                stem = out / f"{figure}_{slug(s)}_p{r.p:g}"
                xs = list(range(len(r.mean_curve)))
                write_csv(f"{stem}.csv", ["round", "cost"], zip(xs, r.mean_curve))
                write_line_chart(f"{stem}.svg", [(f"{s} p={r.p:g}", xs, r.mean_curve)])
                print(f"{s} p={r.p:g} final={r.final_cost:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reshqcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network and write its cost curve")
    _add_run_args(p)
    p.add_argument("--noisy", type=int, help="number of training pairs replaced by noise")
    p.add_argument("--svg", action="store_true", help="also write <out>.svg")

    p = sub.add_parser("noise-sweep", help="residual vs plain network under label noise")
    _add_run_args(p)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--eval-set", choices=ex.EVAL_SETS, default="good",
                   help="score the uncorrupted training pairs or fresh held-out pairs")

    p = sub.add_parser("p-sweep", help="convex-mixing variant at several p")
    _add_run_args(p)
    p.add_argument("--p-values", default="0.3,0.6,0.9,1")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("gradcheck", help="compare update matrices against both oracles")
    _add_run_args(p)

    p = sub.add_parser("repro", help="rerun a figure's experiment from its caption settings")
    p.add_argument("figure", help=", ".join(ex.PRESETS))
    p.add_argument("--out-dir", default="repro")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5, help="replicates for noise sweeps")
    p.add_argument("--rounds", type=int, help="override the caption's round count")
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return cmd_train(build_config(args), args.svg)
        if args.command == "noise-sweep":
            if args.stride < 1 or args.seeds < 1:
                raise UsageError("--stride and --seeds must be >= 1")
            return cmd_noise_sweep(build_config(args), args.stride, args.seeds, args.workers, args.svg,
                                   args.eval_set)
        if args.command == "p-sweep":
            try:
                ps = [real(v) for v in args.p_values.split(",") if v.strip()]
            except ValueError as exc:
                raise UsageError(f"bad --p-values: {exc}") from None
            return cmd_p_sweep(build_config(args, {"eta": 1.0}), ps, args.seeds, args.workers, args.svg)
        if args.command == "gradcheck":
            return cmd_gradcheck(build_config(args, {"pairs": 2}))
        if args.command == "repro":
            return cmd_repro(args.figure, args.out_dir, args.seed, args.seeds, args.rounds, args.workers)
    except (UsageError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
