"""Command-line front end.

Subcommands: generate, fit, spectral, cv, bench (table1 | sweep), ari.
Exit codes: 0 success, 1 usage error, 2 numerical failure. Data files are
headerless CSV, one sample per row; label files are JSON {"labels": [...]}
with 1-based labels. Report commands render a PNG next to the tabular
output unless --no-fig is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import plots
from .metrics import adjusted_rand_index
from .model import ValidationError
from .simulate import DataMatrix, NoiseSpec, generate_dataset, table1_system
from .spectral import abs_correlation, spectral_cluster
from .vem import FitOptions, fit

logger = logging.getLogger(__name__)

_CLI_SWEEPS = {
    "sigma": "sigma",
    "omega": "omega_offdiag",
    "tdof": "t_dof",
    "tdof-std": "t_dof_standardized",
    "mislead": "mislead",
    "misspec": "misspec",
}


def _write_labels(path, labels):
    Path(path).write_text(json.dumps({"labels": [int(v) for v in labels]}) + "\n")


def _read_labels(path) -> np.ndarray:
    obj = json.loads(Path(path).read_text())
    return np.asarray(obj["labels"], dtype=np.int64)


def _fig_path(args, out) -> str:
    return args.fig if args.fig else str(Path(out).with_suffix(".png"))


def _add_fig_flags(p):
    p.add_argument("--fig", default=None, help="figure output path (default: out with .png)")
    p.add_argument("--no-fig", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hbcm",
                                 description="Block covariance clustering toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="data CSV path")
    g.add_argument("--truth", required=True, help="ground truth JSON path")
    g.add_argument("--noise", choices=["gaussian", "t", "t-std"], default="gaussian")
    g.add_argument("--dof", type=float, default=None, help="degrees of freedom for t noise")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--sigma", type=float, default=None,
                      help="constant noise level with unit loadings")
    mode.add_argument("--table1", action="store_true",
                      help="benchmark-style random system (default)")

    f = sub.add_parser("fit", help="fit the model to a data CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="fit result JSON path")
    f.add_argument("--init", nargs="+", default=["spectral"],
                   metavar=("spectral|labels", "FILE"),
                   help='"spectral" or "labels FILE"')
    f.add_argument("--max-iters", type=int, default=500)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--paper-literal-init", action=argparse.BooleanOptionalAction,
                   default=True)

    s = sub.add_parser("spectral", help="spectral clustering only")
    s.add_argument("--data", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="labels JSON path")

    c = sub.add_parser("cv", help="choose K by split-half stability")
    c.add_argument("--data", required=True)
    c.add_argument("--k-min", type=int, default=2)
    c.add_argument("--k-max", type=int, default=9)
    c.add_argument("--m", type=int, default=10, help="number of splits")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="report JSON path")
    c.add_argument("--method", choices=["hbcm", "spectral"], default="hbcm")
    _add_fig_flags(c)

    b = sub.add_parser("bench", help="benchmark harness")
    bsub = b.add_subparsers(dest="bench_command", required=True)

    bt = bsub.add_parser("table1", help="reference grid")
    bt.add_argument("--cells", default="all",
                    help='"all" or semicolon-separated N,P,K triples')
    bt.add_argument("--reps", type=int, default=30)
    bt.add_argument("--seed", type=int, default=0)
    bt.add_argument("--out", required=True, help="rows CSV path")
    bt.add_argument("--summary", default=None,
                    help="summary CSV path (default: out stem + _summary.csv)")
    _add_fig_flags(bt)

    bs = bsub.add_parser("sweep", help="parameter sweeps")
    bs.add_argument("--name", required=True, choices=sorted(_CLI_SWEEPS))
    bs.add_argument("--reps", type=int, default=10)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--out", required=True, help="rows CSV path")
    bs.add_argument("--n", type=int, default=1000)
    bs.add_argument("--p", type=int, default=1000)
    bs.add_argument("--k", type=int, default=3)
    bs.add_argument("--grid", default=None,
                    help="comma-separated sweep values (default: the study grid)")
    _add_fig_flags(bs)

    a = sub.add_parser("ari", help="adjusted Rand index of two label files")
    a.add_argument("--a", required=True)
    a.add_argument("--b", required=True)
    return ap


def _cmd_generate(args) -> int:
    if args.noise == "t":
        noise = NoiseSpec("student_t", dof=args.dof)
    elif args.noise == "t-std":
        noise = NoiseSpec("student_t_standardized", dof=args.dof)
    else:
        noise = NoiseSpec()
    if args.sigma is not None:
        sys_ = bench_mod._uniform_block_system(args.p, args.k, 1.0, args.sigma, 0.5,
                                               seed=args.seed)
    else:
        sys_ = table1_system(args.n, args.p, args.k, seed=args.seed)
    data, truth = generate_dataset(args.n, sys_, noise, seed=args.seed + 1)
    data.write_csv(args.out)
    Path(args.truth).write_text(truth.to_json() + "\n")
    print(f"wrote {args.out} ({data.n} x {data.p}) and {args.truth}")
    return 0


def _cmd_fit(args) -> int:
    data = DataMatrix.read_csv(args.data)
    init_labels = None
    if args.init[0] == "labels":
        if len(args.init) != 2:
            raise UsageError('--init labels needs a file: "--init labels FILE"')
        init_labels = _read_labels(args.init[1])
    elif args.init != ["spectral"]:
        raise UsageError(f'--init must be "spectral" or "labels FILE", got {args.init}')
    opts = FitOptions(max_iters=args.max_iters, elbo_rel_tol=args.tol,
                      paper_literal_init=args.paper_literal_init)
    res = fit(data, args.k, opts=opts, init_labels=init_labels, seed=args.seed)
    Path(args.out).write_text(res.to_json() + "\n")
    print(f"fit: {res.iterations} iterations, converged={res.converged}, "
          f"final objective {res.elbo_trace[-1]:.6g} -> {args.out}")
    return 0


def _cmd_spectral(args) -> int:
    data = DataMatrix.read_csv(args.data)
    labels = spectral_cluster(abs_correlation(data), args.k, seed=args.seed)
    _write_labels(args.out, labels)
    print(f"spectral: {args.k} clusters -> {args.out}")
    return 0


def _cmd_cv(args) -> int:
    if args.k_min < 2 or args.k_max < args.k_min:
        raise UsageError(f"bad candidate range {args.k_min}..{args.k_max}")
    data = DataMatrix.read_csv(args.data)
    report = bench_mod.select_k_cv(data, range(args.k_min, args.k_max + 1),
                                   args.m, method=args.method, seed=args.seed)
    Path(args.out).write_text(report.to_json() + "\n")
    msg = f"cv: best K = {report.best_k} -> {args.out}"
    if not args.no_fig:
        msg += f" (+ {plots.plot_cv(report, _fig_path(args, args.out))})"
    print(msg)
    return 0


def _parse_cells(text: str):
    if text.strip() == "all":
        return bench_mod.TABLE1_CELLS
    cells = []
    for part in text.replace(";", " ").split():
        bits = part.split(",")
        if len(bits) != 3:
            raise UsageError(f"bad cell {part!r}; expected N,P,K")
        cells.append(tuple(int(b) for b in bits))
    if not cells:
        raise UsageError("no cells given")
    return cells


def _cmd_bench_table1(args) -> int:
    rows = bench_mod.bench_table1(_parse_cells(args.cells), reps=args.reps,
                                  seed=args.seed)
    bench_mod.rows_to_csv(rows, args.out)
    summary = bench_mod.summarize(rows)
    summary_path = args.summary or str(Path(args.out).with_name(
        Path(args.out).stem + "_summary.csv"))
    bench_mod.summary_to_csv(summary, summary_path)
    msg = f"bench table1: {len(rows)} rows -> {args.out}, summary -> {summary_path}"
    if not args.no_fig:
        msg += f" (+ {plots.plot_table1(summary, _fig_path(args, args.out))})"
    print(msg)
    return 0


def _cmd_bench_sweep(args) -> int:
    grid = None
    if args.grid:
        grid = [float(v) for v in args.grid.split(",")]
    rows = bench_mod.bench_sweep(_CLI_SWEEPS[args.name], reps=args.reps,
                                 seed=args.seed, n=args.n, p=args.p, k=args.k,
                                 grid=grid)
    bench_mod.rows_to_csv(rows, args.out)
    msg = f"bench sweep {args.name}: {len(rows)} rows -> {args.out}"
    if not args.no_fig:
        msg += f" (+ {plots.plot_sweep(rows, _fig_path(args, args.out), title=args.name)})"
    print(msg)
    return 0


def _cmd_ari(args) -> int:
    value = adjusted_rand_index(_read_labels(args.a), _read_labels(args.b))
    print(f"{value:.6f}")
    return 0


class UsageError(Exception):
    pass


_COMMANDS = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "spectral": _cmd_spectral,
    "cv": _cmd_cv,
    "ari": _cmd_ari,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bench":
            handler = {"table1": _cmd_bench_table1, "sweep": _cmd_bench_sweep}[args.bench_command]
        else:
            handler = _COMMANDS[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, np.linalg.LinAlgError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
