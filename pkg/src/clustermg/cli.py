"""Command-line entry point: ``clustermg <subcommand> ...``.

Exit codes: 0 success, 1 solver breakdown or failed coarse solve, 2 invalid
arguments or configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .analysis import CSV_COLUMNS, compare_methods, effective_spectral_radius, random_ideal_dataset
from .clustering import DISTANCES, ClusterAssignment, cluster, cluster_stats
from .coarsening import VARIANTS, build_prolongation
from .config import ConfigError, load_config
from .hierarchy import METHODS, CoarseSolveError, LevelSpec, solve_system
from .io import (RhsSpec, read_assignment_csv, read_matrix_market, sample_vector, write_assignment_csv,
                 write_csv, write_matrix_market)
from .krylov import BreakdownError, SolverConfig

DATASETS = {
    "lpsc105": ("105 x 163, 340 nnz", "https://sparse.tamu.edu/LPnetlib/lp_sc105"),
    "trek10": ("104 x 478, 8612 nnz", "https://sparse.tamu.edu (search: trek10)"),
    "CNAE": ("1080 x 856, 7233 nnz", "https://archive.ics.uci.edu/dataset/233/cnae+9"),
    "micromass": ("360 x 1300, 48713 nnz", "https://archive.ics.uci.edu (search: micromass)"),
    "DrivFace": ("606 x 6400, dense", "https://archive.ics.uci.edu (search: DrivFace)"),
    "arcene": ("100 x 10000, 540941 nnz", "https://archive.ics.uci.edu (search: arcene)"),
}


def _level_from_args(args, n_clusters=None) -> LevelSpec:
    return LevelSpec(clustering=args.clustering,
                     n_clusters=n_clusters if n_clusters is not None else args.size,
                     tolerance=args.tolerance, distance=args.distance, seed=args.seed,
                     interpolation=args.interp, n_interp=args.n_interp)


def _add_cluster_args(p, sizes=False):
    p.add_argument("--clustering", default="lf", choices=["lf", "km", "re"])
    if sizes:
        p.add_argument("--levels", default=None,
                       help="comma-separated coarse sizes, e.g. 150,120 (multilevel)")
    p.add_argument("--size", type=int, default=None, help="target number of clusters F_C")
    p.add_argument("--tolerance", type=float, default=None, help="leader-follower tolerance")
    p.add_argument("--distance", default="euclidean", choices=DISTANCES)
    p.add_argument("--interp", default="adjusted_average", choices=VARIANTS)
    p.add_argument("--n-interp", type=int, default=1)
    p.add_argument("--assignment", default=None, help="assignment CSV to use instead of clustering")


def _assignment_or_cluster(args, X):
    if getattr(args, "assignment", None):
        m = read_assignment_csv(args.assignment)
        # the first member of each cluster serves as its prototype
        _, first = np.unique(m, return_index=True)
        return ClusterAssignment(m, prototype_index=first, method="file")
    if args.size is None and args.tolerance is None:
        raise ValueError("give --size or --tolerance (or --assignment)")
    return cluster(X, args.clustering, n_clusters=args.size, tolerance=args.tolerance,
                   distance=args.distance, seed=args.seed)


def cmd_solve(args):
    X = read_matrix_market(args.matrix)
    b = sample_vector(X.n_samples, RhsSpec(args.rhs_seed))
    config = SolverConfig(tol=args.tol, max_iters=args.max_iters, m=args.m, seed=args.seed)
    specs = None
    if args.method not in ("cg", "jacobi_cg"):
        if args.levels:
            sizes = [int(s) for s in args.levels.split(",") if s.strip()]
            specs = [_level_from_args(args, n) for n in sizes]
            specs = [LevelSpec(**{**asdict(s), "coarse_solver": "fcg", "assignment": None})
                     for s in specs[:-1]] + specs[-1:]
        else:
            a = _assignment_or_cluster(args, X)
            specs = [LevelSpec(interpolation=args.interp, n_interp=args.n_interp,
                               distance=args.distance, seed=args.seed, assignment=a,
                               clustering=args.clustering)]
    _, rep = solve_system(X, args.beta, b, args.method, config, level_specs=specs)
    out = {"matrix": str(args.matrix), "method": args.method, "beta": args.beta, "tol": args.tol,
           "iterations": rep.iterations, "converged": rep.converged,
           "final_residual": rep.final_residual, "wall_time_s": rep.wall_time,
           "inner_iterations": rep.inner_iteration_counts}
    print(json.dumps(out))
    if args.output:
        write_csv(args.output, ("iteration", "relative_residual"), enumerate(rep.residual_history))
    return 0


def cmd_cluster(args):
    X = read_matrix_market(args.matrix)
    a = _assignment_or_cluster(args, X)
    q = cluster_stats(X, a, args.distance)
    if args.output:
        write_assignment_csv(args.output, a.membership)
    print(json.dumps({"n_features": a.n_features, "F_C": a.n_clusters, "method": a.method,
                      "mean_sim": q.mean_sim, "max_sim": q.max_sim, "q75": q.q75,
                      "n_members": q.n_members}))
    return 0


def cmd_analyze(args):
    X = read_matrix_market(args.matrix)
    a = _assignment_or_cluster(args, X)
    P = build_prolongation(X, a, args.beta, args.interp, args.n_interp, distance=args.distance)
    rep = effective_spectral_radius(X, args.beta, P, args.omega)
    q = cluster_stats(X, a, args.distance)
    if args.output:
        write_csv(args.output, ("index", "magnitude"), enumerate(rep.eigenvalue_magnitudes))
    print(json.dumps({"F": rep.fine_dim, "F_C": rep.f_c, "rho_eff": rep.rho_eff,
                      "mean_sim": q.mean_sim, "max_sim": q.max_sim, "q75": q.q75}))
    return 0


def cmd_ideal(args):
    rng = np.random.default_rng(args.seed)
    ds = random_ideal_dataset(rng, args.samples, args.base, args.max_multiplicity, args.density)
    out = Path(args.output or "ideal.mtx")
    write_matrix_market(out, ds.matrix, comment=f"ideal dataset seed={args.seed}")
    write_assignment_csv(out.with_suffix(".assignment.csv"), ds.assignment.membership)
    print(json.dumps({"matrix": str(out), "assignment": str(out.with_suffix(".assignment.csv")),
                      "shape": list(ds.matrix.shape), "F_C": ds.assignment.n_clusters}))
    return 0


def cmd_bench(args):
    cfg = load_config(args.config)
    X = read_matrix_market(cfg.dataset)
    b = sample_vector(X.n_samples, RhsSpec(cfg.rhs_seed))
    seed = cfg.seed if args.seed is None else args.seed
    rows = compare_methods(X, b, cfg.beta_grid, cfg.tol_grid, cfg.methods, n_repeats=cfg.n_repeats,
                           max_iters=cfg.max_iters, seed=seed, dataset=cfg.name,
                           threads=args.threads)
    out = Path(args.output) if args.output else (cfg.output or Path(f"{cfg.name}_bench.csv"))
    write_csv(out, CSV_COLUMNS, (r.as_csv() for r in rows))
    echo = cfg.resolved()
    echo["seed"] = seed
    echo["threads"] = args.threads
    out.with_suffix(".json").write_text(json.dumps(echo, indent=2) + "\n", encoding="utf-8")
    for r in rows:
        print(",".join(str(v) for v in r.as_csv()))
    return 0


def cmd_datasets(args):
    for name, (shape, url) in DATASETS.items():
        print(f"{name:10s} {shape:40s} {url}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clustermg", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="seed for clustering and power iteration")
    p.add_argument("--threads", type=int, default=1, help="worker threads for benchmark cells")
    p.add_argument("--output", default=None, help="output file (meaning depends on subcommand)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one system and report iterations")
    s.add_argument("matrix")
    s.add_argument("--method", default="fcg_twolevel", choices=METHODS)
    s.add_argument("--beta", type=float, default=1e-6)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--m", type=int, default=20)
    s.add_argument("--rhs-seed", type=int, default=0)
    _add_cluster_args(s, sizes=True)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("cluster", help="cluster features, write assignment CSV and print quality stats")
    c.add_argument("matrix")
    _add_cluster_args(c)
    c.set_defaults(func=cmd_cluster)

    a = sub.add_parser("analyze", help="effective spectral radius of the two-level iteration")
    a.add_argument("matrix")
    a.add_argument("--beta", type=float, default=1e-6)
    a.add_argument("--omega", type=float, default=None)
    _add_cluster_args(a)
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("ideal", help="generate a random ideal (duplicated-column) dataset")
    i.add_argument("--samples", type=int, default=50)
    i.add_argument("--base", type=int, default=20)
    i.add_argument("--max-multiplicity", type=int, default=6)
    i.add_argument("--density", type=float, default=None)
    i.set_defaults(func=cmd_ideal)

    bn = sub.add_parser("bench", help="run a benchmark grid from a YAML config")
    bn.add_argument("config")
    bn.set_defaults(func=cmd_bench)

    d = sub.add_parser("datasets", help="print where to download the reference matrices")
    d.set_defaults(func=cmd_datasets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "bench" and args.seed is None:
        args.seed = 0
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (BreakdownError, CoarseSolveError) as exc:
        print(f"clustermg {args.command}: solver breakdown: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"clustermg {args.command}: invalid config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"clustermg {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
