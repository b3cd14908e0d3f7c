"""Command-line front end: design tables, closed-loop simulation and the
Monte Carlo experiment pipelines.

Every successful command writes its artifacts plus a manifest with checksums
into the output directory.  The default seed is fixed (reproducibility over
novelty); pass --seed to override.  Exit status is zero iff every requested
verdict passed and no error occurred.
"""

from __future__ import annotations

import argparse
import hashlib
import pickle
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical_config, load_config
from .design import build_design
from .errors import UnsupportedExperiment, WidebandLqgError
from .experiments import mc_cost, run_experiment
from .artifacts import ManifestWriter, export_design, write_costs, write_trace
from .noise import make_noise
from .problem import PRESET_NAMES, scenario_preset
from .simulate import Policy, accumulate_cost, simulate_closed_loop

DEFAULT_SEED = 1729  # documented default; override with --seed


def _add_common(parser: argparse.ArgumentParser) -> None:
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESET_NAMES, help="named scenario")
    src.add_argument("--config", type=Path, help="JSON problem configuration")
    parser.add_argument("--N", type=int, default=None, help="time steps override")
    parser.add_argument("--rho", type=int, default=None, help="master-grid refinement")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")


def _resolve(args):
    if args.preset:
        spec, grid = scenario_preset(args.preset, N=args.N, rho=args.rho or 8)
        source = f"preset:{args.preset}"
    else:
        spec, grid = load_config(args.config)
        source = f"config:{Path(args.config).resolve()}"
        if args.N or args.rho:
            from .problem import make_grid

            grid = make_grid(spec, args.N or grid.N, args.rho or grid.rho)
    return spec, grid, source


def _design_cached(spec, grid, source: str, outdir: Path):
    """Auto-build design tables, cached on disk by the config hash.

    The cache file is an internal artifact (pickle of the table bundle); it is
    keyed by the problem source, grid and package version and rebuilt whenever
    the key changes.
    """
    key = hashlib.sha256(
        (canonical_config(source, grid.N, grid.rho) + __version__).encode()
    ).hexdigest()[:16]
    cache_dir = Path(outdir) / ".design_cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache_file = cache_dir / f"{key}.pkl"
    if cache_file.exists():
        try:
            with open(cache_file, "rb") as fh:
                return pickle.load(fh)
        except Exception:
            cache_file.unlink(missing_ok=True)
    design = build_design(spec, grid)
    with open(cache_file, "wb") as fh:
        pickle.dump(design, fh)
    return design


def _snap_report(grid) -> str:
    line = (f"grid: N={grid.N} dt={grid.dt:.6g} L={grid.L} rho={grid.rho} "
            f"eps={grid.eps:.6g}")
    if grid.snapped:
        line += f" (snapped from requested eps={grid.eps_requested:.6g})"
    return line


def cmd_design(args) -> int:
    spec, grid, source = _resolve(args)
    manifest = ManifestWriter(args.out, "design")
    print(_snap_report(grid))
    design = _design_cached(spec, grid, source, args.out)
    export_design(manifest, design, dump_kernels=args.dump_kernels)
    manifest.write_json("grid.json", {
        "N": grid.N, "dt": grid.dt, "L": grid.L, "rho": grid.rho,
        "eps": grid.eps, "eps_requested": grid.eps_requested,
        "snapped": grid.snapped, "source": source,
    })
    manifest.finalize()
    print(f"design tables written to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    spec, grid, source = _resolve(args)
    policy = Policy.parse(args.policy)
    print(_snap_report(grid))
    design = _design_cached(spec, grid, source, args.out)
    noise = make_noise(spec, grid, args.M, args.seed)
    traj = simulate_closed_loop(spec, grid, design, noise, policy)
    costs = accumulate_cost(traj, spec, grid)
    manifest = ManifestWriter(args.out, "simulate")
    summary = {
        "policy": policy.name, "M": args.M, "seed": args.seed,
        "cost_mean": float(costs.mean()),
        "cost_stderr": float(costs.std(ddof=1) / np.sqrt(args.M)) if args.M > 1 else None,
        "source": source,
        "grid": {"N": grid.N, "dt": grid.dt, "L": grid.L, "rho": grid.rho},
    }
    manifest.write_json("cost_summary.json", summary)
    if args.costs_csv:
        manifest.register(write_costs(manifest.path("costs.csv"), costs))
    if args.trace is not None:
        if not 0 <= args.trace < args.M:
            print(f"error: --trace {args.trace} outside 0..{args.M - 1}",
                  file=sys.stderr)
            return 2
        manifest.register(write_trace(manifest.path(f"trace_{args.trace}.csv"),
                                      traj, args.trace))
    manifest.finalize()
    print(f"cost mean {summary['cost_mean']:.6g}"
          + (f" +- {summary['cost_stderr']:.3g}" if summary["cost_stderr"] else "")
          + f"  ({policy.name}, M={args.M}, seed={args.seed})")
    return 0


def _print_report(rep) -> None:
    print(f"experiment {rep.experiment}: seed={rep.seed} M={rep.M}")
    width = max((len(k) for k in rep.verdicts), default=10)
    for name, v in sorted(rep.verdicts.items()):
        status = "PASS" if v["pass"] else "FAIL"
        print(f"  {name:<{width}}  {status}  value={v['value']:.6g} "
              f"threshold={v['threshold']:.6g}")


def cmd_experiment(args) -> int:
    spec, grid, source = _resolve(args)
    print(_snap_report(grid))
    try:
        reports = run_experiment(args.which, spec, grid, args.M, args.seed)
    except UnsupportedExperiment as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest = ManifestWriter(args.out, "experiment")
    all_pass = True
    for rep in reports:
        rep.meta["source"] = source
        manifest.write_json(f"report_{rep.experiment}.json", rep.to_dict())
        _print_report(rep)
        all_pass = all_pass and rep.passed
    manifest.finalize()
    print("overall:", "PASS" if all_pass else "FAIL")
    return 0 if all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wideband-lqg",
        description=__doc__.splitlines()[0],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="solve and export the design tables")
    _add_common(p_design)
    p_design.add_argument("--dump-kernels", action="store_true",
                          help="export every derived kernel table")
    p_design.set_defaults(fn=cmd_design)

    p_sim = sub.add_parser("simulate", help="run closed-loop realizations")
    _add_common(p_sim)
    p_sim.add_argument("--policy", default="optimal",
                       help="optimal | gain-scaled:G | drop-alpha | zero")
    p_sim.add_argument("--M", type=int, default=100, help="path count")
    p_sim.add_argument("--trace", type=int, default=None,
                       help="export a per-step CSV for this path index")
    p_sim.add_argument("--costs-csv", action="store_true",
                       help="export per-path costs")
    p_sim.set_defaults(fn=cmd_simulate)

    p_exp = sub.add_parser("experiment", help="run Monte Carlo verification")
    p_exp.add_argument("which", choices=["optimality", "invariance", "suites", "all"])
    _add_common(p_exp)
    p_exp.add_argument("--M", type=int, default=10000, help="path count")
    p_exp.add_argument("--workers", type=int, default=1,
                       help="accepted for compatibility; results are "
                            "worker-count independent by construction")
    p_exp.set_defaults(fn=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WidebandLqgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
