"""Command line interface: ``benders-ttf {validate,gen,solve,bench}``.

Exit codes: 0 success, 2 usage error, 3 unreadable or invalid instance,
4 LP numerical failure, 5 other solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .lp_core import NumericalError
from .model import (InstanceFormatError, SolverConfig, generate_instance, instance_from_dict,
                    load_instance, save_instance, validate_instance)
from .oracle import OracleSizeError
from .pipeline import (SOLVERS, solve_instance, write_bench_csv,
                       write_histogram_csv)

log = logging.getLogger("benders_ttf")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL, EXIT_SOLVER = 0, 2, 3, 4, 5


def _config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        lp_tolerance=args.lp_tolerance,
        bias_epsilon=args.bias_epsilon,
        time_cap_seconds=None if args.time_cap <= 0 else args.time_cap,
        max_locals_per_assignment=None if args.max_locals < 0 else args.max_locals,
        pricing_mode=args.pricing_mode,
    )


def _add_solver_args(p: argparse.ArgumentParser, default_cap: float) -> None:
    p.add_argument("--solver", choices=SOLVERS, default="bcg")
    p.add_argument("--time-cap", type=float, default=default_cap,
                   help="seconds of dual optimisation; <= 0 disables the cap")
    p.add_argument("--max-locals", type=int, default=SolverConfig.max_locals_per_assignment,
                   help="largest local set per assignment; negative means no cap")
    p.add_argument("--pricing-mode", choices=("exact_enumeration", "separable_fast"),
                   default="exact_enumeration")
    p.add_argument("--lp-tolerance", type=float, default=SolverConfig.lp_tolerance)
    p.add_argument("--bias-epsilon", type=float, default=None)


def cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.instance)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        inst = instance_from_dict(data)
    except (OSError, json.JSONDecodeError, InstanceFormatError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate_instance(inst)
    for v in violations:
        print(v, file=sys.stderr)
    if violations:
        return EXIT_INVALID
    print(f"{path}: ok ({inst.n_detections} detections, {inst.n_parts} parts)")
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    children = np.random.SeedSequence(args.seed).spawn(args.count) if args.count > 0 else []
    for i, child in enumerate(children):
        seed = int(child.generate_state(1)[0])
        inst = generate_instance(args.parts, args.dets, args.scale, seed,
                                 name=f"gen_{args.seed}_{i:04d}")
        problems = validate_instance(inst)
        if problems:
            print(f"error: generated instance {i} is invalid: {problems}", file=sys.stderr)
            return EXIT_SOLVER
        try:
            save_instance(inst, out / f"{inst.name}.json")
        except OSError as exc:
            print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    print(f"wrote {args.count} instances to {out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        inst = load_instance(args.instance)
    except (OSError, InstanceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", ()):
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    config = _config(args)
    try:
        report = solve_instance(inst, args.solver, config)
    except NumericalError as exc:
        print(f"error: LP numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RuntimeError, OracleSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    payload = json.dumps(report.solution_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    if args.trace and report.trace is not None:
        report.trace.write_csv(args.trace)
    gap = report.normalized_gap(config.lp_tolerance)
    print(f"{inst.name}: objective {report.upper_bound:.10g} lower bound {report.lower_bound:.10g} "
          f"gap {'' if gap is None else f'{gap:.3g}'} time {report.time_s:.3f}s", file=sys.stderr)
    return EXIT_OK


def _bench_one(path: str, solver: str, config: SolverConfig) -> Optional[dict]:
    try:
        inst = load_instance(path)
    except (OSError, InstanceFormatError) as exc:
        log.warning("skipping %s: %s", path, exc)
        return None
    try:
        report = solve_instance(inst, solver, config)
    except (NumericalError, RuntimeError, OracleSizeError) as exc:
        log.warning("solver failed on %s: %s", path, exc)
        return None
    return report.bench_row(config.lp_tolerance)


def _workers(args: argparse.Namespace) -> int:
    env = os.environ.get("BENDERS_TTF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer BENDERS_TTF_THREADS=%r", env)
    return max(1, args.workers)


def cmd_bench(args: argparse.Namespace) -> int:
    paths = sorted(str(p) for p in Path(args.dir).glob("*.json"))
    config = _config(args)
    workers = _workers(args)
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_bench_one, paths, [args.solver] * len(paths), [config] * len(paths)))
    else:
        results = [_bench_one(p, args.solver, config) for p in paths]
    rows = [r for r in results if r is not None]

    csv_path = Path(args.csv) if args.csv else None
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            write_bench_csv(rows, fh)
    else:
        write_bench_csv(rows, sys.stdout)
    prefix = args.hist_prefix or (str(csv_path.with_suffix("")) if csv_path else None)
    if prefix:
        gaps = [float(r["normalized_gap"]) for r in rows if r["normalized_gap"] != ""]
        write_histogram_csv(gaps, "normalized_gap", f"{prefix}_gap_hist.csv")
        write_histogram_csv([float(r["time_s"]) for r in rows], "time_s", f"{prefix}_time_hist.csv")
    print(f"benchmarked {len(rows)} of {len(paths)} instances", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="benders-ttf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen", help="write synthetic instances")
    p.add_argument("--parts", type=int, required=True)
    p.add_argument("--dets", type=int, required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance and write the solution JSON")
    p.add_argument("instance")
    _add_solver_args(p, default_cap=300.0)
    p.add_argument("--out", help="solution file (default: stdout)")
    p.add_argument("--trace", help="bounds trace CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="solve every instance in a directory and tabulate gaps")
    p.add_argument("dir")
    _add_solver_args(p, default_cap=300.0)
    p.add_argument("--csv", help="per-instance table (default: stdout)")
    p.add_argument("--hist-prefix", help="prefix for the cumulative histogram CSVs")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "count", 0) < 0 or getattr(args, "parts", 1) < 1 or getattr(args, "dets", 1) < 1:
        parser.error("--parts and --dets must be >= 1 and --count >= 0")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
