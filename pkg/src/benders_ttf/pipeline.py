"""End-to-end solve (dual optimisation, then rounding) and benchmark metrics."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence, TextIO

from .bcg import BoundsTrace, run_bcg
from .model import Instance, SolverConfig
from .oracle import solve_exact
from .pcg import run_pcg
from .rounding import IntegralSolution, check_constraints, round_two_stage, solve_joint_ilp

log = logging.getLogger(__name__)

SolverName = Literal["bcg", "pcg", "oracle"]
SOLVERS: tuple[str, ...] = ("bcg", "pcg", "oracle")

BENCH_FIELDS = ("name", "n_detections", "n_parts", "solver", "ub", "lb", "normalized_gap",
                "time_s", "iters", "n_cols", "n_rows")


@dataclass
class SolveReport:
    name: str
    solver: str
    solution: IntegralSolution
    lp_objective: float
    lower_bound: float
    n_detections: int
    n_parts: int
    iterations: int = 0
    converged: bool = True
    timed_out: bool = False
    time_s: float = 0.0
    n_cols: int = 0
    n_rows: int = 0
    trace: Optional[BoundsTrace] = None
    extra: dict = field(default_factory=dict)

    @property
    def upper_bound(self) -> float:
        return self.solution.objective

    def normalized_gap(self, tol: float = 1e-7) -> Optional[float]:
        return normalized_gap(self.upper_bound, self.lower_bound, tol)

    def stats(self) -> dict:
        return {"solver": self.solver, "lp_objective": self.lp_objective, "iterations": self.iterations,
                "converged": self.converged, "timed_out": self.timed_out, "time_s": self.time_s,
                "n_cols": self.n_cols, "n_rows": self.n_rows, **self.extra}

    def solution_dict(self) -> dict:
        return self.solution.to_dict(lower_bound=self.lower_bound, stats=self.stats())

    def bench_row(self, tol: float = 1e-7) -> dict:
        gap = self.normalized_gap(tol)
        return {"name": self.name, "n_detections": self.n_detections, "n_parts": self.n_parts,
                "solver": self.solver, "ub": repr(float(self.upper_bound)), "lb": repr(float(self.lower_bound)),
                "normalized_gap": "" if gap is None else repr(float(gap)),
                "time_s": f"{self.time_s:.6f}", "iters": self.iterations,
                "n_cols": self.n_cols, "n_rows": self.n_rows}


def normalized_gap(ub: float, lb: float, tol: float = 1e-7) -> Optional[float]:
    """(ub - lb) / (-lb); undefined (None) when the lower bound is within ``tol`` of zero."""
    if abs(lb) <= tol:
        return None
    return (ub - lb) / (-lb)


def solve_instance(inst: Instance, solver: str = "bcg", config: SolverConfig | None = None) -> SolveReport:
    config = config or SolverConfig()
    start = time.perf_counter()
    common = dict(name=inst.name, solver=solver, n_detections=inst.n_detections, n_parts=inst.n_parts)
    if solver == "bcg":
        res = run_bcg(inst, config)
        rounded = round_two_stage(inst, res.pool, res.rows, config)
        report = SolveReport(solution=rounded.solution, lp_objective=res.objective, lower_bound=res.lower_bound,
                             iterations=res.iterations, converged=res.converged, timed_out=res.timed_out,
                             n_cols=len(res.pool.skeletons) + res.pool.n_locals, n_rows=res.n_rows,
                             trace=res.trace, extra={"master_ilp_objective": rounded.master_objective},
                             **common)
    elif solver == "pcg":
        res = run_pcg(inst, config)
        solution = solve_joint_ilp(inst, res.pool, config)
        report = SolveReport(solution=solution, lp_objective=res.objective, lower_bound=res.lower_bound,
                             iterations=res.iterations, converged=res.converged, timed_out=res.timed_out,
                             n_cols=len(res.pool.skeletons) + res.pool.n_locals, n_rows=0,
                             trace=res.trace, **common)
    elif solver == "oracle":
        solution = solve_exact(inst, config.max_locals_per_assignment)
        report = SolveReport(solution=solution, lp_objective=solution.objective,
                             lower_bound=solution.objective, **common)
    else:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    flat_locals = [la for part in report.solution.chosen_locals for la in part]
    problems = check_constraints(inst, report.solution.chosen_skeletons, flat_locals)
    if problems:
        raise RuntimeError(f"{inst.name}: emitted solution violates constraints: {problems}")
    report.time_s = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# Benchmark tables
# ---------------------------------------------------------------------------

def write_bench_csv(rows: Iterable[dict], out: TextIO) -> None:
    w = csv.DictWriter(out, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def cumulative_histogram(values: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF: for each distinct value, the fraction of entries <= it."""
    vals = sorted(v for v in values if v is not None and math.isfinite(v))
    n = len(vals)
    out: list[tuple[float, float]] = []
    for i, v in enumerate(vals):
        if i + 1 < n and vals[i + 1] == v:
            continue
        out.append((v, (i + 1) / n))
    return out


def write_histogram_csv(values: Sequence[float], column: str, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([column, "fraction"])
        for v, frac in cumulative_histogram(values):
            w.writerow([repr(float(v)), repr(float(frac))])
