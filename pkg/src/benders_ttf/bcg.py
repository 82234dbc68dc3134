"""Benders column generation over skeletons (master) and local assignments (per-part sub-problems).

The master LP is

    min  Gamma^T gamma - sum_r ell_r
    s.t. G gamma <= 1
         ell_r + gamma^T G_r^T (lam1_i - lam3_i) <= 1^T (lam1_i + lam2_i)   for every pooled row i of part r
         gamma, ell >= 0

and each sub-problem is the dual LP over (lam1, lam2, lam3) of part r given the
skeleton marginals G gamma, solved with its own column generation over local
assignments.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from .columns import ColumnPool, LocalAssignment, Skeleton
from .lp_core import GE, LE, LinearProgram, NumericalError, solve_primal_dual
from .model import Instance, SolverConfig
from .pricing import price_locals_for_part, price_skeleton

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BendersRow:
    """A dual-feasible point of one part's sub-problem, used as a master constraint.

    ``lam1``, ``lam2``, ``lam3`` are aligned with ``dets``.
    """

    part: int
    dets: tuple[int, ...]
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray

    @property
    def const_term(self) -> float:
        return -float(self.lam1.sum() + self.lam2.sum())

    @property
    def coeff(self) -> np.ndarray:
        return self.lam1 - self.lam3

    def value(self, marginals: np.ndarray) -> float:
        """Sub-problem objective this row certifies at skeleton marginals ``G gamma``."""
        return self.const_term + float(self.coeff @ np.asarray(marginals)[list(self.dets)])

    def full(self, n_detections: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = np.zeros((3, n_detections))
        idx = list(self.dets)
        out[0, idx], out[1, idx], out[2, idx] = self.lam1, self.lam2, self.lam3
        return out[0], out[1], out[2]

    def same_as(self, other: "BendersRow", tol: float) -> bool:
        return (self.part == other.part
                and abs(self.const_term - other.const_term) <= tol
                and bool(np.all(np.abs(self.coeff - other.coeff) <= tol)))

    @classmethod
    def zero(cls, inst: Instance, part: int) -> "BendersRow":
        dets = inst.dets_by_part[part]
        z = np.zeros(len(dets))
        return cls(part, dets, z, z.copy(), z.copy())


@dataclass
class MasterSolution:
    gamma: np.ndarray
    ell: np.ndarray
    mu0: np.ndarray
    mu_rows: list[np.ndarray]
    objective: float
    marginals: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    objective: float
    lower_bound: float
    time_s: float


@dataclass
class BoundsTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, it: int, objective: float, lower_bound: float, time_s: float) -> None:
        if self.records and time_s < self.records[-1].time_s:
            time_s = self.records[-1].time_s
        self.records.append(TraceRecord(it, float(objective), float(lower_bound), float(time_s)))

    @property
    def best_lower_bound(self) -> float:
        return max((r.lower_bound for r in self.records), default=float("-inf"))

    def write_csv(self, out: TextIO | str | Path) -> None:
        if isinstance(out, (str, Path)):
            with open(out, "w", newline="", encoding="utf-8") as fh:
                self.write_csv(fh)
            return
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["iter", "objective", "lower_bound", "time_s"])
        for r in self.records:
            w.writerow([r.iter, repr(r.objective), repr(r.lower_bound), f"{r.time_s:.6f}"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class SubproblemRecord:
    outer_iter: int
    part: int
    objective: float
    inner_lower_bounds: tuple[float, ...]


@dataclass
class BcgResult:
    pool: ColumnPool
    rows: list[list[BendersRow]]
    master: MasterSolution
    trace: BoundsTrace
    iterations: int
    converged: bool
    timed_out: bool
    subproblems: list[SubproblemRecord] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.master.objective

    @property
    def lower_bound(self) -> float:
        return self.trace.best_lower_bound

    @property
    def n_rows(self) -> int:
        return sum(len(r) for r in self.rows)


# ---------------------------------------------------------------------------
# Sub-problems
# ---------------------------------------------------------------------------

def _sub_lp(inst: Instance, part: int, marg: np.ndarray, pool: ColumnPool, eps: float) -> LinearProgram:
    dets = inst.dets_by_part[part]
    n = len(dets)
    pos = {d: i for i, d in enumerate(dets)}
    c = np.concatenate([1.0 - marg + eps, np.ones(n), marg + eps])
    cols = pool.locals_by_part[part]
    A = np.zeros((len(cols), 3 * n))
    b = np.empty(len(cols))
    for k, loc in enumerate(cols):
        for s in loc.local_dets:
            A[k, pos[s]] = 1.0
            A[k, n + pos[s]] = 1.0
        g = pos[loc.global_det]
        A[k, n + g] += 1.0
        A[k, 2 * n + g] = 1.0
        b[k] = -loc.cost
    return LinearProgram(c, A, b, (GE,) * len(cols))


def _marginals(inst: Instance, part: int, gamma_marginals) -> np.ndarray:
    m = np.asarray(gamma_marginals, dtype=float)
    if m.shape != (inst.n_detections,):
        raise ValueError(f"expected {inst.n_detections} marginals, got {m.shape}")
    return np.clip(m[list(inst.dets_by_part[part])], 0.0, 1.0)


def _unbiased_objective(marg: np.ndarray, lam1: np.ndarray, lam2: np.ndarray, lam3: np.ndarray) -> float:
    return float(-(1.0 - marg) @ lam1 - lam2.sum() - marg @ lam3)


def solve_subproblem_dual(inst: Instance, part: int, gamma_marginals, pool: ColumnPool,
                          config: SolverConfig,
                          lower_bounds: Optional[list[float]] = None) -> tuple[BendersRow, float]:
    """Best Benders row of ``part`` at the given skeleton marginals.

    Local assignments found violated during the inner column generation are
    added to ``pool``. The returned objective excludes the bias and is <= 0.
    If ``lower_bounds`` is given, the anytime bound of every inner iterate is
    appended to it.
    """
    dets = inst.dets_by_part[part]
    marg = _marginals(inst, part, gamma_marginals)
    n = len(dets)
    if n == 0:
        return BendersRow.zero(inst, part), 0.0
    eps = config.bias_for(inst)
    tol = config.lp_tolerance
    for _ in range(config.max_inner_iterations):
        lp = _sub_lp(inst, part, marg, pool, eps)
        sol = solve_primal_dual(lp, config)
        if sol.status != "optimal":
            raise NumericalError(f"sub-problem LP of part {part} returned {sol.status}")
        lam = np.maximum(sol.x, 0.0)
        lam1, lam2, lam3 = lam[:n], lam[n:2 * n], lam[2 * n:]
        objective = _unbiased_objective(marg, lam1, lam2, lam3)
        full = np.zeros((3, inst.n_detections))
        full[:, list(dets)] = lam.reshape(3, n)
        priced = price_locals_for_part(inst, part, full[0], full[1], full[2],
                                       max_locals=config.max_locals_per_assignment,
                                       mode=config.pricing_mode)
        if lower_bounds is not None:
            lower_bounds.append(objective + sum(min(0.0, rc) for _, _, rc in priced))
        added = False
        for g, chosen, rc in priced:
            if chosen and rc < -tol:
                added |= pool.add_local(LocalAssignment.build(part, g, chosen, inst))
        if not added:
            return BendersRow(part, dets, lam1.copy(), lam2.copy(), lam3.copy()), objective
    raise RuntimeError(f"sub-problem of part {part} did not converge in "
                       f"{config.max_inner_iterations} iterations")


def sub_lower_bound(inst: Instance, part: int, gamma_marginals, lam1, lam2, lam3,
                    config: SolverConfig | None = None) -> float:
    """Anytime lower bound on a sub-problem's optimum from any non-negative multipliers.

    Arrays are indexed by detection id. Each global detection contributes its
    lowest local-assignment reduced cost, clamped at zero.
    """
    config = config or SolverConfig()
    lam1, lam2, lam3 = (np.asarray(v, dtype=float) for v in (lam1, lam2, lam3))
    if min(lam1.min(initial=0), lam2.min(initial=0), lam3.min(initial=0)) < 0:
        raise ValueError("multipliers must be non-negative")
    idx = list(inst.dets_by_part[part])
    marg = _marginals(inst, part, gamma_marginals)
    base = _unbiased_objective(marg, lam1[idx], lam2[idx], lam3[idx])
    priced = price_locals_for_part(inst, part, lam1, lam2, lam3,
                                   max_locals=config.max_locals_per_assignment,
                                   mode=config.pricing_mode)
    return base + sum(min(0.0, rc) for _, _, rc in priced)


def init_rows(inst: Instance, config: SolverConfig, pool: ColumnPool | None = None,
              log_to: list[SubproblemRecord] | None = None) -> list[BendersRow]:
    """One row per part: the sub-problem optimum with no skeleton selected."""
    pool = pool if pool is not None else ColumnPool.for_instance(inst)
    zero = np.zeros(inst.n_detections)
    out = []
    for r in range(inst.n_parts):
        bounds: list[float] = []
        row, obj = solve_subproblem_dual(inst, r, zero, pool, config, lower_bounds=bounds)
        if log_to is not None:
            log_to.append(SubproblemRecord(0, r, obj, tuple(bounds)))
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# Master
# ---------------------------------------------------------------------------

def master_program(inst: Instance, pool: ColumnPool, rows: Sequence[Sequence[BendersRow]]) -> LinearProgram:
    """Restricted master LP; variables are [gamma (pooled skeletons), ell (parts)]."""
    n_det, n_parts = inst.n_detections, inst.n_parts
    if len(rows) != n_parts or any(len(r) == 0 for r in rows):
        missing = [p for p in range(n_parts) if p >= len(rows) or not rows[p]]
        raise ValueError(f"parts {missing} have no Benders row; the master would be unbounded")
    G = pool.skeleton_matrix(n_det)
    n_g = G.shape[1]
    c = np.concatenate([pool.skeleton_costs(), -np.ones(n_parts)])
    n_rows = sum(len(r) for r in rows)
    A = np.zeros((n_det + n_rows, n_g + n_parts))
    b = np.zeros(n_det + n_rows)
    A[:n_det, :n_g] = G
    b[:n_det] = 1.0
    k = n_det
    for part, part_rows in enumerate(rows):
        Gr = G[list(inst.dets_by_part[part]), :]
        for row in part_rows:
            A[k, :n_g] = row.coeff @ Gr
            A[k, n_g + part] = 1.0
            b[k] = -row.const_term
            k += 1
    return LinearProgram(c, A, b, (LE,) * len(b))


def solve_master_restricted(inst: Instance, pool: ColumnPool, rows: Sequence[Sequence[BendersRow]],
                            config: SolverConfig) -> MasterSolution:
    lp = master_program(inst, pool, rows)
    n_det, n_g = inst.n_detections, len(pool.skeletons)
    sol = solve_primal_dual(lp, config)
    if sol.status != "optimal":
        raise NumericalError(f"restricted master returned {sol.status}; missing initial rows?")
    gamma = sol.x[:n_g].copy()
    ell = sol.x[n_g:].copy()
    y = np.maximum(sol.y, 0.0)
    mu_rows = []
    k = n_det
    for part_rows in rows:
        mu_rows.append(y[k:k + len(part_rows)].copy())
        k += len(part_rows)
    G = lp.A[:n_det, :n_g]
    return MasterSolution(gamma, ell, y[:n_det].copy(), mu_rows, sol.objective,
                          np.clip(G @ gamma, 0.0, 1.0))


def skeleton_potentials(inst: Instance, rows: Sequence[Sequence[BendersRow]], mu0, mu_rows) -> np.ndarray:
    """delta_d = mu0_d + sum_i mu_i (lam1_i - lam3_i)_d over the rows of d's part."""
    delta = np.array(mu0, dtype=float, copy=True)
    for part_rows, mus in zip(rows, mu_rows):
        for row, mu in zip(part_rows, mus):
            if mu != 0.0:
                delta[list(row.dets)] += mu * row.coeff
    return delta


def _check_mu(rows, mu0, mu_rows, tol: float) -> None:
    if np.min(mu0, initial=0.0) < -tol:
        raise ValueError("mu0 must be non-negative")
    for part, (part_rows, mus) in enumerate(zip(rows, mu_rows)):
        mus = np.asarray(mus, dtype=float)
        if len(mus) != len(part_rows):
            raise ValueError(f"part {part}: {len(mus)} multipliers for {len(part_rows)} rows")
        if np.min(mus, initial=0.0) < -tol:
            raise ValueError(f"part {part}: row multipliers must be non-negative")
        if mus.sum() < 1.0 - tol:
            raise ValueError(f"part {part}: row multipliers sum to {mus.sum():.6g} < 1")


def _bound_from_prices(rows, mu0, mu_rows, priced: Sequence[tuple[tuple[int, ...], float]]) -> float:
    total = -float(np.sum(mu0))
    for part_rows, mus in zip(rows, mu_rows):
        for row, mu in zip(part_rows, mus):
            total += float(mu) * row.const_term
    return total + sum(min(0.0, rc) for _, rc in priced)


def master_lower_bound(inst: Instance, rows: Sequence[Sequence[BendersRow]], mu0, mu_rows,
                       config: SolverConfig | None = None) -> float:
    """Anytime lower bound on the full LP relaxation from any dual-feasible multipliers.

    Requires ``mu >= 0`` and, for every part, row multipliers summing to at
    least one. Each major detection contributes its best skeleton reduced
    cost, clamped at zero.
    """
    tol = (config or SolverConfig()).lp_tolerance
    _check_mu(rows, mu0, mu_rows, tol)
    delta = skeleton_potentials(inst, rows, mu0, mu_rows)
    priced = [price_skeleton(inst, delta, d) for d in inst.major_detections]
    return _bound_from_prices(rows, mu0, mu_rows, priced)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def run_bcg(inst: Instance, config: SolverConfig | None = None) -> BcgResult:
    config = config or SolverConfig()
    tol = config.lp_tolerance
    start = time.perf_counter()
    cap = config.time_cap_seconds
    deadline = None if cap is None else start + cap

    pool = ColumnPool.for_instance(inst)
    subs: list[SubproblemRecord] = []
    rows = [[row] for row in init_rows(inst, config, pool, subs)]
    trace = BoundsTrace()
    converged = timed_out = False
    master = None
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        master = solve_master_restricted(inst, pool, rows, config)
        delta = skeleton_potentials(inst, rows, master.mu0, master.mu_rows)
        priced = [price_skeleton(inst, delta, d) for d in inst.major_detections]
        trace.append(it, master.objective, _bound_from_prices(rows, master.mu0, master.mu_rows, priced),
                     time.perf_counter() - start)

        did_change = False
        for members, rc in priced:
            if rc < -tol and pool.add_skeleton(Skeleton.build(members, inst)):
                did_change = True

        for part in range(inst.n_parts):
            if deadline is not None and time.perf_counter() > deadline:
                break
            n_before = len(pool.locals_by_part[part])
            bounds: list[float] = []
            row, obj = solve_subproblem_dual(inst, part, master.marginals, pool, config, lower_bounds=bounds)
            subs.append(SubproblemRecord(it, part, obj, tuple(bounds)))
            if len(pool.locals_by_part[part]) > n_before:
                did_change = True
            # The master under-estimates this part's cost at the current gamma.
            if obj > -master.ell[part] + tol * (1.0 + abs(obj)):
                did_change = True
            if not any(row.same_as(old, tol) for old in rows[part]):
                rows[part].append(row)

        if not did_change:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            timed_out = True
            log.info("bcg on %s hit the %.1fs time cap after %d iterations", inst.name, cap, it)
            break
    assert master is not None
    return BcgResult(pool, rows, master, trace, it, converged, timed_out, subs)
