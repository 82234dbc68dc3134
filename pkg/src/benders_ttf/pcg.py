"""Pure column generation baseline: skeletons and local assignments in one restricted LP.

    min  Gamma^T gamma + Psi^T psi
    s.t. G gamma + L psi <= 1        (lam1)
         L psi + M psi  <= 1         (lam2)
        -G gamma + M psi <= 0        (lam3)
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .bcg import BoundsTrace
from .columns import ColumnPool, LocalAssignment, Skeleton
from .lp_core import LE, LinearProgram, NumericalError, solve_primal_dual
from .model import Instance, SolverConfig
from .pricing import price_locals_for_part, price_skeleton

log = logging.getLogger(__name__)


@dataclass
class PcgSolution:
    gamma: np.ndarray
    psi: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray
    objective: float


@dataclass
class PcgResult:
    pool: ColumnPool
    solution: PcgSolution
    trace: BoundsTrace
    iterations: int
    converged: bool
    timed_out: bool

    @property
    def objective(self) -> float:
        return self.solution.objective

    @property
    def lower_bound(self) -> float:
        return self.trace.best_lower_bound


def local_matrices(inst: Instance, pool: ColumnPool) -> tuple[np.ndarray, np.ndarray, list[LocalAssignment]]:
    """Incidence matrices L (local membership) and M (global) over all pooled locals."""
    cols = list(pool.all_locals())
    L = np.zeros((inst.n_detections, len(cols)))
    M = np.zeros((inst.n_detections, len(cols)))
    for j, loc in enumerate(cols):
        L[list(loc.local_dets), j] = 1.0
        M[loc.global_det, j] = 1.0
    return L, M, cols


def joint_program(inst: Instance, pool: ColumnPool) -> tuple[LinearProgram, list[LocalAssignment]]:
    """The relaxation of the joint ILP over pooled columns; variables are [gamma, psi]."""
    n = inst.n_detections
    G = pool.skeleton_matrix(n)
    L, M, cols = local_matrices(inst, pool)
    n_g, n_l = G.shape[1], L.shape[1]
    A = np.zeros((3 * n, n_g + n_l))
    A[:n, :n_g], A[:n, n_g:] = G, L
    A[n:2 * n, n_g:] = L + M
    A[2 * n:, :n_g], A[2 * n:, n_g:] = -G, M
    b = np.concatenate([np.ones(n), np.ones(n), np.zeros(n)])
    c = np.concatenate([pool.skeleton_costs(), np.array([loc.cost for loc in cols])])
    return LinearProgram(c, A, b, (LE,) * (3 * n)), cols


def solve_restricted_pcg(inst: Instance, pool: ColumnPool, config: SolverConfig) -> PcgSolution:
    lp, _ = joint_program(inst, pool)
    sol = solve_primal_dual(lp, config)
    if sol.status != "optimal":
        raise NumericalError(f"restricted PCG LP returned {sol.status}")
    n, n_g = inst.n_detections, len(pool.skeletons)
    y = np.maximum(sol.y, 0.0)
    return PcgSolution(sol.x[:n_g].copy(), sol.x[n_g:].copy(),
                       y[:n].copy(), y[n:2 * n].copy(), y[2 * n:].copy(), sol.objective)


def run_pcg(inst: Instance, config: SolverConfig | None = None) -> PcgResult:
    config = config or SolverConfig()
    tol = config.lp_tolerance
    start = time.perf_counter()
    cap = config.time_cap_seconds
    deadline = None if cap is None else start + cap
    pool = ColumnPool.for_instance(inst)
    trace = BoundsTrace()
    converged = timed_out = False
    sol = None
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        sol = solve_restricted_pcg(inst, pool, config)
        delta = sol.lam1 - sol.lam3
        did_change = False
        # Lagrangian bound: keep G gamma <= 1 and M psi <= 1, dualise the rest.
        bound = -float(sol.lam1.sum() + sol.lam2.sum())
        for d in inst.major_detections:
            members, rc = price_skeleton(inst, delta, d)
            bound += min(0.0, rc)
            if rc < -tol and pool.add_skeleton(Skeleton.build(members, inst)):
                did_change = True
        for part in range(inst.n_parts):
            for g, chosen, rc in price_locals_for_part(inst, part, sol.lam1, sol.lam2, sol.lam3,
                                                       max_locals=config.max_locals_per_assignment,
                                                       mode=config.pricing_mode):
                bound += min(0.0, rc)
                if chosen and rc < -tol and pool.add_local(LocalAssignment.build(part, g, chosen, inst)):
                    did_change = True
        trace.append(it, sol.objective, bound, time.perf_counter() - start)
        if not did_change:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            timed_out = True
            log.info("pcg on %s hit the %.1fs time cap after %d iterations", inst.name, cap, it)
            break
    assert sol is not None
    return PcgResult(pool, sol, trace, it, converged, timed_out)
