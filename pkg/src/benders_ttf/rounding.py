"""Integral solutions: branch-and-bound over pooled columns and pose extraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bcg import BendersRow, master_program, solve_subproblem_dual
from .columns import ColumnPool, LocalAssignment, Skeleton
from .lp_core import LE, LinearProgram, solve_primal_dual
from .model import Instance, SolverConfig
from .pcg import joint_program

_INT_TOL = 1e-6


class ConstraintViolation(RuntimeError):
    """An integral selection breaks one of the validity constraints."""


def check_constraints(inst: Instance, skeletons: Sequence[Skeleton],
                      locals_: Sequence[LocalAssignment]) -> list[str]:
    """Violations of G g + L p <= 1, L p + M p <= 1 and M p <= G g for a 0/1 selection."""
    n = inst.n_detections
    g = np.zeros(n, dtype=int)
    loc = np.zeros(n, dtype=int)
    glob = np.zeros(n, dtype=int)
    for s in skeletons:
        g[list(s.members)] += 1
    for la in locals_:
        loc[list(la.local_dets)] += 1
        glob[la.global_det] += 1
    out = []
    for d in range(n):
        if g[d] + loc[d] > 1:
            out.append(f"detection {d}: skeleton+local use {g[d] + loc[d]} > 1")
        if loc[d] + glob[d] > 1:
            out.append(f"detection {d}: local+global use {loc[d] + glob[d]} > 1")
        if glob[d] > g[d]:
            out.append(f"detection {d}: global of a local assignment but in no chosen skeleton")
    return out


@dataclass
class Pose:
    skeleton: Skeleton
    locals: list[LocalAssignment]

    def to_dict(self) -> dict:
        return {"skeleton": list(self.skeleton.members),
                "locals": [{"global": la.global_det, "locals": list(la.local_dets)} for la in self.locals]}


@dataclass
class IntegralSolution:
    chosen_skeletons: list[Skeleton]
    chosen_locals: list[list[LocalAssignment]]
    objective: float
    is_feasible: bool
    poses: list[Pose] = field(default_factory=list)

    @classmethod
    def from_columns(cls, inst: Instance, skeletons: Sequence[Skeleton],
                     locals_: Sequence[LocalAssignment]) -> "IntegralSolution":
        violations = check_constraints(inst, skeletons, locals_)
        if violations:
            raise ConstraintViolation("; ".join(violations))
        by_part: list[list[LocalAssignment]] = [[] for _ in range(inst.n_parts)]
        for la in locals_:
            by_part[la.part].append(la)
        owner = {d: k for k, s in enumerate(skeletons) for d in s.members}
        poses = [Pose(s, []) for s in skeletons]
        for la in sorted(locals_, key=lambda la: (la.part, la.global_det)):
            poses[owner[la.global_det]].locals.append(la)
        objective = sum(s.cost for s in skeletons) + sum(la.cost for la in locals_)
        return cls(list(skeletons), by_part, float(objective), True, poses)

    def to_dict(self, lower_bound: float | None = None, stats: dict | None = None) -> dict:
        return {"poses": [p.to_dict() for p in self.poses],
                "objective": self.objective,
                "lower_bound": lower_bound,
                "stats": stats or {}}


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------

@dataclass
class BnbResult:
    x: Optional[np.ndarray]
    objective: float
    nodes: int


def _node_lp(lp: LinearProgram, fixed: dict[int, int]) -> tuple[LinearProgram, np.ndarray, float]:
    n = lp.c.size
    free = np.array([j not in fixed for j in range(n)], dtype=bool)
    ones = [j for j, v in fixed.items() if v == 1]
    b = lp.b - lp.A[:, ones].sum(axis=1) if ones else lp.b
    const = float(lp.c[ones].sum()) if ones else 0.0
    return LinearProgram(lp.c[free], lp.A[:, free], b, lp.sense), free, const


def branch_and_bound(lp: LinearProgram, binary: np.ndarray, config: SolverConfig,
                     incumbent: tuple[np.ndarray, float] | None = None,
                     max_nodes: int = 200_000) -> BnbResult:
    """Depth-first branch and bound over the 0/1 variables flagged in ``binary``.

    Branches on the most fractional variable, exploring the ``= 1`` side first.
    The constraints must already imply ``x <= 1`` for every binary variable.
    Nodes whose LP bound is within ``lp_tolerance`` of the incumbent are pruned.
    """
    tol = config.lp_tolerance
    binary = np.asarray(binary, dtype=bool)
    best_x, best_obj = (incumbent[0].copy(), float(incumbent[1])) if incumbent else (None, np.inf)
    stack: list[dict[int, int]] = [{}]
    nodes = 0
    while stack:
        fixed = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise RuntimeError(f"branch and bound exceeded {max_nodes} nodes")
        sub, free, const = _node_lp(lp, fixed)
        sol = solve_primal_dual(sub, config)
        if sol.status != "optimal":
            continue
        bound = sol.objective + const
        if bound >= best_obj - tol:
            continue
        x = np.zeros(lp.c.size)
        x[free] = sol.x
        for j, v in fixed.items():
            x[j] = v
        frac = np.where(binary & free, np.minimum(x - np.floor(x), np.ceil(x) - x), 0.0)
        j = int(np.argmax(frac))
        if frac[j] > _INT_TOL:
            stack.append({**fixed, j: 0})
            stack.append({**fixed, j: 1})
            continue
        # Integral in the binaries: fix them exactly and re-solve the continuous rest.
        final = {**fixed, **{int(k): int(round(x[k])) for k in np.flatnonzero(binary & free)}}
        sub, free, const = _node_lp(lp, final)
        sol = solve_primal_dual(sub, config)
        if sol.status != "optimal":
            continue
        x = np.zeros(lp.c.size)
        x[free] = sol.x
        for k, v in final.items():
            x[k] = v
        obj = float(lp.c @ x)
        if obj < best_obj - tol:
            best_x, best_obj = x, obj
    return BnbResult(best_x, float(best_obj), nodes)


# ---------------------------------------------------------------------------
# Two-stage rounding: master ILP, then one ILP per part
# ---------------------------------------------------------------------------

@dataclass
class MasterIlpResult:
    gamma: np.ndarray
    ell: np.ndarray
    objective: float
    nodes: int


def solve_master_ilp(inst: Instance, pool: ColumnPool, rows: Sequence[Sequence[BendersRow]],
                     config: SolverConfig) -> MasterIlpResult:
    """Binary skeleton selection for the restricted master with the pooled rows kept."""
    lp = master_program(inst, pool, rows)
    n_g = len(pool.skeletons)
    binary = np.zeros(lp.c.size, dtype=bool)
    binary[:n_g] = True
    x0 = np.zeros(lp.c.size)
    # With gamma = 0 each ell_r is capped by its tightest row.
    x0[n_g:] = [min(-row.const_term for row in part_rows) for part_rows in rows]
    res = branch_and_bound(lp, binary, config, incumbent=(x0, float(lp.c @ x0)))
    x = res.x
    return MasterIlpResult(np.round(x[:n_g]), x[n_g:], res.objective, res.nodes)


def solve_sub_ilp(inst: Instance, part: int, chosen_skeletons: Sequence[Skeleton], pool: ColumnPool,
                  config: SolverConfig) -> tuple[list[LocalAssignment], float]:
    """Best 0/1 selection of pooled local assignments of ``part`` given chosen skeletons."""
    cols = pool.locals_by_part[part]
    if not cols:
        return [], 0.0
    dets = inst.dets_by_part[part]
    pos = {d: i for i, d in enumerate(dets)}
    in_skel = np.zeros(len(dets))
    for s in chosen_skeletons:
        for d in s.members:
            if d in pos:
                in_skel[pos[d]] += 1.0
    n = len(dets)
    A = np.zeros((3 * n, len(cols)))
    for j, la in enumerate(cols):
        for d in la.local_dets:
            A[pos[d], j] = 1.0
            A[n + pos[d], j] = 1.0
        A[n + pos[la.global_det], j] += 1.0
        A[2 * n + pos[la.global_det], j] = 1.0
    b = np.concatenate([1.0 - in_skel, np.ones(n), in_skel])
    c = np.array([la.cost for la in cols])
    lp = LinearProgram(c, A, b, (LE,) * (3 * n))
    res = branch_and_bound(lp, np.ones(len(cols), dtype=bool), config,
                           incumbent=(np.zeros(len(cols)), 0.0))
    chosen = [cols[j] for j in np.flatnonzero(np.round(res.x) > 0.5)]
    return chosen, float(sum(la.cost for la in chosen))


def extract_poses(inst: Instance, pool: ColumnPool, gamma: np.ndarray,
                  psi_by_part: Sequence[Sequence[LocalAssignment]]) -> IntegralSolution:
    skeletons = [pool.skeletons[j] for j in np.flatnonzero(np.asarray(gamma) > 0.5)]
    locals_ = [la for part in psi_by_part for la in part]
    return IntegralSolution.from_columns(inst, skeletons, locals_)


@dataclass
class RoundingResult:
    solution: IntegralSolution
    master_objective: float
    master_nodes: int

    @property
    def objective(self) -> float:
        return self.solution.objective


def round_two_stage(inst: Instance, pool: ColumnPool, rows: Sequence[Sequence[BendersRow]],
                    config: SolverConfig, refresh_locals: bool = True) -> RoundingResult:
    """Master ILP over pooled skeletons, then an ILP per part over its local assignments.

    With ``refresh_locals`` each part's sub-problem LP is first re-converged at
    the integral skeleton choice, which may add local assignments to ``pool``.
    ``master_objective`` is the row-based value of the master ILP.
    """
    master = solve_master_ilp(inst, pool, rows, config)
    chosen = [pool.skeletons[j] for j in np.flatnonzero(master.gamma > 0.5)]
    marg = pool.skeleton_matrix(inst.n_detections) @ master.gamma
    per_part = []
    for part in range(inst.n_parts):
        if refresh_locals and chosen:
            solve_subproblem_dual(inst, part, marg, pool, config)
        picked, _ = solve_sub_ilp(inst, part, chosen, pool, config)
        per_part.append(picked)
    solution = extract_poses(inst, pool, master.gamma, per_part)
    return RoundingResult(solution, master.objective, master.nodes)


def solve_joint_ilp(inst: Instance, pool: ColumnPool, config: SolverConfig) -> IntegralSolution:
    """Single ILP over all pooled skeletons and local assignments at once."""
    lp, cols = joint_program(inst, pool)
    n_g = len(pool.skeletons)
    res = branch_and_bound(lp, np.ones(lp.c.size, dtype=bool), config,
                           incumbent=(np.zeros(lp.c.size), 0.0))
    x = np.round(res.x)
    skeletons = [pool.skeletons[j] for j in np.flatnonzero(x[:n_g] > 0.5)]
    locals_ = [cols[j] for j in np.flatnonzero(x[n_g:] > 0.5)]
    return IntegralSolution.from_columns(inst, skeletons, locals_)
