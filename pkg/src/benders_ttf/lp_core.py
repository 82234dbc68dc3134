"""Dense two-phase primal simplex that returns both primal and dual solutions.

All programs are posed as minimisation over ``x >= 0``. Dual values follow
the sign convention ``y >= 0`` for both ``<=`` and ``>=`` rows (free for
``==`` rows), so that the reduced costs are ``c + A_le^T y_le - A_ge^T y_ge
- A_eq^T y_eq``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .model import SolverConfig

LE, GE, EQ = "<=", ">=", "=="
Status = Literal["optimal", "infeasible", "unbounded"]

_PIVOT_EPS = 1e-9
_COST_EPS = 1e-10
_STALL_LIMIT = 50


class NumericalError(RuntimeError):
    """The simplex could not produce a solution meeting its own invariants."""


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    sense: tuple[str, ...]

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float).reshape(len(b), len(c))
        sense = tuple("==" if s == "=" else s for s in self.sense)
        if len(sense) != len(b):
            raise ValueError(f"{len(sense)} senses for {len(b)} rows")
        bad = [s for s in sense if s not in (LE, GE, EQ)]
        if bad:
            raise ValueError(f"unknown constraint sense {bad[0]!r}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sense", sense)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    objective: float = float("nan")
    iterations: int = 0
    max_violation: float = 0.0
    # Standard-form multipliers (c - A^T pi >= 0); handy for callers that want
    # one sign convention regardless of row sense.
    pi: Optional[np.ndarray] = field(default=None, repr=False)


def _pivot(T: np.ndarray, z: np.ndarray, basis: np.ndarray, r: int, j: int) -> None:
    col = T[:, j].copy()
    prow = T[r] / col[r]
    T -= np.outer(col, prow)
    T[r] = prow
    z -= z[j] * prow[:-1]
    basis[r] = j


def _simplex(T: np.ndarray, basis: np.ndarray, cost: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Run primal simplex on tableau ``T`` (rhs in last column) in place."""
    z = cost - cost[basis] @ T[:, :-1]
    bland = False
    stall = 0
    for it in range(max_iter):
        if bland:
            cand = np.flatnonzero(z < -_COST_EPS)
            if cand.size == 0:
                return "optimal", it
            j = int(cand[0])
        else:
            j = int(np.argmin(z))
            if z[j] >= -_COST_EPS:
                return "optimal", it
        col = T[:, j]
        rows = np.flatnonzero(col > _PIVOT_EPS)
        if rows.size == 0:
            return "unbounded", it
        ratios = T[rows, -1] / col[rows]
        rmin = ratios.min()
        tied = rows[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        r = int(tied[np.argmin(basis[tied])])
        _pivot(T, z, basis, r, j)
        rhs = T[:, -1]
        rhs[(rhs < 0) & (rhs > -1e-11)] = 0.0
        if rmin <= 1e-12:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True
        else:
            stall = 0
    raise NumericalError(f"simplex did not terminate within {max_iter} pivots")


def _verify(lp: LinearProgram, x: np.ndarray, pi: np.ndarray) -> float:
    """Largest scaled violation of primal/dual feasibility, duality gap and slackness."""
    A, b, c = lp.A, lp.b, lp.c
    sense = np.array(lp.sense)
    le, ge = sense == LE, sense == GE
    resid = A @ x - b if A.size else np.zeros(len(b))
    primal = np.where(le, np.maximum(resid, 0), np.where(ge, np.maximum(-resid, 0), np.abs(resid)))
    red = c - (A.T @ pi if A.size else np.zeros(len(c)))
    sign = np.where(le, np.maximum(pi, 0), np.where(ge, np.maximum(-pi, 0), 0.0))
    gap = abs(c @ x - b @ pi) / (1.0 + abs(c @ x))
    comp = max(np.max(np.abs(x * red), initial=0.0), np.max(np.abs(pi * resid), initial=0.0))
    return float(max(np.max(primal, initial=0.0), np.max(np.maximum(-x, 0), initial=0.0),
                     np.max(np.maximum(-red, 0), initial=0.0), np.max(sign, initial=0.0), gap, comp))


def solve_primal_dual(lp: LinearProgram, config: SolverConfig | None = None,
                      max_iter: int = 50_000) -> LpSolution:
    tol = (config or SolverConfig()).lp_tolerance
    m, n = lp.shape
    c, sense_in = lp.c, np.array(lp.sense)

    if m == 0:
        if n and c.min() < -_COST_EPS:
            return LpSolution("unbounded")
        return LpSolution("optimal", np.zeros(n), np.zeros(0), 0.0, pi=np.zeros(0))

    flip = np.where(lp.b < 0, -1.0, 1.0)
    A = lp.A * flip[:, None]
    b = lp.b * flip
    sense = sense_in.copy()
    sense[(flip < 0) & (sense_in == LE)] = GE
    sense[(flip < 0) & (sense_in == GE)] = LE

    slack_rows = np.flatnonzero(sense != EQ)
    art_rows = np.flatnonzero(sense != LE)
    n_slack, n_art = len(slack_rows), len(art_rows)
    art0 = n + n_slack
    N = art0 + n_art

    T = np.zeros((m, N + 1))
    T[:, :n] = A
    T[slack_rows, n + np.arange(n_slack)] = np.where(sense[slack_rows] == LE, 1.0, -1.0)
    T[art_rows, art0 + np.arange(n_art)] = 1.0
    T[:, -1] = b
    basis = np.empty(m, dtype=np.int64)
    slack_of_row = dict(zip(slack_rows.tolist(), (n + np.arange(n_slack)).tolist()))
    art_of_row = dict(zip(art_rows.tolist(), (art0 + np.arange(n_art)).tolist()))
    for i in range(m):
        basis[i] = art_of_row[i] if i in art_of_row else slack_of_row[i]
    A_std = T[:, :art0].copy()
    iters = 0

    kept = np.arange(m)
    if n_art:
        cost1 = np.zeros(N)
        cost1[art0:] = 1.0
        status, it = _simplex(T, basis, cost1, max_iter)
        iters += it
        infeas = float(T[basis >= art0, -1].sum())
        if infeas > tol * (1.0 + float(np.max(np.abs(b)))):
            return LpSolution("infeasible", iterations=iters)
        z = np.zeros(N)
        redundant = []
        for i in range(m):
            if basis[i] < art0:
                continue
            row = np.abs(T[i, :art0])
            j = int(np.argmax(row)) if art0 else 0
            if art0 and row[j] > _PIVOT_EPS:
                _pivot(T, z, basis, i, j)
            else:
                redundant.append(i)
        if redundant:
            keep_mask = np.ones(m, dtype=bool)
            keep_mask[redundant] = False
            T, basis, kept = T[keep_mask], basis[keep_mask], kept[keep_mask]
        T = np.hstack([T[:, :art0], T[:, -1:]])

    cost2 = np.zeros(art0)
    cost2[:n] = c
    status, it = _simplex(T, basis, cost2, max_iter)
    iters += it
    if status == "unbounded":
        return LpSolution("unbounded", iterations=iters)

    B = A_std[kept][:, basis]
    try:
        xb = np.linalg.solve(B, b[kept])
        pi_k = np.linalg.solve(B.T, cost2[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular optimal basis") from exc
    xs = np.zeros(art0)
    xs[basis] = xb
    x = xs[:n]
    x[np.abs(x) < 1e-13] = 0.0
    pi_flipped = np.zeros(m)
    pi_flipped[kept] = pi_k
    pi = pi_flipped * flip
    y = np.where(sense_in == LE, -pi, pi)

    viol = _verify(lp, x, pi)
    scale = 1.0 + max(float(np.max(np.abs(lp.c), initial=0.0)), float(np.max(np.abs(lp.b), initial=0.0)))
    if viol > 1e3 * tol * scale:
        raise NumericalError(f"optimality conditions violated by {viol:.3g} (tolerance {tol:g})")
    return LpSolution("optimal", x, y, float(c @ x), iters, viol, pi=pi)


def solve_lp(c: Sequence[float], A, b: Sequence[float], sense: Sequence[str],
             config: SolverConfig | None = None) -> LpSolution:
    """Shorthand for ``solve_primal_dual(LinearProgram(...))``."""
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(b), len(c))
    return solve_primal_dual(LinearProgram(c, A, b, tuple(sense)), config)
