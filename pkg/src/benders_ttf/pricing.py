"""Most-negative reduced-cost skeletons (tree DP) and local assignments (enumeration).

Skeleton pricing conditions on the state of the star-root part. With the
star-root detection fixed, every pairwise term touching it becomes a unary on
the other detections and the remaining model is the part tree with the root
removed, which is solved exactly by min-sum dynamic programming where each
part is either ABSENT or takes one of its detections.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .model import Instance, PricingMode


@dataclass(frozen=True)
class PotentialVector:
    delta: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.delta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise ValueError("potentials must be finite")
        object.__setattr__(self, "delta", d)


class _RootedTree:
    """Part tree rooted at the star root, with children lists and a post-order."""

    def __init__(self, inst: Instance) -> None:
        pg = inst.part_graph
        root = inst.star_root_index
        n = inst.n_parts
        self.parent = np.full(n, -1, dtype=np.int64)
        self.children: list[list[int]] = [[] for _ in range(n)]
        order = [root]
        seen = {root}
        for p in order:
            for q_name in pg.adjacency[pg.parts[p]]:
                q = pg.index(q_name)
                if q not in seen:
                    seen.add(q)
                    self.parent[q] = p
                    self.children[p].append(q)
                    order.append(q)
        self.root = root
        self.postorder = order[::-1]


def _tree(inst: Instance) -> _RootedTree:
    # Instances are immutable, so the rooted tree is memoised on the instance.
    tree = inst.__dict__.get("_rooted_tree")
    if tree is None:
        tree = inst.__dict__["_rooted_tree"] = _RootedTree(inst)
    return tree


def _as_delta(inst: Instance, delta) -> np.ndarray:
    if isinstance(delta, PotentialVector):
        delta = delta.delta
    d = np.asarray(delta, dtype=float).reshape(-1)
    if d.shape != (inst.n_detections,):
        raise ValueError(f"expected {inst.n_detections} potentials, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("potentials must be finite")
    return d


def _tree_dp(inst: Instance, tree: _RootedTree, unary: np.ndarray, forced: dict[int, int]) -> tuple[float, list[int]]:
    """Min-sum DP over all non-root parts; root-incident pairs already folded into ``unary``.

    ``forced`` maps a part index to the only detection it may take.
    Returns the optimal value and chosen detections (ABSENT parts omitted).
    """
    phi = inst.phi_matrix
    dets = inst.dets_by_part
    root = tree.root
    # cost[p][k]: best subtree value with part p in state k (0 = ABSENT, k = dets[p][k-1]).
    cost: dict[int, np.ndarray] = {}
    choice: dict[tuple[int, int], np.ndarray] = {}
    for p in tree.postorder:
        if p == root:
            continue
        states = np.concatenate([[0.0], unary[list(dets[p])]]) if dets[p] else np.zeros(1)
        if p in forced:
            mask = np.full(states.shape, np.inf)
            mask[1 + dets[p].index(forced[p])] = 0.0
            states = states + mask
        for c in tree.children[p]:
            pair = np.zeros((len(dets[p]) + 1, len(dets[c]) + 1))
            if dets[p] and dets[c]:
                pair[1:, 1:] = phi[np.ix_(dets[p], dets[c])]
            total = pair + cost[c][None, :]
            best = np.argmin(total, axis=1)
            choice[(p, c)] = best
            states = states + total[np.arange(total.shape[0]), best]
        cost[p] = states

    value = 0.0
    chosen: list[int] = []
    stack: list[tuple[int, int]] = []
    for c in tree.children[root]:
        k = int(np.argmin(cost[c]))
        value += float(cost[c][k])
        stack.append((c, k))
    while stack:
        p, k = stack.pop()
        if k > 0:
            chosen.append(dets[p][k - 1])
        for c in tree.children[p]:
            stack.append((c, int(choice[(p, c)][k])))
    return value, chosen


def price_skeleton(inst: Instance, delta, d_star: int) -> tuple[tuple[int, ...], float]:
    """Skeleton containing ``d_star`` minimising ``Gamma_g + sum_{d in g} delta_d``.

    ``d_star`` must belong to a major part. When it is a star-root detection a
    single DP pass suffices; otherwise every star-root state (ABSENT or one of
    its detections) is tried with ``d_star`` forced in.
    """
    delta = _as_delta(inst, delta)
    if not 0 <= d_star < inst.n_detections or not inst.major_mask[d_star]:
        raise ValueError(f"detection {d_star} is not of a major part")
    tree = _tree(inst)
    root = tree.root
    unary = inst.theta + delta
    phi = inst.phi_matrix
    star_part = int(inst.det_part[d_star])

    if star_part == root:
        root_states: Sequence[Optional[int]] = [d_star]
        forced: dict[int, int] = {}
    else:
        root_states = [None, *inst.dets_by_part[root]]
        forced = {star_part: d_star}

    best_val, best_set = np.inf, None
    for s in root_states:
        if s is None:
            val, chosen = _tree_dp(inst, tree, unary, forced)
        else:
            val, chosen = _tree_dp(inst, tree, unary + phi[s], forced)
            val += unary[s]
            chosen = [s, *chosen]
        if val < best_val:
            best_val, best_set = val, chosen
    assert best_set is not None
    return tuple(sorted(best_set)), float(inst.costs.omega + best_val)


def price_all_skeletons(inst: Instance, delta, tol: float = 1e-7) -> list[tuple[tuple[int, ...], float]]:
    """Violated skeleton columns (reduced cost < -tol), one per major detection at most."""
    out = []
    seen = set()
    for d in inst.major_detections:
        members, rc = price_skeleton(inst, delta, d)
        if rc < -tol and members not in seen:
            seen.add(members)
            out.append((members, rc))
    return out


# ---------------------------------------------------------------------------
# Local assignments
# ---------------------------------------------------------------------------

def has_local_pairs(inst: Instance, part: int, d_star: int) -> bool:
    """Whether any same-part pair not involving ``d_star`` has a nonzero cost."""
    others = [d for d in inst.dets_by_part[part] if d != d_star]
    if len(others) < 2:
        return False
    sub = inst.phi_matrix[np.ix_(others, others)]
    return bool(np.any(sub != 0.0))


def price_local(inst: Instance, part: int, lam1, lam2, lam3, d_star: int, *,
                max_locals: Optional[int] = None,
                mode: PricingMode = "exact_enumeration") -> tuple[tuple[int, ...], float]:
    """Local set for global ``d_star`` minimising its reduced cost.

    The reduced cost of local assignment ``(d_star, S)`` is
    ``lam3[d*] + lam2[d*] + sum_{d in S} (lam1[d] + lam2[d]) + Psi(d*, S)``.
    ``lam*`` are indexed by detection id. ``max_locals=None`` means no cap.
    Ties go to the lexicographically smallest set; the empty set is allowed
    and is returned when nothing beats it.
    """
    if not 0 <= d_star < inst.n_detections or int(inst.det_part[d_star]) != part:
        raise ValueError(f"detection {d_star} is not of part {part}")
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    lam3 = np.asarray(lam3, dtype=float)
    base = float(lam3[d_star] + lam2[d_star])
    others = [d for d in inst.dets_by_part[part] if d != d_star]
    phi = inst.phi_matrix
    weight = {d: float(inst.theta[d] + phi[d_star, d] + lam1[d] + lam2[d]) for d in others}

    if mode == "separable_fast":
        if has_local_pairs(inst, part, d_star):
            raise ValueError("separable_fast pricing needs zero pairwise costs among local detections")
        neg = sorted((d for d in others if weight[d] < 0), key=lambda d: (weight[d], d))
        if max_locals is not None:
            neg = neg[:max_locals]
        chosen = tuple(sorted(neg))
        return chosen, base + sum(weight[d] for d in chosen)
    if mode != "exact_enumeration":
        raise ValueError(f"unknown pricing mode {mode!r}")

    cap = len(others) if max_locals is None else min(max_locals, len(others))
    best_set: tuple[int, ...] = ()
    best_val = base
    for k in range(1, cap + 1):
        for subset in combinations(others, k):
            val = base
            for d in subset:
                val += weight[d]
            for a, b in combinations(subset, 2):
                val += phi[a, b]
            if val < best_val or (val == best_val and subset < best_set):
                best_val, best_set = val, subset
    return best_set, float(best_val)


def price_locals_for_part(inst: Instance, part: int, lam1, lam2, lam3, *,
                          max_locals: Optional[int] = None,
                          mode: PricingMode = "exact_enumeration") -> list[tuple[int, tuple[int, ...], float]]:
    """Run :func:`price_local` for every global detection of ``part``."""
    out = []
    for d in inst.dets_by_part[part]:
        chosen, rc = price_local(inst, part, lam1, lam2, lam3, d, max_locals=max_locals, mode=mode)
        out.append((d, chosen, rc))
    return out
