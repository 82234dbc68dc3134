"""Exhaustive exact solver for tiny instances."""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations, product
from typing import Optional

from .columns import ColumnPool, LocalAssignment, Skeleton
from .model import Instance
from .rounding import IntegralSolution

ENUMERATION_LIMIT = 10**6


class OracleSizeError(ValueError):
    pass


def _guard(inst: Instance) -> None:
    size = 1
    for dets in inst.dets_by_part:
        size *= 1 + len(dets)
    if size > ENUMERATION_LIMIT:
        raise OracleSizeError(f"{size} part-state combinations exceed the enumeration limit")


def enumerate_all_skeletons(inst: Instance) -> list[Skeleton]:
    """Every detection set with at most one detection per part and at least one major."""
    _guard(inst)
    choices = [(None, *dets) for dets in inst.dets_by_part]
    out = []
    for combo in product(*choices):
        members = tuple(sorted(d for d in combo if d is not None))
        if members and any(inst.major_mask[d] for d in members):
            out.append(Skeleton.build(members, inst))
    out.sort(key=lambda s: s.members)
    return out


def enumerate_all_locals(inst: Instance, max_locals: Optional[int] = None) -> list[list[LocalAssignment]]:
    """Every non-empty local assignment per part, optionally capped in size."""
    _guard(inst)
    out = []
    for part, dets in enumerate(inst.dets_by_part):
        part_out = []
        for g in dets:
            others = [d for d in dets if d != g]
            cap = len(others) if max_locals is None else min(max_locals, len(others))
            for k in range(1, cap + 1):
                for subset in combinations(others, k):
                    part_out.append(LocalAssignment.build(part, g, subset, inst))
        out.append(part_out)
    return out


def full_pool(inst: Instance, max_locals: Optional[int] = None, base: ColumnPool | None = None) -> ColumnPool:
    """``base`` (if any) extended with every skeleton and local assignment."""
    pool = ColumnPool.for_instance(inst)
    if base is not None:
        pool.merge(base)
    for s in enumerate_all_skeletons(inst):
        pool.add_skeleton(s)
    for part_locals in enumerate_all_locals(inst, max_locals):
        for loc in part_locals:
            pool.add_local(loc)
    return pool


def solve_exact(inst: Instance, max_locals: Optional[int] = None) -> IntegralSolution:
    """Optimum of the integer program by exhaustive search.

    Skeleton packings are enumerated depth-first; for each packing the best
    local assignments of every part depend only on which of its detections
    are used by skeletons, so that part-level optimum is memoised.
    """
    skeletons = enumerate_all_skeletons(inst)
    locals_by_part = enumerate_all_locals(inst, max_locals)
    masks = [sum(1 << d for d in s.members) for s in skeletons]
    part_masks = [sum(1 << d for d in dets) for dets in inst.dets_by_part]
    by_global = []
    for part_locals in locals_by_part:
        table: dict[int, list[tuple[int, LocalAssignment]]] = {}
        for loc in part_locals:
            table.setdefault(loc.global_det, []).append((sum(1 << d for d in loc.local_dets), loc))
        by_global.append(table)

    @lru_cache(maxsize=None)
    def part_best(part: int, used: int) -> tuple[float, tuple[LocalAssignment, ...]]:
        globals_ = [d for d in inst.dets_by_part[part] if used >> d & 1]
        table = by_global[part]

        @lru_cache(maxsize=None)
        def rec(i: int, free: int) -> tuple[float, tuple[LocalAssignment, ...]]:
            if i == len(globals_):
                return 0.0, ()
            best = rec(i + 1, free)
            for mask, loc in table.get(globals_[i], ()):
                if mask & ~free:
                    continue
                val, rest = rec(i + 1, free & ~mask)
                val += loc.cost
                if val < best[0]:
                    best = (val, (loc, *rest))
            return best

        return rec(0, part_masks[part] & ~used)

    best: list = [0.0, (), ()]

    def evaluate(chosen: tuple[int, ...], used: int, skel_cost: float) -> None:
        total = skel_cost
        picked: list[LocalAssignment] = []
        for part in range(inst.n_parts):
            val, locs = part_best(part, used & part_masks[part])
            total += val
            picked.extend(locs)
        if total < best[0]:
            best[:] = [total, chosen, tuple(picked)]

    def pack(start: int, chosen: tuple[int, ...], used: int, skel_cost: float) -> None:
        evaluate(chosen, used, skel_cost)
        for j in range(start, len(skeletons)):
            if masks[j] & used:
                continue
            pack(j + 1, (*chosen, j), used | masks[j], skel_cost + skeletons[j].cost)

    pack(0, (), 0, 0.0)
    total, chosen, picked = best
    return IntegralSolution.from_columns(inst, [skeletons[j] for j in chosen], list(picked))
