"""Skeleton and local-assignment columns, their costs, and the growing pools."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator

import numpy as np

from .model import Instance


def _check_skeleton(members: tuple[int, ...], inst: Instance) -> None:
    n = inst.n_detections
    if not members:
        raise ValueError("skeleton must contain at least one detection")
    if len(set(members)) != len(members) or any(not 0 <= d < n for d in members):
        raise ValueError(f"invalid skeleton members {members}")
    parts = [int(inst.det_part[d]) for d in members]
    if len(set(parts)) != len(parts):
        raise ValueError(f"skeleton {members} has two detections of one part")
    if not any(inst.major_mask[d] for d in members):
        raise ValueError(f"skeleton {members} has no major-part detection")


def skeleton_cost(members: Iterable[int], inst: Instance) -> float:
    """omega + sum of unaries + each within-skeleton pair counted once."""
    members = tuple(sorted(members))
    _check_skeleton(members, inst)
    total = inst.costs.omega
    for d in members:
        total += inst.costs.theta[d]
    for a, b in combinations(members, 2):
        total += inst.costs.phi.get((a, b), 0.0)
    return float(total)


def _check_local(part: int, global_det: int, local_dets: tuple[int, ...], inst: Instance) -> None:
    n = inst.n_detections
    if not 0 <= global_det < n or int(inst.det_part[global_det]) != part:
        raise ValueError(f"global detection {global_det} is not of part {part}")
    if global_det in local_dets or len(set(local_dets)) != len(local_dets):
        raise ValueError(f"invalid local set {local_dets} for global {global_det}")
    for d in local_dets:
        if not 0 <= d < n or int(inst.det_part[d]) != part:
            raise ValueError(f"local detection {d} is not of part {part}")


def local_cost(part: int, global_det: int, local_dets: Iterable[int], inst: Instance) -> float:
    """Unaries of the locals plus every pair touching at least one local.

    The global detection's own unary is paid by its skeleton.
    """
    local_dets = tuple(sorted(local_dets))
    _check_local(part, global_det, local_dets, inst)
    phi = inst.costs.phi
    total = 0.0
    for d in local_dets:
        total += inst.costs.theta[d]
    for d in local_dets:
        total += phi.get((global_det, d) if global_det < d else (d, global_det), 0.0)
    for a, b in combinations(local_dets, 2):
        total += phi.get((a, b), 0.0)
    return float(total)


@dataclass(frozen=True)
class Skeleton:
    members: tuple[int, ...]
    cost: float

    @classmethod
    def build(cls, members: Iterable[int], inst: Instance) -> "Skeleton":
        members = tuple(sorted(members))
        return cls(members, skeleton_cost(members, inst))


@dataclass(frozen=True)
class LocalAssignment:
    part: int
    global_det: int
    local_dets: tuple[int, ...]
    cost: float

    @classmethod
    def build(cls, part: int, global_det: int, local_dets: Iterable[int], inst: Instance) -> "LocalAssignment":
        local_dets = tuple(sorted(local_dets))
        return cls(part, global_det, local_dets, local_cost(part, global_det, local_dets, inst))

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        return self.global_det, self.local_dets


@dataclass
class ColumnPool:
    """Active skeletons and per-part local assignments; only ever grows."""

    n_parts: int
    skeletons: list[Skeleton] = field(default_factory=list)
    locals_by_part: list[list[LocalAssignment]] = field(default_factory=list)
    _skel_index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)
    _local_index: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self.locals_by_part:
            self.locals_by_part = [[] for _ in range(self.n_parts)]
        given_skels, given_locals = self.skeletons, self.locals_by_part
        self.skeletons = []
        self.locals_by_part = [[] for _ in range(self.n_parts)]
        self._skel_index = {}
        self._local_index = [{} for _ in range(self.n_parts)]
        for s in given_skels:
            self.add_skeleton(s)
        for part_list in given_locals:
            for loc in part_list:
                self.add_local(loc)

    @classmethod
    def for_instance(cls, inst: Instance) -> "ColumnPool":
        return cls(inst.n_parts)

    def add_skeleton(self, s: Skeleton) -> bool:
        if s.members in self._skel_index:
            return False
        self._skel_index[s.members] = len(self.skeletons)
        self.skeletons.append(s)
        return True

    def add_local(self, loc: LocalAssignment) -> bool:
        index = self._local_index[loc.part]
        if loc.key in index:
            return False
        index[loc.key] = len(self.locals_by_part[loc.part])
        self.locals_by_part[loc.part].append(loc)
        return True

    def merge(self, other: "ColumnPool") -> int:
        added = sum(self.add_skeleton(s) for s in other.skeletons)
        for part_list in other.locals_by_part:
            added += sum(self.add_local(loc) for loc in part_list)
        return added

    def has_skeleton(self, members: Iterable[int]) -> bool:
        return tuple(sorted(members)) in self._skel_index

    def has_local(self, part: int, global_det: int, local_dets: Iterable[int]) -> bool:
        return (global_det, tuple(sorted(local_dets))) in self._local_index[part]

    def all_locals(self) -> Iterator[LocalAssignment]:
        for part_list in self.locals_by_part:
            yield from part_list

    @property
    def n_locals(self) -> int:
        return sum(len(p) for p in self.locals_by_part)

    def skeleton_matrix(self, n_detections: int) -> np.ndarray:
        """Incidence matrix G, detections by pooled skeletons."""
        G = np.zeros((n_detections, len(self.skeletons)))
        for j, s in enumerate(self.skeletons):
            G[list(s.members), j] = 1.0
        return G

    def skeleton_costs(self) -> np.ndarray:
        return np.array([s.cost for s in self.skeletons], dtype=float)
