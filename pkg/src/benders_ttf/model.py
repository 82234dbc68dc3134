"""Problem instances: part graphs, detections, costs, validation and file IO."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal, Mapping, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

PricingMode = Literal["exact_enumeration", "separable_fast"]


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class PartGraph:
    parts: tuple[str, ...]
    major_parts: frozenset[str]
    tree_edges: frozenset[frozenset[str]]
    star_root: str

    def index(self, part: str) -> int:
        return self._index[part]

    @cached_property
    def _index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.parts)}

    @cached_property
    def adjacency(self) -> dict[str, tuple[str, ...]]:
        adj: dict[str, list[str]] = {p: [] for p in self.parts}
        for edge in self.tree_edges:
            if len(edge) != 2 or not edge <= set(self.parts):
                continue
            a, b = sorted(edge, key=lambda p: self._index[p])
            adj[a].append(b)
            adj[b].append(a)
        return {p: tuple(sorted(v, key=lambda q: self._index[q])) for p, v in adj.items()}

    def allows_pair(self, part_a: str, part_b: str) -> bool:
        """Whether cross-part pairwise costs are permitted between two parts."""
        if part_a == part_b:
            return True
        if self.star_root in (part_a, part_b):
            return True
        return frozenset((part_a, part_b)) in self.tree_edges


@dataclass(frozen=True)
class Detection:
    id: int
    part: str


@dataclass(frozen=True)
class CostModel:
    """Unary costs ``theta`` indexed by detection id, pairwise ``phi`` keyed by
    ``(d1, d2)`` with ``d1 < d2``, and the per-pose cost ``omega``.

    Each unordered pair is stored and counted once.
    """

    theta: tuple[float, ...]
    phi: Mapping[tuple[int, int], float]
    omega: float

    def pair(self, d1: int, d2: int) -> float:
        key = (d1, d2) if d1 < d2 else (d2, d1)
        return self.phi.get(key, 0.0)


@dataclass(frozen=True, eq=False)
class Instance:
    part_graph: PartGraph
    detections: tuple[Detection, ...]
    costs: CostModel
    name: str = "instance"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return instance_to_dict(self) == instance_to_dict(other)

    __hash__ = None  # type: ignore[assignment]

    # Derived views below assume a valid instance.

    @property
    def n_detections(self) -> int:
        return len(self.detections)

    @property
    def n_parts(self) -> int:
        return len(self.part_graph.parts)

    @cached_property
    def det_part(self) -> np.ndarray:
        """Part index of every detection, indexed by detection id."""
        out = np.empty(len(self.detections), dtype=np.int64)
        for det in self.detections:
            out[det.id] = self.part_graph.index(det.part)
        return out

    @cached_property
    def dets_by_part(self) -> tuple[tuple[int, ...], ...]:
        buckets: list[list[int]] = [[] for _ in self.part_graph.parts]
        for d in sorted(det.id for det in self.detections):
            buckets[int(self.det_part[d])].append(d)
        return tuple(tuple(b) for b in buckets)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.asarray(self.costs.theta, dtype=float)

    @cached_property
    def phi_matrix(self) -> np.ndarray:
        """Dense symmetric pairwise matrix with a zero diagonal."""
        n = len(self.detections)
        mat = np.zeros((n, n))
        for (a, b), w in self.costs.phi.items():
            mat[a, b] = w
            mat[b, a] = w
        return mat

    @cached_property
    def major_mask(self) -> np.ndarray:
        majors = {self.part_graph.index(p) for p in self.part_graph.major_parts}
        return np.array([int(p) in majors for p in self.det_part], dtype=bool)

    @cached_property
    def major_detections(self) -> tuple[int, ...]:
        return tuple(int(d) for d in np.flatnonzero(self.major_mask))

    @property
    def star_root_index(self) -> int:
        return self.part_graph.index(self.part_graph.star_root)

    @cached_property
    def cost_magnitude(self) -> float:
        m = float(np.max(np.abs(self.theta))) if len(self.theta) else 0.0
        if self.costs.phi:
            m = max(m, max(abs(w) for w in self.costs.phi.values()))
        return m


@dataclass
class SolverConfig:
    lp_tolerance: float = 1e-7
    # None means 1e-6 * (1 + largest |theta| or |phi|) of the instance.
    bias_epsilon: Optional[float] = None
    time_cap_seconds: Optional[float] = 300.0
    # None lifts the cap on local-set size.
    max_locals_per_assignment: Optional[int] = 3
    rng_seed: int = 0
    pricing_mode: PricingMode = "exact_enumeration"
    max_outer_iterations: int = 10_000
    max_inner_iterations: int = 10_000

    def __post_init__(self) -> None:
        if not self.lp_tolerance > 0:
            raise ValueError("lp_tolerance must be positive")
        if self.bias_epsilon is not None and not self.bias_epsilon > 0:
            raise ValueError("bias_epsilon must be positive")
        if self.max_locals_per_assignment is not None and self.max_locals_per_assignment < 0:
            raise ValueError("max_locals_per_assignment must be >= 0")
        if self.pricing_mode not in ("exact_enumeration", "separable_fast"):
            raise ValueError(f"unknown pricing mode {self.pricing_mode!r}")

    def bias_for(self, inst: Instance) -> float:
        if self.bias_epsilon is not None:
            return self.bias_epsilon
        return 1e-6 * (1.0 + inst.cost_magnitude)


@dataclass(frozen=True)
class Violation:
    rule: str
    ids: tuple = ()
    message: str = ""

    def __str__(self) -> str:
        ids = ", ".join(map(str, self.ids))
        return f"{self.rule} [{ids}]: {self.message}" if ids else f"{self.rule}: {self.message}"


def _tree_violations(pg: PartGraph) -> list[Violation]:
    out: list[Violation] = []
    parts = list(pg.parts)
    if len(set(parts)) != len(parts):
        dupes = sorted({p for p in parts if parts.count(p) > 1})
        out.append(Violation("duplicate-part", tuple(dupes), "part names must be unique"))
    known = set(parts)
    for edge in pg.tree_edges:
        if len(edge) != 2:
            out.append(Violation("tree-edge-malformed", tuple(sorted(edge)), "edge needs two distinct parts"))
        elif not edge <= known:
            out.append(Violation("tree-unknown-part", tuple(sorted(edge - known)), "edge references unknown part"))
    if len(pg.tree_edges) != len(known) - 1:
        out.append(Violation(
            "tree-size", (), f"{len(pg.tree_edges)} edges for {len(known)} parts, expected {len(known) - 1}"))
    if known:
        seen = {parts[0]}
        stack = [parts[0]]
        adj = pg.adjacency
        while stack:
            for q in adj.get(stack.pop(), ()):
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
        if seen != known:
            out.append(Violation("tree-disconnected", tuple(sorted(known - seen)), "parts unreachable in tree"))
    if pg.star_root not in known:
        out.append(Violation("star-root-unknown", (pg.star_root,), "star_root is not a part"))
    elif pg.star_root not in pg.major_parts:
        out.append(Violation("star-root-not-major", (pg.star_root,), "star_root must be a major part"))
    if not pg.major_parts:
        out.append(Violation("no-major-part", (), "at least one major part is required"))
    for p in sorted(pg.major_parts - known):
        out.append(Violation("major-unknown-part", (p,), "major part is not a part"))
    return out


def validate_instance(inst: Instance) -> list[Violation]:
    """Return every structural rule the instance breaks; empty means valid."""
    pg = inst.part_graph
    out = _tree_violations(pg)
    known = set(pg.parts)
    if len(pg.major_parts) > 1:
        log.warning("instance %s has %d major parts; lower bounds may double count",
                    inst.name, len(pg.major_parts))

    ids = [det.id for det in inst.detections]
    seen: set[int] = set()
    dupes = False
    for d in ids:
        if d in seen:
            out.append(Violation("duplicate-id", (d,), "detection id used more than once"))
            dupes = True
        seen.add(d)
    if not dupes:
        if sorted(ids) != list(range(len(ids))):
            out.append(Violation("non-dense-ids", tuple(sorted(set(ids) - set(range(len(ids))))),
                                 "detection ids must be exactly 0..|D|-1"))
    part_of: dict[int, str] = {}
    for det in inst.detections:
        if det.part not in known:
            out.append(Violation("unknown-part", (det.id,), f"part {det.part!r} not in part graph"))
        part_of[det.id] = det.part

    theta = inst.costs.theta
    if len(theta) != len(ids):
        out.append(Violation("theta-length", (), f"{len(theta)} unary costs for {len(ids)} detections"))
    bad = tuple(i for i, t in enumerate(theta) if not math.isfinite(t))
    if bad:
        out.append(Violation("non-finite-cost", bad, "theta must be finite"))
    if not math.isfinite(inst.costs.omega):
        out.append(Violation("non-finite-cost", (), "omega must be finite"))

    for (a, b), w in sorted(inst.costs.phi.items()):
        if a == b:
            out.append(Violation("phi-self-pair", (a, b), "pairwise cost on a single detection"))
            continue
        if a > b:
            out.append(Violation("phi-unordered-key", (a, b), "phi keys must satisfy d1 < d2"))
        if a not in part_of or b not in part_of:
            out.append(Violation("phi-unknown-detection", (a, b), "pair references unknown detection"))
            continue
        if not math.isfinite(w):
            out.append(Violation("non-finite-cost", (a, b), "phi must be finite"))
        pa, pb = part_of[a], part_of[b]
        if pa in known and pb in known and not pg.allows_pair(pa, pb):
            out.append(Violation("cross-part-support", (a, b),
                                 f"parts {pa!r} and {pb!r} are neither tree-adjacent nor star-connected"))

    if not any(part_of.get(d) in pg.major_parts for d in ids):
        out.append(Violation("no-major-detection", (), "no detection belongs to a major part"))
    return out


# ---------------------------------------------------------------------------
# JSON file format
# ---------------------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    pg = inst.part_graph
    edges = sorted(sorted(e, key=lambda p: pg.parts.index(p) if p in pg.parts else len(pg.parts))
                   for e in pg.tree_edges)
    return {
        "name": inst.name,
        "parts": [{"name": p, "major": p in pg.major_parts} for p in pg.parts],
        "tree_edges": edges,
        "star_root": pg.star_root,
        "detections": [{"id": d.id, "part": d.part} for d in inst.detections],
        "theta": [float(t) for t in inst.costs.theta],
        "phi": [{"d1": a, "d2": b, "w": float(w)} for (a, b), w in sorted(inst.costs.phi.items())],
        "omega": float(inst.costs.omega),
    }


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise InstanceFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceFormatError(f"{where}: expected an integer, got {value!r}")
    return value


def instance_from_dict(data: dict) -> Instance:
    """Build an Instance from its JSON form; no validation beyond field types."""
    if not isinstance(data, dict):
        raise InstanceFormatError("top level: expected a JSON object")
    parts_raw = _require(data, "parts", "top level")
    if not isinstance(parts_raw, list):
        raise InstanceFormatError("parts: expected an array")
    parts, majors = [], set()
    for i, p in enumerate(parts_raw):
        name = _require(p, "name", f"parts[{i}]")
        if not isinstance(name, str):
            raise InstanceFormatError(f"parts[{i}].name: expected a string")
        parts.append(name)
        if bool(_require(p, "major", f"parts[{i}]")):
            majors.add(name)
    edges = []
    for i, e in enumerate(_require(data, "tree_edges", "top level")):
        if not isinstance(e, list) or not all(isinstance(p, str) for p in e):
            raise InstanceFormatError(f"tree_edges[{i}]: expected an array of part names")
        edges.append(frozenset(e))
    star_root = _require(data, "star_root", "top level")
    if not isinstance(star_root, str):
        raise InstanceFormatError("star_root: expected a string")
    dets = []
    for i, d in enumerate(_require(data, "detections", "top level")):
        did = _integer(_require(d, "id", f"detections[{i}]"), f"detections[{i}].id")
        part = _require(d, "part", f"detections[{i}]")
        if not isinstance(part, str):
            raise InstanceFormatError(f"detections[{i}].part: expected a string")
        dets.append(Detection(did, part))
    dets.sort(key=lambda d: d.id)
    theta_raw = _require(data, "theta", "top level")
    if not isinstance(theta_raw, list):
        raise InstanceFormatError("theta: expected an array")
    theta = tuple(_number(t, f"theta[{i}]") for i, t in enumerate(theta_raw))
    phi: dict[tuple[int, int], float] = {}
    for i, entry in enumerate(_require(data, "phi", "top level")):
        a = _integer(_require(entry, "d1", f"phi[{i}]"), f"phi[{i}].d1")
        b = _integer(_require(entry, "d2", f"phi[{i}]"), f"phi[{i}].d2")
        w = _number(_require(entry, "w", f"phi[{i}]"), f"phi[{i}].w")
        key = (a, b) if a <= b else (b, a)
        if key in phi:
            raise InstanceFormatError(f"phi[{i}]: duplicate pair {key}")
        phi[key] = w
    omega = _number(_require(data, "omega", "top level"), "omega")
    return Instance(
        part_graph=PartGraph(tuple(parts), frozenset(majors), frozenset(edges), star_root),
        detections=tuple(dets),
        costs=CostModel(theta, phi, omega),
        name=str(data.get("name", "instance")),
    )


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def load_instance(path: str | Path, validate: bool = True) -> Instance:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        inst = instance_from_dict(data)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    if validate:
        violations = validate_instance(inst)
        if violations:
            listing = "; ".join(map(str, violations))
            exc = InstanceFormatError(f"{path}: invalid instance: {listing}")
            exc.violations = violations  # type: ignore[attr-defined]
            raise exc
    return inst


# ---------------------------------------------------------------------------
# Synthetic instances
# ---------------------------------------------------------------------------

def generate_instance(n_parts: int, dets_per_part: int, cost_scale: float = 1.0,
                      seed: int = 0, name: str | None = None) -> Instance:
    """Random instance with a random part tree rooted at the single major part ``p0``.

    Unary costs are uniform on ``[-cost_scale, 0]``; each permitted pair gets a
    pairwise cost uniform on ``[-cost_scale/2, cost_scale/2]`` with probability 1/2.
    """
    if n_parts < 1 or dets_per_part < 1:
        raise ValueError("n_parts and dets_per_part must be >= 1")
    if not cost_scale >= 0:
        raise ValueError("cost_scale must be non-negative")
    rng = np.random.default_rng(seed)
    parts = tuple(f"p{i}" for i in range(n_parts))
    edges = frozenset(frozenset((parts[i], parts[int(rng.integers(0, i))])) for i in range(1, n_parts))
    pg = PartGraph(parts, frozenset({parts[0]}), edges, parts[0])

    dets = tuple(Detection(p * dets_per_part + k, parts[p])
                 for p in range(n_parts) for k in range(dets_per_part))
    theta = tuple(float(t) for t in rng.uniform(-cost_scale, 0.0, size=len(dets)))
    phi: dict[tuple[int, int], float] = {}
    for a in range(len(dets)):
        for b in range(a + 1, len(dets)):
            if not pg.allows_pair(dets[a].part, dets[b].part):
                continue
            keep, w = rng.random(), rng.uniform(-cost_scale / 2, cost_scale / 2)
            if keep < 0.5:
                phi[(a, b)] = float(w)
    inst = Instance(pg, dets, CostModel(theta, phi, cost_scale / 2),
                    name or f"gen_p{n_parts}_d{dets_per_part}_s{seed}")
    return inst


def make_instance(parts: Sequence[str], tree_edges: Sequence[tuple[str, str]], star_root: str,
                  det_parts: Sequence[str], theta: Sequence[float],
                  phi: Mapping[tuple[int, int], float], omega: float,
                  major_parts: Sequence[str] | None = None, name: str = "instance") -> Instance:
    """Convenience constructor; detection ids follow the order of ``det_parts``."""
    majors = frozenset(major_parts) if major_parts is not None else frozenset({star_root})
    canon = {((a, b) if a < b else (b, a)): float(w) for (a, b), w in phi.items()}
    return Instance(
        PartGraph(tuple(parts), majors, frozenset(frozenset(e) for e in tree_edges), star_root),
        tuple(Detection(i, p) for i, p in enumerate(det_parts)),
        CostModel(tuple(float(t) for t in theta), canon, float(omega)),
        name,
    )
