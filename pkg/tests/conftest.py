import numpy as np
import pytest

from benders_ttf.model import SolverConfig, generate_instance, make_instance


def three_detection_instance():
    """Neck-head toy: two neck detections (ids 0, 2) and one head (id 1)."""
    return make_instance(
        parts=["neck", "head"],
        tree_edges=[("neck", "head")],
        star_root="neck",
        det_parts=["neck", "head", "neck"],
        theta=[-1.0, -0.5, -0.4],
        phi={(0, 1): -0.2, (0, 2): -0.1},
        omega=0.3,
        name="i3",
    )


@pytest.fixture
def i3():
    return three_detection_instance()


@pytest.fixture
def config():
    return SolverConfig(time_cap_seconds=None)


def random_small_instance(rng: np.random.Generator, max_parts: int = 4, max_dets: int = 8):
    p = int(rng.integers(2, max_parts + 1))
    k = int(rng.integers(1, max_dets // p + 1))
    return generate_instance(p, k, float(rng.uniform(0.5, 2.0)), seed=int(rng.integers(1 << 31)))


def random_pricing_instance(rng: np.random.Generator, max_dets: int = 10):
    """Random tree with extra major parts, dense phi on allowed pairs."""
    n_parts = int(rng.integers(1, 5))
    parts = [f"p{i}" for i in range(n_parts)]
    edges = [(parts[i], parts[int(rng.integers(0, i))]) for i in range(1, n_parts)]
    root = parts[int(rng.integers(0, n_parts))]
    majors = {root} | {p for p in parts if rng.random() < 0.3}
    n_dets = int(rng.integers(n_parts, max(n_parts, max_dets) + 1))
    det_parts = parts + [parts[int(rng.integers(0, n_parts))] for _ in range(n_dets - n_parts)]
    rng.shuffle(det_parts)
    adjacent = {frozenset(e) for e in edges}
    phi = {}
    for a in range(n_dets):
        for b in range(a + 1, n_dets):
            pa, pb = det_parts[a], det_parts[b]
            allowed = pa == pb or root in (pa, pb) or frozenset((pa, pb)) in adjacent
            if allowed and rng.random() < 0.6:
                phi[(a, b)] = float(rng.uniform(-1, 1))
    theta = rng.uniform(-1, 0.5, size=n_dets).tolist()
    return make_instance(parts, edges, root, det_parts, theta, phi, float(rng.uniform(0, 1)),
                         major_parts=sorted(majors), name="rand")
