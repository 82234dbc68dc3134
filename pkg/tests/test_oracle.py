import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benders_ttf.model import generate_instance, make_instance
from benders_ttf.oracle import (ENUMERATION_LIMIT, OracleSizeError, enumerate_all_locals,
                                enumerate_all_skeletons, full_pool, solve_exact)


def test_i3_enumeration(i3):
    skels = enumerate_all_skeletons(i3)
    assert [s.members for s in skels] == [(0,), (0, 1), (1, 2), (2,)]
    neck, head = enumerate_all_locals(i3, 1)
    assert [la.key for la in neck] == [(0, (2,)), (2, (0,))]
    assert head == []


def test_single_detection():
    inst = generate_instance(1, 1, 1.0, 0)
    assert len(enumerate_all_skeletons(inst)) == 1
    assert enumerate_all_locals(inst) == [[]]


def test_i3_exact(i3):
    sol = solve_exact(i3)
    assert sol.objective == pytest.approx(-1.9)
    assert [p.to_dict() for p in sol.poses] == [{"skeleton": [0, 1], "locals": [{"global": 0, "locals": [2]}]}]


def test_zero_costs_give_empty_solution():
    inst = make_instance(["a", "b"], [("a", "b")], "a", ["a", "b"], [0.0, 0.0], {}, 0.5)
    sol = solve_exact(inst)
    assert sol.objective == 0.0 and sol.poses == []


def test_lone_detection():
    inst = make_instance(["a"], [], "a", ["a"], [-2.0], {}, 1.0)
    sol = solve_exact(inst)
    assert sol.objective == -1.0
    assert [p.skeleton.members for p in sol.poses] == [(0,)]


def test_size_guard():
    inst = generate_instance(6, 10, 1.0, 0)
    assert 11 ** 6 > ENUMERATION_LIMIT
    with pytest.raises(OracleSizeError):
        solve_exact(inst)


def test_full_pool_contains_everything(i3):
    pool = full_pool(i3)
    assert len(pool.skeletons) == 4 and pool.n_locals == 2


def relabel(inst, perm):
    """Copy of ``inst`` with detection i renamed perm[i]."""
    n = inst.n_detections
    det_parts = [None] * n
    theta = [0.0] * n
    for i, det in enumerate(inst.detections):
        det_parts[perm[i]] = det.part
        theta[perm[i]] = inst.costs.theta[i]
    phi = {(perm[a], perm[b]): w for (a, b), w in inst.costs.phi.items()}
    pg = inst.part_graph
    return make_instance(list(pg.parts), [tuple(e) for e in pg.tree_edges], pg.star_root, det_parts, theta,
                         phi, inst.costs.omega, major_parts=sorted(pg.major_parts))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([None, 1, 2]))
def test_permutation_invariance(seed, cap):
    rng = np.random.default_rng(seed)
    inst = generate_instance(int(rng.integers(1, 4)), int(rng.integers(1, 4)), 1.0, seed)
    perm = rng.permutation(inst.n_detections)
    assert solve_exact(relabel(inst, perm), cap).objective == pytest.approx(solve_exact(inst, cap).objective,
                                                                          abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_larger_cap_never_hurts(seed):
    inst = generate_instance(2, 3, 1.0, seed)
    assert solve_exact(inst, None).objective <= solve_exact(inst, 1).objective + 1e-12
