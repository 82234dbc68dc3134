import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benders_ttf.bcg import (BendersRow, init_rows, master_lower_bound, master_program, run_bcg,
                             solve_master_restricted, solve_subproblem_dual, sub_lower_bound)
from benders_ttf.columns import ColumnPool, Skeleton
from benders_ttf.model import SolverConfig, make_instance

from conftest import random_small_instance


def zero_rows(inst):
    return [[BendersRow.zero(inst, r)] for r in range(inst.n_parts)]


def test_init_rows_i3(i3, config):
    rows = init_rows(i3, config)
    neck, head = rows
    assert neck.const_term == pytest.approx(0.0, abs=1e-9)
    assert neck.value(np.zeros(3)) == pytest.approx(0.0, abs=1e-9)
    assert not head.lam1.any() and not head.lam2.any() and not head.lam3.any()
    # with gamma = 0 no local assignment is payable, so lam3 has to absorb them
    assert neck.lam3.sum() > 0


def test_init_rows_nonnegative_costs(config):
    inst = make_instance(["a"], [], "a", ["a"] * 3, [1, 1, 1], {(0, 1): 1.0}, 1.0)
    for row in init_rows(inst, config):
        assert row.const_term == 0.0
        assert not row.lam1.any() and not row.lam2.any() and not row.lam3.any()


def test_master_empty_pool(i3, config):
    sol = solve_master_restricted(i3, ColumnPool.for_instance(i3), zero_rows(i3), config)
    assert sol.gamma.size == 0
    assert sol.ell.tolist() == [0.0, 0.0]
    assert sol.objective == 0.0


def test_master_single_skeleton(i3, config):
    pool = ColumnPool.for_instance(i3)
    pool.add_skeleton(Skeleton.build([0, 1], i3))
    sol = solve_master_restricted(i3, pool, zero_rows(i3), config)
    assert sol.gamma.tolist() == pytest.approx([1.0])
    assert sol.objective == pytest.approx(-1.4)


def test_master_needs_rows(i3):
    with pytest.raises(ValueError):
        master_program(i3, ColumnPool.for_instance(i3), [[], []])


def test_subproblem_neck_with_d1_selected(i3, config):
    pool = ColumnPool.for_instance(i3)
    row, obj = solve_subproblem_dual(i3, 0, np.array([1.0, 1.0, 0.0]), pool, config)
    assert obj == pytest.approx(-0.5, abs=1e-6)
    assert pool.has_local(0, 0, [2])
    assert row.value(np.array([1.0, 1.0, 0.0])) == pytest.approx(-0.5, abs=1e-6)


def test_subproblem_head_is_zero(i3, config):
    for m in (np.zeros(3), np.ones(3), np.array([0.3, 0.7, 0.2])):
        _, obj = solve_subproblem_dual(i3, 1, m, ColumnPool.for_instance(i3), config)
        assert obj == 0.0


def test_subproblem_nonnegative_costs(config):
    inst = make_instance(["a"], [], "a", ["a"] * 2, [1, 1], {}, 1.0)
    row, obj = solve_subproblem_dual(inst, 0, np.zeros(2), ColumnPool.for_instance(inst), config)
    assert obj == 0.0 and row.const_term == 0.0


def test_sub_lower_bound_examples(i3):
    z = np.zeros(3)
    assert sub_lower_bound(i3, 0, z, z, z, z) == pytest.approx(-1.6)
    assert sub_lower_bound(i3, 1, z, z, z, z) == 0.0
    with pytest.raises(ValueError):
        sub_lower_bound(i3, 0, z, -np.ones(3), z, z)


def test_master_lower_bound_example(i3):
    bound = master_lower_bound(i3, zero_rows(i3), np.zeros(3), [np.ones(1), np.ones(1)])
    assert bound == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        master_lower_bound(i3, zero_rows(i3), np.zeros(3), [np.zeros(1), np.ones(1)])


def test_master_lower_bound_without_major_detections():
    inst = make_instance(["a", "b"], [("a", "b")], "a", ["b"], [-1.0], {}, 0.0)
    rows = zero_rows(inst)
    assert master_lower_bound(inst, rows, np.array([0.5]), [np.ones(1), np.ones(1)]) == -0.5


def test_run_bcg_i3(i3, config):
    res = run_bcg(i3, config)
    assert res.converged and not res.timed_out
    assert res.objective == pytest.approx(-1.9, abs=1e-6)
    assert res.lower_bound == pytest.approx(-1.9, abs=1e-6)
    assert res.pool.has_skeleton([0, 1])
    assert res.pool.has_local(0, 0, [2])
    assert res.trace.to_csv().splitlines()[0] == "iter,objective,lower_bound,time_s"


def test_run_bcg_nonnegative_costs(config):
    inst = make_instance(["a", "b"], [("a", "b")], "a", ["a", "b", "a"], [0.5, 0.2, 0.0],
                         {(0, 1): 0.1}, 0.3)
    res = run_bcg(inst, config)
    assert res.objective == 0.0
    assert res.pool.skeletons == []


def test_time_cap_zero_stops_after_one_iteration(i3):
    res = run_bcg(i3, SolverConfig(time_cap_seconds=0.0))
    assert res.timed_out and res.iterations == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bcg_bounds_and_rows(seed):
    rng = np.random.default_rng(seed)
    inst = random_small_instance(rng)
    config = SolverConfig(time_cap_seconds=None)
    res = run_bcg(inst, config)
    assert res.converged
    final = res.objective
    assert res.lower_bound == pytest.approx(final, abs=1e-6)
    for rec in res.trace.records:
        assert rec.lower_bound <= final + 1e-6
    for rec in res.subproblems:
        for lb in rec.inner_lower_bounds:
            assert lb <= rec.objective + 1e-6
        # the last inner iterate is the converged one, so its bound is tight
        assert rec.inner_lower_bounds[-1] == pytest.approx(rec.objective, abs=1e-6)
    # every pooled row is a valid lower estimate of its sub-problem at the final gamma
    for part, part_rows in enumerate(res.rows):
        _, exact = solve_subproblem_dual(inst, part, res.master.marginals, ColumnPool.for_instance(inst),
                                         config)
        for row in part_rows:
            assert row.value(res.master.marginals) <= exact + 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bias_does_not_move_objective(seed):
    inst = random_small_instance(np.random.default_rng(seed))
    eps = SolverConfig().bias_for(inst)
    a = run_bcg(inst, SolverConfig(time_cap_seconds=None, bias_epsilon=eps)).objective
    b = run_bcg(inst, SolverConfig(time_cap_seconds=None, bias_epsilon=eps / 10)).objective
    assert abs(a - b) <= 10 * eps * inst.n_detections
