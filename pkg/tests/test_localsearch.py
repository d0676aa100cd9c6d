import math

import numpy as np
import pytest

from dopt.instance import InstanceError, ModelSpec, encode_point, materialize_dense
from dopt.localsearch import (EPS_IMP, InfeasibleError, SearchOptions, best_exchange, design_info, exchange_gain,
                              initial_design, local_search, scan_exchanges)
from dopt.oracle import TIE_RTOL
from dopt.reference import brute_force_optimum, single_exchange_optimal


def test_initial_design_linear():
    spec = ModelSpec("linear", 2, 2)
    d = initial_design(spec, 3)
    assert d.support == {(0, 0): 1, (1, 0): 1, (0, 1): 1}
    _, rows, _ = d.rows_and_mults()
    assert abs(abs(np.linalg.det(rows)) - 1.0) < 1e-12


def test_initial_design_quadratic_extras():
    spec = ModelSpec("quadratic", 2, 3)
    d = initial_design(spec, 8)
    assert len(d.support) == 6
    assert d.support[(0, 0)] == 2 and d.support[(1, 0)] == 2
    assert sorted(d.support.values()) == [1, 1, 1, 1, 2, 2]


def test_initial_design_linear_f3():
    d = initial_design(ModelSpec("linear", 3, 2), 4)
    assert set(d.support.values()) == {1}
    assert math.isfinite(design_info(d).ldet())


def test_initial_design_errors():
    with pytest.raises(InfeasibleError):
        initial_design(ModelSpec("linear", 3, 2), 3)
    with pytest.raises(InstanceError, match="L >= 3"):
        initial_design(ModelSpec("quadratic", 2, 2), 10)


@pytest.mark.parametrize("kind,F,L", [("linear", 5, 2), ("quadratic", 4, 3), ("quadratic", 3, 5)])
def test_initial_design_invertible(kind, F, L):
    spec = ModelSpec(kind, F, L)
    for s in (spec.m, spec.m + 1, 3 * spec.m + 2):
        d = initial_design(spec, s)
        assert sum(d.support.values()) == s
        assert math.isfinite(design_info(d).ldet())


def test_exchange_gain_arithmetic():
    # det(B)=4, det(M)=2, oracle value 1.2
    assert exchange_gain(math.log(4), math.log(2), 1.2) == pytest.approx(math.log(1.1))


def test_best_exchange_none_at_optimum():
    spec = ModelSpec("linear", 2, 2)
    opt, _ = brute_force_optimum(spec, 4)
    assert best_exchange(opt, design_info(opt), spec) is None


def test_all_singular_removals_give_no_move():
    spec = ModelSpec("linear", 3, 2)
    d = initial_design(spec, spec.m)
    cands = scan_exchanges(d, design_info(d), spec)
    assert all(c.singular for c in cands)
    assert best_exchange(d, design_info(d), spec) is None
    _, trace = local_search(spec, spec.m)
    assert trace.iterations == []
    assert trace.skipped_singular == spec.m


def test_micro_instance_unique_design():
    spec = ModelSpec("linear", 1, 2)
    d, _ = local_search(spec, 2)
    assert d.support == {(0,): 1, (1,): 1}
    assert abs(design_info(d).ldet()) < 1e-12


def test_matches_brute_force_small():
    spec = ModelSpec("linear", 2, 2)
    d, _ = local_search(spec, 4)
    _, best = brute_force_optimum(spec, 4)
    assert design_info(d).ldet() >= best - 1e-6


def test_welch_instance_monotone():
    spec = ModelSpec("quadratic", 3, 3)
    d, trace = local_search(spec, 10)
    assert design_info(d).ldet() >= trace.initial_ldet


@pytest.mark.parametrize("kind,F,L,s", [("linear", 4, 2, 9), ("quadratic", 2, 3, 9), ("quadratic", 3, 3, 14),
                                        ("linear", 3, 3, 7)])
def test_trace_invariants(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    d0 = initial_design(spec, s)
    design, trace = local_search(spec, s)
    prev = trace.initial_ldet
    cur = d0
    for val, move in trace.iterations:
        assert move.delta_ldet > EPS_IMP * max(1.0, abs(prev))
        assert val > prev
        cur = cur.moved(move.leave, move.enter)
        assert sum(cur.support.values()) == s
        # incremental ldet agrees with a rebuild
        rebuilt = design_info(cur).ldet()
        assert abs(val - rebuilt) <= 1e-8 * max(1.0, abs(rebuilt))
        assert abs(val - prev - move.delta_ldet) <= 1e-8 * max(1.0, abs(val))
        prev = val
    assert cur == design
    assert single_exchange_optimal(design)


@pytest.mark.parametrize("kind,F,L,s", [("linear", 3, 3, 6), ("quadratic", 2, 3, 8), ("quadratic", 3, 3, 12)])
def test_entering_row_matches_dense_scan(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    A = materialize_dense(spec)
    design, _ = local_search(spec, s, SearchOptions(max_iterations=2))
    info = design_info(design)
    for c in scan_exchanges(design, info, spec):
        if c.singular:
            continue
        vals = np.einsum("ij,jk,ik->i", A, c.reduced.inverse(), A)
        vstar = vals.max()
        idx = int(np.flatnonzero(vals >= vstar - TIE_RTOL * max(1.0, abs(vstar)))[0])
        assert encode_point(spec, c.enter) == idx


def test_threads_identical():
    spec = ModelSpec("quadratic", 3, 3)
    a, ta = local_search(spec, 15, SearchOptions(threads=1))
    b, tb = local_search(spec, 15, SearchOptions(threads=4))
    assert a == b
    assert [v for v, _ in ta.iterations] == [v for v, _ in tb.iterations]


def test_restarts_seeded():
    spec = ModelSpec("linear", 5, 2)
    a, ta = local_search(spec, 12, SearchOptions(restarts=3, seed=7))
    b, tb = local_search(spec, 12, SearchOptions(restarts=3, seed=7))
    assert a == b
    assert ta.restart_ldets == tb.restart_ldets
    assert len(ta.restart_ldets) == 3
    plain, _ = local_search(spec, 12)
    assert design_info(a).ldet() >= design_info(plain).ldet() - 1e-12


def test_max_iterations():
    spec = ModelSpec("quadratic", 3, 3)
    _, trace = local_search(spec, 15, SearchOptions(max_iterations=1))
    assert len(trace.iterations) == 1


def test_start_design_budget_checked():
    spec = ModelSpec("linear", 2, 2)
    with pytest.raises(InstanceError):
        local_search(spec, 5, start=initial_design(spec, 4))
