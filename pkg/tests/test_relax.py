import numpy as np
import pytest

from dopt.infomat import RankDeficientError
from dopt.instance import ModelSpec
from dopt.localsearch import design_info, initial_design, local_search
from dopt.relax import (EPS_KW, RelaxOptions, RowPool, certificate_bound, complete_certificate, dual_certificate,
                        kw_gap, natural_bound_rowgen, solve_restricted)
from dopt.reference import brute_force_optimum, check_certificate, dense_relaxation

SPEC_F1 = ModelSpec("linear", 1, 2)


def _two_row_solution():
    pool = RowPool(SPEC_F1, [(0,), (1,)])
    return pool, solve_restricted(pool, 2.0)


def test_row_pool_dedup():
    pool = RowPool(ModelSpec("linear", 2, 2), [(0, 0), (1, 0), (0, 0)])
    assert len(pool) == 2
    assert pool.add([(1, 0), (1, 1), (1, 1)]) == [2]
    np.testing.assert_array_equal(pool.rows[2], [1, 1, 1])
    assert (1, 1) in pool and (0, 1) not in pool


def test_two_row_relaxation():
    pool, sol = _two_row_solution()
    np.testing.assert_allclose(sol.weights, [1, 1], atol=1e-6)
    assert abs(sol.ldet_value) < 1e-10
    assert abs(kw_gap(pool, sol)) < 1e-9


def test_two_row_certificate():
    pool, sol = _two_row_solution()
    cert = dual_certificate(pool, sol)
    np.testing.assert_allclose(cert.theta, [[1, -1], [-1, 2]], atol=1e-6)
    assert cert.tau == pytest.approx(1.0, abs=1e-8)
    assert cert.upper_bound == pytest.approx(0.0, abs=1e-8)
    assert cert.scope == "pool"


def test_repeated_direction_rank_deficient():
    pool = RowPool(SPEC_F1, [(1,)])
    with pytest.raises(RankDeficientError):
        solve_restricted(pool, 2.0)


def test_scaled_identity_pool():
    # the full 2x2 factorial is already optimal, so the certificate is tight
    spec = ModelSpec("linear", 2, 2)
    pool = RowPool(spec, [(0, 0), (1, 0), (0, 1), (1, 1)])
    sol = solve_restricted(pool, 4.0)
    cert = dual_certificate(pool, sol)
    assert cert.tau == pytest.approx(spec.m / 4.0, rel=1e-6)
    assert cert.upper_bound - sol.ldet_value <= 4 * EPS_KW + 1e-9


@pytest.mark.parametrize("kind,F,L,s", [("linear", 3, 2, 6), ("quadratic", 2, 3, 9), ("quadratic", 3, 3, 13)])
def test_converged_stopping_rule(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    pool = RowPool(spec, [tuple(r) for r in np.ndindex(*(L,) * F)])
    sol = solve_restricted(pool, float(s))
    assert sol.converged
    assert sol.weights.sum() == pytest.approx(s, rel=1e-12)
    assert np.all(sol.weights >= 0)
    g = sol.info.quad_forms(pool.rows)
    assert g.max() <= (spec.m / s) * (1 + 1e-6)
    # trace identity: sum_i x_i g_i = m
    assert float(sol.weights @ g) == pytest.approx(spec.m, rel=1e-9)
    assert g[sol.weights > 0].min() <= spec.m / s + 1e-12 <= g.max() + 1e-9


def test_unoptimised_point_has_positive_gap():
    spec = ModelSpec("linear", 2, 2)
    pool = RowPool(spec, [(0, 0), (1, 0), (0, 1), (1, 1)])
    sol = solve_restricted(pool, 4.0, RelaxOptions(max_iter=0), x0=np.array([4 / 3, 4 / 3, 4 / 3, 0.0]))
    assert kw_gap(pool, sol) > 0
    cert = dual_certificate(pool, sol)
    assert cert.upper_bound > sol.ldet_value


def test_complete_certificate_adds_violation():
    spec = ModelSpec("linear", 2, 2)
    pool = RowPool(spec, [(0, 0), (1, 0), (0, 1)])
    sol = solve_restricted(pool, 4.0)
    cert = dual_certificate(pool, sol)
    full, res = complete_certificate(spec, cert)
    delta = res.best_value - cert.tau
    assert delta > 0
    assert full.upper_bound == pytest.approx(cert.upper_bound + 4.0 * delta, rel=1e-12)
    assert full.scope == "full"
    assert full.upper_bound == pytest.approx(certificate_bound(full.theta, full.tau, 4.0), rel=1e-9)


def test_complete_certificate_no_violation():
    pool, sol = _two_row_solution()
    cert = dual_certificate(pool, sol)
    full, _ = complete_certificate(SPEC_F1, cert)
    assert full.tau == cert.tau
    assert full.upper_bound == cert.upper_bound


def test_rowgen_micro():
    rep = natural_bound_rowgen(SPEC_F1, 2)
    assert rep.bound == pytest.approx(0.0, abs=1e-8)
    assert rep.rounds == 1
    assert not rep.capped


TINY = [("linear", 2, 2, 4), ("linear", 3, 2, 5), ("linear", 2, 3, 5), ("quadratic", 2, 3, 7),
        ("quadratic", 3, 3, 12), ("quadratic", 2, 4, 8)]


@pytest.mark.parametrize("kind,F,L,s", TINY)
def test_rowgen_matches_dense_relaxation(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    rep = natural_bound_rowgen(spec, s)
    _, dense, gap = dense_relaxation(spec, s)
    assert gap <= 1e-8
    assert abs(rep.bound - dense) <= 1e-5
    assert rep.kw_gap <= 1e-6
    assert rep.bound >= rep.relax_value - 1e-8
    assert rep.bound - rep.relax_value <= s * EPS_KW + 1e-6


@pytest.mark.parametrize("kind,F,L,s", TINY)
def test_certificate_exhaustively_feasible(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    cert = natural_bound_rowgen(spec, s).certificate
    assert cert.scope == "full"
    assert check_certificate(spec, cert.theta, cert.tau, s, cert.upper_bound) == []


@pytest.mark.parametrize("kind,F,L,s", TINY[:4])
def test_bound_dominates_integer_optimum(kind, F, L, s):
    spec = ModelSpec(kind, F, L)
    rep = natural_bound_rowgen(spec, s)
    _, best = brute_force_optimum(spec, s)
    assert rep.bound >= best - 1e-8
    d, _ = local_search(spec, s)
    assert rep.bound >= design_info(d).ldet() - 1e-8


def test_history_is_a_valid_sandwich():
    rep = natural_bound_rowgen(ModelSpec("quadratic", 3, 3), 15)
    for relax_value, bound, _ in rep.history:
        assert relax_value <= bound + 1e-9


def test_pool_value_monotone_when_rows_added():
    spec = ModelSpec("quadratic", 2, 3)
    init = initial_design(spec, 8)
    pool = RowPool(spec, init.points())
    sol = solve_restricted(pool, 8.0)
    prev = sol.ldet_value
    x = sol.weights
    for pt in [(2, 2), (2, 1), (1, 2)]:
        pool.add([pt])
        x = np.append(x, 0.0)
        sol = solve_restricted(pool, 8.0, x0=x)
        assert sol.ldet_value >= prev - 1e-12
        prev, x = sol.ldet_value, sol.weights


def test_zero_rounds_still_valid():
    spec = ModelSpec("quadratic", 3, 3)
    rep = natural_bound_rowgen(spec, 12, RelaxOptions(rounds=0))
    cert = rep.certificate
    assert rep.pool_size_final == spec.m
    assert check_certificate(spec, cert.theta, cert.tau, 12, cert.upper_bound) == []
    full = natural_bound_rowgen(spec, 12)
    assert rep.bound >= full.bound - 1e-9


def test_bounded_solve_respects_box():
    spec = ModelSpec("linear", 2, 2)
    pool = RowPool(spec, [(0, 0), (1, 0), (0, 1), (1, 1)])
    lo = np.array([0.0, 1.0, 0.0, 0.0])
    hi = np.array([4.0, 4.0, 4.0, 0.5])
    sol = solve_restricted(pool, 4.0, x0=np.array([1.2, 1.3, 1.2, 0.3]), lower=lo, upper=hi)
    assert np.all(sol.weights >= lo - 1e-12) and np.all(sol.weights <= hi + 1e-12)
    assert sol.weights.sum() == pytest.approx(4.0)
    free = solve_restricted(pool, 4.0)
    assert sol.ldet_value <= free.ldet_value + 1e-12
    # a dense check of optimality over the box: no feasible pairwise shift improves
    V = pool.rows
    base = np.linalg.slogdet((V * sol.weights[:, None]).T @ V)[1]
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            t = min(1e-3, hi[i] - sol.weights[i], sol.weights[j] - lo[j])
            if t <= 1e-9:
                continue
            y = sol.weights.copy()
            y[i] += t
            y[j] -= t
            assert np.linalg.slogdet((V * y[:, None]).T @ V)[1] <= base + 1e-9


def test_budget_must_be_positive():
    pool = RowPool(SPEC_F1, [(0,), (1,)])
    with pytest.raises(ValueError):
        solve_restricted(pool, 0.0)
