import math

import numpy as np
import pytest

from dopt.instance import CapacityError, Design, ModelSpec, encode_point
from dopt.reference import (brute_force_optimum, brute_force_price, check_certificate, dense_relaxation,
                            single_exchange_optimal)


def test_price_zero_q():
    spec = ModelSpec("quadratic", 2, 3)
    res = brute_force_price(spec, np.zeros((6, 6)))
    assert res.best_value == 0.0
    assert encode_point(spec, res.best_point) == 0


def test_price_constant_term():
    spec = ModelSpec("linear", 3, 2)
    Q = np.zeros((4, 4))
    Q[0, 0] = 1.0
    res = brute_force_price(spec, Q)
    assert res.best_value == 1.0
    assert encode_point(spec, res.best_point) == 0


def test_optimum_micro():
    d, val = brute_force_optimum(ModelSpec("linear", 1, 2), 2)
    assert d.support == {(0,): 1, (1,): 1}
    assert abs(val) < 1e-12


def test_optimum_linear_f2_s3_finite():
    d, val = brute_force_optimum(ModelSpec("linear", 2, 2), 3)
    assert math.isfinite(val)
    assert sum(d.support.values()) == 3


def test_optimum_below_m_is_singular():
    d, val = brute_force_optimum(ModelSpec("linear", 2, 2), 2)
    assert d is None and val == -math.inf


def test_optimum_capacity():
    with pytest.raises(CapacityError):
        brute_force_optimum(ModelSpec("quadratic", 3, 3), 12)


def test_dense_relaxation_micro():
    x, val, gap = dense_relaxation(ModelSpec("linear", 1, 2), 2)
    np.testing.assert_allclose(x, [1, 1], atol=1e-6)
    assert abs(val) < 1e-8
    assert gap <= 1e-8


def test_dense_relaxation_feasible():
    x, _, gap = dense_relaxation(ModelSpec("quadratic", 2, 3), 7)
    assert x.sum() == pytest.approx(7.0)
    assert np.all(x >= 0)
    assert gap <= 1e-8


def test_dense_relaxation_capacity():
    with pytest.raises(CapacityError):
        dense_relaxation(ModelSpec("linear", 14, 2), 20)


def test_single_exchange_check():
    spec = ModelSpec("linear", 2, 2)
    opt, _ = brute_force_optimum(spec, 4)
    assert single_exchange_optimal(opt)
    poor = Design(spec, 4, {(0, 0): 2, (1, 0): 1, (0, 1): 1})
    assert not single_exchange_optimal(poor)


def test_check_certificate_flags_problems():
    spec = ModelSpec("linear", 1, 2)
    theta = np.array([[1.0, -1.0], [-1.0, 2.0]])
    assert check_certificate(spec, theta, 1.0, 2.0, 0.0) == []
    low = check_certificate(spec, theta, 0.5, 2.0, -1.0)
    assert any(p.startswith("row 0") for p in low)
    assert any("bound" in p for p in check_certificate(spec, theta, 1.0, 2.0, 0.5))
    assert check_certificate(spec, -theta, 1.0, 2.0, 0.0) == ["theta is not positive definite"]
