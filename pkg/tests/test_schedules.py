import math

import pytest
from hypothesis import given, strategies as st

from ksubstream.core import InvalidBudget, ParameterOutOfRange
from ksubstream.schedules import (
    MONOTONE_D,
    MONOTONE_D_LARGE,
    PARTITION_D_LARGE,
    CoefficientSchedule,
    alpha_monotone,
    alpha_partition_nonmon,
    c_from_d,
    exp_approx_lower_bound,
    growth,
    knapsack_params,
    minimize_q,
    monotone_d,
    q_monotone,
    q_nonmon_alpha,
    q_nonmon_ksub,
    q_partition_nonmon,
)

# [DERIVED] computed once with plain float pow outside the package
C_FROZEN = {
    (2, 1.0642): 1.53206665913523,
    (3, 1.0893): 1.3631530930341529,
    (4, 1.1461): 1.2337381041407174,
}


@pytest.mark.parametrize("key", sorted(C_FROZEN))
def test_c_frozen(key):
    assert c_from_d(*key) == pytest.approx(C_FROZEN[key], rel=1e-12)


def test_n1_d1():
    assert c_from_d(1, 1.0) == pytest.approx(2.0)
    assert q_monotone(1, 1.0) == pytest.approx(4.0)


def test_large_n_limit_of_c():
    d = MONOTONE_D_LARGE
    assert c_from_d(10**7, d) == pytest.approx((1 + d) / math.expm1(d), rel=1e-6)
    assert (1 + d) / math.expm1(d) == pytest.approx(1.0000932, abs=1e-6)


def test_d_large_root():
    # d solves e^d - d - 2 = 0 to table precision
    assert math.exp(MONOTONE_D_LARGE) - MONOTONE_D_LARGE - 2 == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("n,expected", [(1, 0.25), (2, 0.27807), (3, 0.28965)])
def test_table_monotone(n, expected):
    assert 1 / q_monotone(n, monotone_d(n)) == pytest.approx(expected, abs=1e-5)


def test_monotone_d_lookup():
    assert monotone_d(2) == MONOTONE_D[2]
    assert monotone_d(50) == MONOTONE_D_LARGE
    with pytest.raises(InvalidBudget):
        monotone_d(0)


def test_q_domains():
    with pytest.raises(ParameterOutOfRange):
        q_monotone(2, 0.9)
    with pytest.raises(ParameterOutOfRange):
        q_nonmon_ksub(2, 0.4)
    with pytest.raises(ParameterOutOfRange):
        q_partition_nonmon(2, 1.0, 0.0)
    with pytest.raises(ParameterOutOfRange):
        c_from_d(2, 0.0)


def test_nonmon_is_double():
    assert q_nonmon_ksub(3, 1.0893) == pytest.approx(2 * q_monotone(3, 1.0893))
    assert q_nonmon_alpha(3, 1.0893, 0.5) == pytest.approx(q_nonmon_ksub(3, 1.0893))


def test_partition_large_limit():
    p = 1 / (1 + PARTITION_D_LARGE)
    assert (1 - p) / q_partition_nonmon(10**7, PARTITION_D_LARGE, p) == pytest.approx(0.1921, abs=1e-4)
    assert alpha_partition_nonmon(1) == pytest.approx(0.175, abs=1e-9)


def test_knapsack_frozen():
    ks = knapsack_params(0.34)
    assert ks.c == pytest.approx(1.2487588177248286, rel=1e-12)
    assert ks.q == pytest.approx(3.9284702950072887, rel=1e-12)
    assert ks.bound == pytest.approx(0.66 / 3.9284702950072887, rel=1e-12)


def test_knapsack_small_eps_near_limit():
    q = knapsack_params(0.01).q
    assert abs(q / (2 + MONOTONE_D_LARGE) - 1) < 0.01


def test_knapsack_rejects_eps():
    with pytest.raises(ParameterOutOfRange):
        knapsack_params(0.0)
    with pytest.raises(ParameterOutOfRange):
        knapsack_params(1.5)


def test_knapsack_threshold_truncates_at_one():
    ks = knapsack_params(0.5)
    full = ks.threshold([(2.0, 0.6), (1.0, 0.6)])
    assert full == pytest.approx(2 * ks.integral(0, 0.6) + ks.integral(0.6, 1.0))
    assert ks.threshold([]) == 0.0


def test_knapsack_single_item_closed_form():
    ks = knapsack_params(1.0)
    w = 3.0
    assert ks.threshold([(w, 1.0)]) == pytest.approx(w * ks.c * math.expm1(ks.d) / ks.d)


def test_minimize_q_matches_tables():
    assert minimize_q(1) == pytest.approx(1.0)
    assert minimize_q(10**6) == pytest.approx(MONOTONE_D_LARGE, abs=1e-3)
    for n in (2, 3, 5):
        assert q_monotone(n, minimize_q(n)) <= q_monotone(n, monotone_d(n)) + 1e-12


def test_exp_approx_bound_frozen():
    assert exp_approx_lower_bound(4, 3, 1.1461) == pytest.approx(0.807993, abs=1e-6)
    assert exp_approx_lower_bound(11, 10, 1.9532) == pytest.approx(0.930220, abs=1e-6)
    with pytest.raises(ParameterOutOfRange):
        exp_approx_lower_bound(2, 3, 1.0)


@given(st.integers(4, 400))
def test_exp_approx_is_a_lower_bound(n):
    d = MONOTONE_D_LARGE
    # factor 1 - 1/(1 + d/n)^n against its limit 1 - e^-d
    actual = -math.expm1(-n * math.log1p(d / n)) / -math.expm1(-d)
    assert exp_approx_lower_bound(n, 4, d) <= actual + 1e-12


@given(st.integers(1, 10**5), st.floats(0.05, 5.0))
def test_coefficients_sum(n, d):
    sched = CoefficientSchedule.from_d([n], [d])
    c = sched.c[0]
    total = math.fsum(sched.coefficients(0))
    # geometric sum of g equals c/d * (growth - 1) = (1 + d)/d
    assert total == pytest.approx((1 + d) / d, rel=1e-9)
    # balancing identity
    assert 1 + d + c == pytest.approx(c * growth(n, d), rel=1e-9)


@given(st.integers(1, 200), st.floats(0.05, 5.0))
def test_coefficients_increasing(n, d):
    g = CoefficientSchedule.from_d([n], [d]).coefficients(0)
    assert all(a < b for a, b in zip(g, g[1:]))


@given(st.lists(st.floats(0, 100), max_size=6))
def test_threshold_zero_padding(weights):
    sched = CoefficientSchedule.monotone([6])
    ws = sorted(weights, reverse=True)
    padded = ws + [0.0] * (6 - len(ws))
    assert sched.threshold(0, ws) == pytest.approx(sched.threshold(0, padded))


def test_modified_quarters_c():
    sched = CoefficientSchedule.monotone([2, 3])
    mod = sched.with_modified()
    assert mod.modified and mod.with_modified() is mod
    assert mod.c == pytest.approx(tuple(c / 4 for c in sched.c))
    assert knapsack_params(0.34).with_modified().c == pytest.approx(knapsack_params(0.34).c / 4)


def test_partition_schedule():
    sched, p = CoefficientSchedule.partition_nonmon([1, 3, 12])
    assert p == 0.3
    assert sched.d == pytest.approx((1.0, 2.0654, 7 / 3))
    sched, p = CoefficientSchedule.partition_nonmon([11, 20])
    assert p == pytest.approx(1 / (1 + PARTITION_D_LARGE))


def test_alpha_monotone_n1():
    assert alpha_monotone(1) == pytest.approx(0.25)
