from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softshed.model import (
    AllocationResult,
    DemandProfile,
    DomainError,
    InfeasibleAllocationError,
    Method,
    SupplySpec,
    marginal_utility,
    utility_value,
    validate_alpha,
    welfare,
)

ALPHAS = [0.0, 0.5, 1.0, 2.0, 5.0]


class TestUtility:
    def test_log_at_e(self):
        assert utility_value(math.e, 1) == pytest.approx(1.0, abs=1e-15)

    def test_half_power(self):
        assert utility_value(4, 0.5) == 4.0

    def test_alpha_two(self):
        assert utility_value(2, 2) == -0.5

    def test_zero_allocation(self):
        assert utility_value(0, 0.5) == 0.0
        with pytest.raises(DomainError):
            utility_value(0, 1)
        with pytest.raises(DomainError):
            utility_value(0, 3)

    @pytest.mark.parametrize("bad", [-1.0, math.nan])
    def test_rejects_bad_x(self, bad):
        with pytest.raises(DomainError):
            utility_value(bad, 1)

    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            validate_alpha(-0.1)
        with pytest.raises(ValueError):
            utility_value(1.0, -1)

    def test_huge_alpha_stays_finite_or_signed(self):
        assert utility_value(0.5, 10000) == -math.inf
        assert utility_value(2.0, 10000) == pytest.approx(0.0, abs=1e-300)


class TestMarginal:
    def test_values(self):
        for a in ALPHAS:
            assert marginal_utility(1, a) == 1
        assert marginal_utility(2, 2) == 0.25
        assert marginal_utility(3.5, 1) == pytest.approx(2 / 7, rel=1e-15)

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            marginal_utility(0, 1)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_matches_finite_difference(self, alpha):
        for x in np.geomspace(0.1, 100, 25):
            h = 1e-5 * x
            fd = (utility_value(x + h, alpha) - utility_value(x - h, alpha)) / (2 * h)
            assert fd == pytest.approx(marginal_utility(x, alpha), rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0.01, 50),
    b=st.floats(0.01, 50),
    alpha=st.sampled_from([0.5, 1.0, 2.0, 5.0]),
)
def test_increasing_and_concave(a, b, alpha):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6 * hi:
        return
    assert utility_value(lo, alpha) < utility_value(hi, alpha)
    mid = utility_value((lo + hi) / 2, alpha)
    assert mid >= (utility_value(lo, alpha) + utility_value(hi, alpha)) / 2


def test_linear_when_alpha_zero():
    assert utility_value(3.0, 0) == 3.0
    assert utility_value(2.0, 0) == (utility_value(1.0, 0) + utility_value(3.0, 0)) / 2


class TestWelfare:
    def test_examples(self):
        assert welfare([1, 1, 1], 1) == 0
        assert welfare([4, 4], 0.5) == 8
        assert welfare([1, 2, 3], 1) == pytest.approx(math.log(6), rel=1e-14)

    def test_accepts_result(self):
        res = AllocationResult.build([1.0, 2.0, 3.0], Method.MAX_MIN, 6.0)
        assert welfare(res, 1) == pytest.approx(math.log(6))

    def test_names_offending_household(self):
        with pytest.raises(DomainError) as info:
            welfare([1.0, 0.0, 2.0], 1)
        assert info.value.index == 1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 100), min_size=1, max_size=30), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, xs, rnd):
        ys = list(xs)
        rnd.shuffle(ys)
        for a in (0.5, 1.0, 2.0):
            assert welfare(xs, a) == welfare(ys, a)


class TestDemandProfile:
    def test_basic(self):
        p = DemandProfile.from_demands([1, 2, 3])
        assert p.n == 3 and p.total == 6.0
        assert p.household_ids == (0, 1, 2)
        with pytest.raises(ValueError):
            p.demands[0] = 5

    @pytest.mark.parametrize("d", [[], [0, 0], [1, -1], [1, math.inf], [[1, 2]]])
    def test_rejects(self, d):
        with pytest.raises(ValueError):
            DemandProfile.from_demands(d)

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            DemandProfile.from_demands([1, 2], ids=["a", "a"])


class TestSupply:
    def test_shortfall(self):
        p = DemandProfile.from_demands([10, 30])
        assert SupplySpec.from_shortfall(0.25).amount(p) == 30.0
        assert SupplySpec.from_shortfall(0.0).amount(p) == 40.0

    def test_exactly_one(self):
        with pytest.raises(ValueError):
            SupplySpec()
        with pytest.raises(ValueError):
            SupplySpec(supply=1.0, shortfall_fraction=0.1)

    @pytest.mark.parametrize("f", [-0.1, 1.0, 1.5])
    def test_shortfall_range(self, f):
        with pytest.raises(ValueError):
            SupplySpec.from_shortfall(f)

    def test_excess_supply(self):
        p = DemandProfile.from_demands([1, 1])
        with pytest.raises(ValueError):
            SupplySpec(supply=2.5).amount(p)


def test_check_feasible_message():
    p = DemandProfile.from_demands([1, 2])
    res = AllocationResult.build([1.5, 1.5], Method.EQUITABLE, 3.0)
    with pytest.raises(InfeasibleAllocationError, match="x_1 > d_1"):
        res.check_feasible(p)
