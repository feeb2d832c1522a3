from __future__ import annotations

import numpy as np
import pytest

from softshed.allocators import alpha_fair
from softshed.model import DemandProfile, SupplySpec, welfare
from softshed.oracle import (
    GRID_MAX_HOUSEHOLDS,
    grid_oracle,
    project_capped_simplex,
    projected_gradient_oracle,
    reference_progressive_filling,
)

from conftest import make


class TestGrid:
    def test_log_instance(self):
        p, s = make([1, 2, 3], 3)
        np.testing.assert_allclose(grid_oracle(p, s, 1.0, resolution=1e-3).allocations, [1, 1, 1], atol=5e-3)

    def test_refinement_converges(self):
        p, s = make([1, 2, 3], 3)
        for res in (1e-2, 1e-4, 1e-7):
            x = grid_oracle(p, s, 1.0, resolution=res).allocations
            np.testing.assert_allclose(x, [1, 1, 1], atol=10 * res)

    def test_single_household(self):
        p, s = make([5], 3)
        np.testing.assert_array_equal(grid_oracle(p, s, 2.0).allocations, [3])

    def test_zero_shortfall(self):
        p, s = make([1, 1], 2)
        np.testing.assert_allclose(grid_oracle(p, s, 1.0).allocations, [1, 1], atol=1e-9)

    def test_size_limit(self):
        p, s = make(np.ones(GRID_MAX_HOUSEHOLDS + 1), 3)
        with pytest.raises(ValueError):
            grid_oracle(p, s, 1.0)

    def test_never_beats_solver(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            n = int(rng.integers(2, 5))
            p = DemandProfile.from_demands(rng.uniform(0.1, 10, n))
            s = SupplySpec.from_shortfall(float(rng.uniform(0.05, 0.6)))
            for a in (0.5, 1.0, 2.0):
                g = grid_oracle(p, s, a)
                assert welfare(g, a) <= welfare(alpha_fair(p, s, a), a) + 1e-6


class TestProjection:
    def test_inside_is_fixed(self):
        d = np.array([2.0, 4.0, 6.0])
        y = np.array([1.0, 3.0, 5.0])
        np.testing.assert_allclose(project_capped_simplex(y, d, 9.0), y)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = 4
            d = rng.uniform(0.5, 3, n)
            S = float(rng.uniform(0.2, 0.9)) * d.sum()
            y = rng.normal(0, 3, n)
            x = project_capped_simplex(y, d, S)
            assert abs(x.sum() - S) < 1e-9 and np.all(x >= 0) and np.all(x <= d)
            # optimality of clip(y - tau): residuals equal on the free coordinates
            free = (x > 1e-12) & (x < d - 1e-12)
            if free.sum() > 1:
                r = (y - x)[free]
                assert np.ptp(r) < 1e-9


class TestPGD:
    @pytest.mark.parametrize("d,S,a,want", [
        ([1, 2, 3], 3, 1.0, [1, 1, 1]),
        ([2, 4, 6], 9, 1.0, [2, 3.5, 3.5]),
        ([1, 4], 3, 2.0, [1, 2]),
    ])
    def test_examples(self, d, S, a, want):
        p, s = make(d, S)
        np.testing.assert_allclose(projected_gradient_oracle(p, s, a).allocations, want, atol=1e-4)

    def test_alpha_zero_rejected(self):
        p, s = make([1, 2], 2)
        with pytest.raises(ValueError):
            projected_gradient_oracle(p, s, 0.0)

    def test_agrees_with_grid(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            p = DemandProfile.from_demands(rng.uniform(0.1, 10, n))
            s = SupplySpec.from_shortfall(float(rng.choice([0.05, 0.2, 0.4, 0.6])))
            for a in (0.5, 1.0, 2.0):
                np.testing.assert_allclose(
                    projected_gradient_oracle(p, s, a).allocations, grid_oracle(p, s, a).allocations, atol=1e-3
                )


class TestFilling:
    @pytest.mark.parametrize("d,S,want", [
        ([2, 4, 6], 9, [2, 3.5, 3.5]),
        ([5, 5], 4, [2, 2]),
        ([1, 2, 3], 6, [1, 2, 3]),
    ])
    def test_examples(self, d, S, want):
        p, s = make(d, S)
        np.testing.assert_allclose(reference_progressive_filling(p, s).allocations, want, atol=1e-12)

    def test_events_counted(self):
        p, s = make([1, 2, 3, 10], 9)
        res = reference_progressive_filling(p, s)
        assert res.iterations == 3
        np.testing.assert_allclose(res.allocations, [1, 2, 3, 3])
