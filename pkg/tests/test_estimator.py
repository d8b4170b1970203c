"""Tests for the spanning/separated set entropy estimator."""

import math

import numpy as np
import pytest

from switched_entropy.errors import (
    DegenerateFitError,
    EstimationConfigError,
    LatticeTooCoarseError,
    WrongStructureError,
)
from switched_entropy.estimator import (
    EstimationConfig,
    Method,
    entropy_rate,
    fit_log_slope,
    grid_formula_count,
    separated_count,
    spanning_count,
)
from switched_entropy.lie import classify
from switched_entropy.systems import lti_system, scalar_system

SMALL = EstimationConfig(horizons=(2.0, 4.0, 6.0), epsilons=(0.5, 0.25), grid_resolution=32)


@pytest.fixture
def zero_system():
    return scalar_system((0.0,))


@pytest.fixture
def unit_growth():
    return scalar_system((1.0,))


class TestEstimationConfig:
    """Tests for configuration validation."""

    def test_defaults(self):
        config = EstimationConfig()
        assert config.horizons == (4.0, 8.0, 12.0)
        assert config.epsilons == (0.5, 0.25)
        assert config.grid_resolution == 64
        assert config.method is Method.SPANNING_GREEDY

    def test_method_from_string(self):
        assert EstimationConfig(method="grid_formula").method is Method.GRID_FORMULA

    @pytest.mark.parametrize(
        "overrides",
        [
            {"horizons": (4.0, 2.0)},
            {"horizons": (0.0, 1.0)},
            {"epsilons": (0.25, 0.5)},
            {"epsilons": (1.5,)},
            {"grid_resolution": 65},
            {"grid_resolution": 2},
            {"sample_density": 0},
            {"tail_fraction": 0.0},
            {"method": "bogus"},
            {"threads": -1},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(EstimationConfigError):
            EstimationConfig(**overrides)

    def test_explicit_threads(self):
        assert EstimationConfig(threads=3).workers == 3


class TestCounts:
    """Tests for single (T, eps) counts."""

    def test_zero_system(self, zero_system):
        config = EstimationConfig()
        assert spanning_count(zero_system, 1.0, 0.5, config) == 2
        # 0, 0.5 and 1 are pairwise 0.5 apart
        assert separated_count(zero_system, 1.0, 0.5, config) == 3

    def test_scalar_growth_with_zoom(self, unit_growth):
        count = spanning_count(unit_growth, 3.0, 0.25, EstimationConfig())
        assert count == 42
        formula = grid_formula_count(unit_growth, classify(unit_growth.modes), 3.0, 0.25)
        assert formula == 41
        assert formula / 2 <= count <= 2 * formula

    @pytest.mark.parametrize(
        ("T", "eps"), [(0.5, 0.5), (1.0, 0.5), (1.0, 0.1), (2.0, 0.3), (3.0, 0.25)]
    )
    def test_separated_matches_interval_packing(self, unit_growth, T, eps):
        # on [0, 1] with growth e^t the largest separated set has floor(e^T / eps) + 1 points
        exact = math.floor(math.exp(T) / eps) + 1
        count = separated_count(unit_growth, T, eps, EstimationConfig())
        assert 0.85 * exact <= count <= exact

    def test_separated_exact_values(self, unit_growth):
        config = EstimationConfig()
        assert separated_count(unit_growth, 1.0, 0.5, config) == 6
        assert separated_count(unit_growth, 3.0, 0.25, config) == 79
        assert separated_count(unit_growth, 3.0, 0.5, config) == 40

    def test_counts_ignore_configured_epsilons(self, unit_growth):
        wide = EstimationConfig(epsilons=(0.5, 0.25, 0.1, 0.05))
        narrow = EstimationConfig(epsilons=(0.5, 0.25))
        assert separated_count(unit_growth, 3.0, 0.25, wide) == separated_count(
            unit_growth, 3.0, 0.25, narrow
        )
        assert spanning_count(unit_growth, 3.0, 0.25, wide) == spanning_count(
            unit_growth, 3.0, 0.25, narrow
        )

    @pytest.mark.parametrize("T", [1.0, 3.0])
    def test_separated_at_double_eps_below_spanning(self, unit_growth, T):
        config = EstimationConfig()
        assert separated_count(unit_growth, T, 0.5, config) <= spanning_count(
            unit_growth, T, 0.25, config
        )

    def test_separated_respects_diagonal_oracle(self, system_1):
        # coordinates separate independently: floor(e^peak / eps) + 1 per axis
        config = EstimationConfig(grid_resolution=32)
        exact = (math.floor(math.exp(4.0) / 0.25) + 1) * (math.floor(1.0 / 0.25) + 1)
        count = separated_count(system_1, 2.0, 0.25, config)
        assert 0.7 * exact <= count <= exact

    def test_separated_count_grows(self, unit_growth):
        config = EstimationConfig()
        assert separated_count(unit_growth, 3.0, 0.25, config) > separated_count(
            unit_growth, 1.0, 0.25, config
        )

    def test_lattice_too_coarse(self, unit_growth):
        config = EstimationConfig(auto_zoom=False)
        with pytest.raises(LatticeTooCoarseError):
            spanning_count(unit_growth, 3.0, 0.25, config)

    def test_dimension_cap(self):
        with pytest.raises(EstimationConfigError):
            spanning_count(lti_system(np.eye(4)), 1.0, 0.5, EstimationConfig())

    def test_non_positive_eps(self, zero_system):
        with pytest.raises(EstimationConfigError):
            spanning_count(zero_system, 1.0, 0.0, EstimationConfig())


class TestGridFormula:
    """Tests for the closed-form diagonal count."""

    def test_reference_system(self, system_1):
        assert grid_formula_count(system_1, classify(system_1.modes), 2.0, 0.25) == 220

    def test_contracting_coordinate_peaks_at_zero(self):
        system = lti_system(np.diag([-1.0]))
        assert grid_formula_count(system, classify(system.modes), 5.0, 0.25) == 2

    def test_rejects_unstructured(self, sl2_system):
        with pytest.raises(WrongStructureError):
            grid_formula_count(sl2_system, classify(sl2_system.modes), 1.0, 0.5)


class TestFitLogSlope:
    """Tests for fit_log_slope."""

    def test_exact_exponential(self):
        slope, residual = fit_log_slope([1.0, 2.0, 3.0], [10, 100, 1000], tail_fraction=1.0)
        assert slope == pytest.approx(math.log(10))
        assert residual == pytest.approx(0.0, abs=1e-18)

    def test_uses_tail_only(self):
        slope, _ = fit_log_slope([1.0, 2.0, 3.0, 4.0], [1, 1, 10, 100], tail_fraction=0.5)
        assert slope == pytest.approx(math.log(10))

    def test_degenerate_tail(self):
        with pytest.raises(DegenerateFitError):
            fit_log_slope([1.0, 2.0, 3.0], [1, 2, 3], tail_fraction=0.3)


class TestEntropyRate:
    """Tests for entropy_rate."""

    def test_scalar_rate(self, unit_growth):
        result = entropy_rate(unit_growth, SMALL)
        assert result.rate == pytest.approx(1.0, abs=0.15)
        assert result.method is Method.SPANNING_GREEDY

    def test_separated_scalar_rate(self, unit_growth):
        config = EstimationConfig(
            horizons=SMALL.horizons,
            epsilons=SMALL.epsilons,
            grid_resolution=32,
            method=Method.SEPARATED_GREEDY,
        )
        assert entropy_rate(unit_growth, config).rate == pytest.approx(1.0, abs=0.15)

    def test_reference_system_rate(self, system_1):
        result = entropy_rate(system_1, SMALL)
        assert result.rate == pytest.approx(2.0, abs=0.15)
        assert len(result.diagnostics["pair_slopes"]) == 2

    @pytest.mark.parametrize("method", [Method.SPANNING_GREEDY, Method.SEPARATED_GREEDY])
    def test_slopes_agree_across_eps(self, system_1, method):
        config = EstimationConfig(**{**SMALL.to_dict(), "method": method})
        result = entropy_rate(system_1, config)
        slopes = list(result.rates.values())
        assert max(slopes) - min(slopes) < 0.05 * (1 + abs(result.rate))

    def test_grid_formula_rate(self, system_1):
        config = EstimationConfig(method="grid_formula", horizons=(4.0, 8.0, 12.0))
        result = entropy_rate(system_1, config)
        assert result.rate == pytest.approx(2.0, abs=0.05)
        assert result.counts[(4.0, 0.25)] == grid_formula_count(
            system_1, classify(system_1.modes), 4.0, 0.25
        )

    def test_counts_are_monotone(self, system_2):
        result = entropy_rate(system_2, SMALL)
        for T in SMALL.horizons:
            assert result.counts[(T, 0.25)] >= result.counts[(T, 0.5)]
        for eps in SMALL.epsilons:
            column = [result.counts[(T, eps)] for T in SMALL.horizons]
            assert column == sorted(column)

    def test_deterministic(self, system_2):
        first = entropy_rate(system_2, SMALL)
        second = entropy_rate(system_2, EstimationConfig(**{**SMALL.to_dict(), "threads": 1}))
        assert first.counts == second.counts
        assert first.rates == second.rates

    def test_rows_order(self, unit_growth):
        rows = entropy_rate(unit_growth, SMALL).rows()
        assert [(T, eps) for T, eps, *_ in rows] == [
            (2.0, 0.5),
            (2.0, 0.25),
            (4.0, 0.5),
            (4.0, 0.25),
            (6.0, 0.5),
            (6.0, 0.25),
        ]
        T, _, count, normalized = rows[0]
        assert normalized == pytest.approx(math.log(count) / T)

    def test_needs_three_horizons(self, unit_growth):
        config = EstimationConfig(horizons=(1.0, 2.0))
        with pytest.raises(EstimationConfigError):
            entropy_rate(unit_growth, config)

    def test_dimension_cap(self):
        with pytest.raises(EstimationConfigError):
            entropy_rate(lti_system(np.eye(4)), SMALL)
