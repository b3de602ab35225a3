# CSD Test Toolkit - null distributions and critical values

import itertools
import math
import sys
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from src.config import Settings
from src.errors import InvalidParameterError, UnsupportedSizeError
from src.models import EffectiveSample, NullMethod, StatisticKind
from src.services.nulldist import (
    achieved_level,
    critical_value,
    critical_value_table,
    exact_null_cdf,
    limiting_critical_value,
    mc_null_cdf,
    null_distribution,
    p_value,
    permutation_critical_value,
    permutation_null,
    scaled_critical_value,
    statistic_null_distribution,
    support_of_delta,
)


def brute_force_sup_counts(q_y, q_x):
    """Count interleavings by the numerator of max(0, max_k Delta) over all placements of the Y labels."""
    q = q_y + q_x
    counts = Counter()
    for y_positions in itertools.combinations(range(q), q_y):
        chosen = set(y_positions)
        i = j = 0
        best = 0
        for position in range(q):
            if position in chosen:
                i += 1
            else:
                j += 1
            best = max(best, i * q_x - j * q_y)
        counts[best] += 1
    return counts


class TestSupport:
    """Test the lattice of attainable Delta values."""

    def test_one_one(self):
        assert support_of_delta(1, 1).tolist() == [-1.0, 0.0, 1.0]

    def test_two_two(self):
        assert support_of_delta(2, 2).tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]

    def test_symmetric_for_equal_sizes(self):
        values = support_of_delta(5, 5)
        assert np.allclose(values, -values[::-1])

    def test_invalid_size(self):
        with pytest.raises(InvalidParameterError):
            support_of_delta(0, 3)


class TestExactNullCdf:
    """Test the lattice-path DP against enumeration."""

    def test_one_one(self):
        nd = exact_null_cdf(1, 1)
        assert nd.support.tolist() == [0.0, 1.0]
        assert nd.cdf.tolist() == [0.5, 1.0]

    def test_two_two(self):
        nd = exact_null_cdf(2, 2)
        assert nd.support.tolist() == [0.0, 0.5, 1.0]
        assert nd.cdf.tolist() == [1 / 3, 5 / 6, 1.0]
        assert nd.method == NullMethod.EXACT

    @pytest.mark.parametrize("q_y,q_x", [(a, b) for a in range(1, 7) for b in range(1, 7)])
    def test_matches_brute_force(self, q_y, q_x):
        nd = exact_null_cdf(q_y, q_x)
        counts = brute_force_sup_counts(q_y, q_x)
        total = math.comb(q_y + q_x, q_y)
        assert nd.total_paths == total
        for value, cumulative in zip(nd.support, nd.path_counts):
            numerator = round(value * q_y * q_x)
            expected = sum(c for k, c in counts.items() if k <= numerator)
            assert cumulative == expected

    @pytest.mark.parametrize("q_y,q_x", [(3, 4), (7, 5), (10, 10)])
    def test_float_path_agrees_with_integer_path(self, q_y, q_x):
        counted = exact_null_cdf(q_y, q_x)
        floated = exact_null_cdf(q_y, q_x, integer_max_q=0)
        assert floated.path_counts is None
        assert np.allclose(counted.cdf, floated.cdf, atol=1e-12)

    def test_support_within_lattice(self):
        nd = exact_null_cdf(4, 6)
        lattice = support_of_delta(4, 6)
        assert np.all(np.isin(nd.support, lattice))
        assert np.all(np.diff(nd.cdf) >= 0)
        assert nd.cdf[-1] == 1.0
        assert nd.cdf_at(1.0) == 1.0

    def test_golden_value(self):
        """Scaled 5% critical value for q_y = q_x = 70 sits below the limiting value."""
        c = critical_value(exact_null_cdf(70, 70), 0.05)
        assert c == pytest.approx(0.2)
        assert scaled_critical_value(70, 70, c) == pytest.approx(1.1832, abs=5e-4)
        assert scaled_critical_value(70, 70, c) < limiting_critical_value(0.05)


class TestQuantiles:
    """Test critical values, achieved levels and p-values."""

    def test_two_two_quarter(self):
        nd = exact_null_cdf(2, 2)
        assert critical_value(nd, 0.25) == 0.5
        assert achieved_level(nd, 0.25) == pytest.approx(1 / 6)

    def test_one_one_tenth(self):
        nd = exact_null_cdf(1, 1)
        assert critical_value(nd, 0.1) == 1.0
        assert achieved_level(nd, 0.1) == 0.0

    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.25, 0.5])
    def test_achieved_level_bounded(self, alpha):
        for q_y, q_x in [(3, 3), (5, 8), (12, 9)]:
            assert achieved_level(exact_null_cdf(q_y, q_x), alpha) <= alpha

    def test_p_values(self):
        nd = exact_null_cdf(2, 2)
        assert p_value(nd, 0.0) == 1.0
        assert p_value(nd, 1.0) == pytest.approx(1 / 6)
        assert p_value(nd, 0.5) == pytest.approx(2 / 3)
        assert p_value(nd, 1.5) == 0.0

    def test_invalid_alpha(self):
        with pytest.raises(InvalidParameterError):
            critical_value(exact_null_cdf(2, 2), 1.0)

    def test_limiting_values(self):
        assert limiting_critical_value(0.05) == pytest.approx(1.2239, abs=1e-4)
        assert limiting_critical_value(0.01) == pytest.approx(1.5174, abs=1e-4)
        assert limiting_critical_value(1 - 1e-12) == pytest.approx(0.0, abs=1e-5)

    @pytest.mark.parametrize("q_y,q_x", [(2, 2), (7, 4), (12, 15)])
    def test_critical_value_nonincreasing_in_alpha(self, q_y, q_x):
        nd = exact_null_cdf(q_y, q_x)
        values = [critical_value(nd, alpha) for alpha in np.linspace(0.005, 0.6, 120)]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))

    def test_simulated_and_statistic_nulls_nonincreasing_in_alpha(self):
        alphas = np.linspace(0.01, 0.5, 50)
        for nd in (mc_null_cdf(6, 9, draws=20_000, seed=8), statistic_null_distribution(StatisticKind.CVM, 5, 6)):
            values = [critical_value(nd, alpha) for alpha in alphas]
            assert all(later <= earlier for earlier, later in zip(values, values[1:]))

    @pytest.mark.parametrize("alpha", [0.1, 0.05, 0.01])
    def test_scaled_value_below_limiting_value(self, alpha):
        limit = limiting_critical_value(alpha)
        for q_y, q_x in itertools.product([10, 20, 35, 50], repeat=2):
            c = critical_value(exact_null_cdf(q_y, q_x), alpha)
            assert scaled_critical_value(q_y, q_x, c) <= limit + 1e-12, (q_y, q_x)

    def test_table(self):
        rows = critical_value_table([2, 3], [2], [0.1, 0.25], method="exact")
        assert len(rows) == 4
        assert set(rows[0]) == {"q_y", "q_x", "alpha", "c", "achieved_level", "method"}
        lookup = {(r["q_y"], r["alpha"]): r["c"] for r in rows}
        assert lookup[(2, 0.25)] == 0.5


class TestMonteCarloNull:
    """Test the simulated null."""

    def test_close_to_exact(self):
        mc = mc_null_cdf(2, 2, draws=200_000, seed=1)
        assert mc.cdf_at(0.0) == pytest.approx(1 / 3, abs=0.005)
        assert mc.method == NullMethod.MONTE_CARLO

    def test_deterministic(self):
        first = mc_null_cdf(3, 4, draws=20_000, seed=9)
        second = mc_null_cdf(3, 4, draws=20_000, seed=9)
        assert np.array_equal(first.support, second.support)
        assert np.array_equal(first.cdf, second.cdf)

    def test_single_draw(self):
        nd = mc_null_cdf(4, 3, draws=1, seed=2)
        assert nd.support.size == 1
        assert nd.cdf.tolist() == [1.0]

    def test_worker_count_does_not_matter(self):
        serial = mc_null_cdf(5, 5, draws=8_000, seed=4, block_size=1_000, workers=1)
        pooled = mc_null_cdf(5, 5, draws=8_000, seed=4, block_size=1_000, workers=2)
        assert np.array_equal(serial.support, pooled.support)
        assert np.array_equal(serial.cdf, pooled.cdf)

    def test_support_within_lattice(self):
        nd = mc_null_cdf(3, 5, draws=5_000, seed=3)
        assert np.all(np.isin(np.round(nd.support * 15), np.round(support_of_delta(3, 5) * 15)))

    def test_engine_switch(self):
        assert null_distribution(2, 2).method == NullMethod.EXACT
        assert null_distribution(2, 2, "mc", 1_000, 5).method == NullMethod.MONTE_CARLO
        with pytest.raises(InvalidParameterError):
            null_distribution(2, 2, "bogus")

    @pytest.mark.slow
    def test_exact_versus_simulated_grid(self):
        for q_y in range(1, 9):
            for q_x in range(1, 9):
                exact = exact_null_cdf(q_y, q_x)
                mc = mc_null_cdf(q_y, q_x, draws=1_000_000, seed=q_y * 100 + q_x)
                gap = max(abs(exact.cdf_at(x) - mc.cdf_at(x)) for x in exact.support)
                assert gap <= 0.005, (q_y, q_x, gap)


class TestStatisticNull:
    """Test nulls of the CvM and AD statistics."""

    def test_cvm_two_one(self):
        nd = statistic_null_distribution(StatisticKind.CVM, 2, 1)
        assert nd.support.tolist() == pytest.approx([0.0, 1 / 12, 5 / 12])
        assert nd.method == NullMethod.ENUMERATION
        assert critical_value(nd, 0.05) == pytest.approx(5 / 12)

    def test_ad_two_one(self):
        nd = statistic_null_distribution(StatisticKind.AD, 2, 1)
        assert nd.support.tolist() == pytest.approx([0.0, 0.375, 1.875])
        assert critical_value(nd, 0.05) == pytest.approx(1.875)

    def test_ks_defers_to_lattice_engine(self):
        nd = statistic_null_distribution(StatisticKind.KS, 2, 2)
        assert nd.cdf.tolist() == [1 / 3, 5 / 6, 1.0]

    def test_exact_beyond_enumeration_bound(self):
        with pytest.raises(UnsupportedSizeError):
            statistic_null_distribution(StatisticKind.CVM, 20, 20, "exact")

    def test_simulated(self):
        nd = statistic_null_distribution(StatisticKind.CVM, 20, 20, "mc", 5_000, 3)
        assert nd.method == NullMethod.MONTE_CARLO
        assert nd.cdf[-1] == pytest.approx(1.0)


class TestEngineSettings:
    """Engines follow the settings they are handed, not only the process settings."""

    def test_exact_bound(self):
        nd = null_distribution(8, 8, settings=Settings(exact_max_q=10, mc_draws=2_000))
        assert nd.method == NullMethod.MONTE_CARLO
        assert nd.draws == 2_000
        assert null_distribution(8, 8).method == NullMethod.EXACT

    def test_enumeration_bound(self):
        limited = Settings(enumeration_max_assignments=10, mc_draws=1_000)
        assert statistic_null_distribution(StatisticKind.CVM, 3, 3, settings=limited).method == NullMethod.MONTE_CARLO
        assert statistic_null_distribution(StatisticKind.CVM, 3, 3).method == NullMethod.ENUMERATION

    def test_integer_arithmetic_bound(self):
        nd = null_distribution(4, 5, settings=Settings(exact_integer_max_q=0))
        assert nd.method == NullMethod.EXACT
        assert nd.path_counts is None
        assert null_distribution(4, 5).path_counts is not None

    def test_table(self):
        rows = critical_value_table([8], [8], [0.1], settings=Settings(exact_max_q=10, mc_draws=2_000))
        assert rows[0]["method"] == "mc"


class TestPermutation:
    """Test the permutation critical value."""

    def test_equals_data_independent_value(self):
        """On tie-free data the permutation and data-independent values coincide."""
        rng = np.random.default_rng(42)
        for _ in range(200):
            q = int(rng.integers(2, 13))
            q_y = int(rng.integers(1, q))
            values = rng.standard_normal(q)
            s = EffectiveSample.from_values(values[:q_y], values[q_y:])
            for alpha in (0.05, 0.1):
                expected = critical_value(exact_null_cdf(q_y, q - q_y), alpha)
                assert permutation_critical_value(s, alpha) == expected

    def test_full_tie_collapses(self):
        s = EffectiveSample.from_values([1.0], [1.0])
        assert permutation_critical_value(s, 0.1) == 0.0
        assert critical_value(exact_null_cdf(1, 1), 0.1) == 1.0

    def test_two_points(self):
        s = EffectiveSample.from_values([0.2], [0.7])
        assert permutation_critical_value(s, 0.1) == 1.0

    def test_enumeration_bound(self):
        s = EffectiveSample.from_values(np.arange(10.0), np.arange(10.0) + 0.5)
        with pytest.raises(UnsupportedSizeError):
            permutation_null(s, max_assignments=100)
