# CSD Test Toolkit - Monte Carlo harness

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from src.errors import InvalidParameterError
from src.models import RefinedSpec, StatisticKind
from src.services.designs import DesignSpec
from src.services.simbench import (
    SimOverrides,
    induced_distance_check,
    limit_experiment_check,
    replication_rng,
    run_grid,
    run_monte_carlo,
)

BERNOULLI = ([0.0, 1.0], [0.5, 0.5])


def binomial_se(rate, reps):
    return float(np.sqrt(max(rate * (1.0 - rate), 1e-4) / reps))


class TestReplicationStreams:
    """Test per-replication seeding."""

    def test_streams_are_reproducible_and_distinct(self):
        assert replication_rng(7, 3).random() == replication_rng(7, 3).random()
        assert replication_rng(7, 3).random() != replication_rng(7, 4).random()


class TestRunMonteCarlo:
    """Test the size and power harness at small scale."""

    def test_result_row(self):
        result = run_monte_carlo(DesignSpec(design=1, case="a", n=200), 0.1, 20, 1)
        assert 0.0 <= result.rejection_rate <= 1.0
        assert result.failures == 0
        row = result.to_row()
        assert list(row) == [
            "design", "case", "n", "alpha", "reps", "rejection_rate", "se", "mean_qy", "mean_qx", "seed",
        ]
        assert row["mean_qy"] > 2

    def test_worker_count_does_not_matter(self):
        spec = DesignSpec(design=2, case="d", n=150)
        serial = run_monte_carlo(spec, 0.1, 12, 5, workers=1)
        parallel = run_monte_carlo(spec, 0.1, 12, 5, workers=2)
        assert serial.rejection_rate == parallel.rejection_rate
        assert serial.mean_q_y == parallel.mean_q_y

    def test_two_targets_breakdown(self):
        result = run_monte_carlo(DesignSpec(design=1, case="c", n=200), 0.1, 10, 2)
        assert [t["target"] for t in result.per_target] == [0.25, 0.75]

    def test_rdd_design(self):
        result = run_monte_carlo(DesignSpec(design=4, case="a", n=300), 0.1, 10, 3)
        assert 0.0 <= result.rejection_rate <= 1.0

    def test_rdd_two_targets(self):
        result = run_monte_carlo(DesignSpec(design=4, case="c", n=300), 0.1, 5, 3)
        assert [t["target"] for t in result.per_target] == [-0.5, 0.5]

    def test_refined_column(self):
        overrides = SimOverrides(
            refined=True,
            refined_spec=RefinedSpec(grid_resolution=10, max_grid_tuples=200, refinement_iterations=20),
        )
        result = run_monte_carlo(DesignSpec(design=6, case="a", n=150), 0.1, 5, 4, overrides=overrides)
        assert result.refined_rejection_rate is not None
        assert result.refined_rejection_rate >= result.rejection_rate
        assert "refined_rejection_rate" in result.to_row()

    def test_grid(self):
        rows = list(run_grid([1], ["a", "d"], [100], 0.1, 5, 9))
        assert [(r.spec.case, r.spec.n) for r in rows] == [("a", 100), ("d", 100)]

    def test_invalid_reps(self):
        with pytest.raises(InvalidParameterError):
            run_monte_carlo(DesignSpec(design=1, case="a"), 0.1, 0, 1)


class TestLimitExperiment:
    """Test direct sampling from the limit experiment."""

    @pytest.mark.parametrize("kind", [StatisticKind.CVM, StatisticKind.AD])
    def test_integral_statistics_overreject_on_discrete_data(self, kind):
        rate = limit_experiment_check(BERNOULLI, BERNOULLI, 2, 1, kind, 0.05, 20_000, 11)
        assert rate == pytest.approx(0.125, abs=0.01)

    def test_ad_all_tied_draws_do_not_reject(self):
        point_mass = ([1.0], [1.0])
        assert limit_experiment_check(point_mass, point_mass, 2, 1, StatisticKind.AD, 0.05, 200, 5) == 0.0

    def test_ks_holds_level(self):
        reps = 20_000
        rate = limit_experiment_check(BERNOULLI, BERNOULLI, 2, 1, StatisticKind.KS, 0.05, reps, 11)
        assert rate <= 0.05 + 3 * binomial_se(0.05, reps)


class TestInducedDistance:
    """Test the convergence diagnostic."""

    def test_shape(self):
        distances = induced_distance_check([20, 80], 50, 3)
        assert [n for n, _ in distances] == [20, 80]
        assert all(0.0 <= d <= 1.0 for _, d in distances)

    @pytest.mark.slow
    def test_distance_shrinks_with_n(self):
        distances = [d for _, d in induced_distance_check([10, 40, 640], 4000, 12, rank=10)]
        assert distances[0] > distances[1] > distances[2]


@pytest.mark.slow
class TestAcceptance:
    """Desk-scale size, tuning, refinement and power checks."""

    def test_size_design_one(self):
        a = run_monte_carlo(DesignSpec(design=1, case="a", n=1000), 0.1, 2000, 7)
        b = run_monte_carlo(DesignSpec(design=1, case="b", n=1000), 0.1, 2000, 7)
        c = run_monte_carlo(DesignSpec(design=1, case="c", n=1000), 0.1, 2000, 7)
        assert 0.08 <= a.rejection_rate <= 0.12
        assert b.rejection_rate <= a.rejection_rate + 0.01
        assert 0.07 <= c.rejection_rate <= 0.12
        assert 77.5 <= a.mean_q_y <= 81.5
        assert 77.5 <= a.mean_q_x <= 81.5

    @pytest.mark.parametrize("design", [6, 7])
    def test_refined_on_discrete_designs(self, design):
        overrides = SimOverrides(
            refined=True,
            refined_spec=RefinedSpec(grid_resolution=12, max_grid_tuples=300, refinement_iterations=30),
        )
        result = run_monte_carlo(DesignSpec(design=design, case="a", n=1000), 0.1, 300, 13, overrides=overrides)
        assert result.refined_rejection_rate <= 0.12
        assert result.rejection_rate <= result.refined_rejection_rate

    @pytest.mark.parametrize("design", [1, 2, 3, 4, 5, 6, 7])
    def test_power(self, design):
        reps = 400
        null = run_monte_carlo(DesignSpec(design=design, case="a", n=2000), 0.1, reps, 21)
        rates = [
            run_monte_carlo(DesignSpec(design=design, case="d", n=n), 0.1, reps, 21).rejection_rate
            for n in (500, 1000, 2000)
        ]
        assert rates[2] >= null.rejection_rate + 0.1
        for smaller, larger in zip(rates, rates[1:]):
            slack = 2 * np.hypot(binomial_se(smaller, reps), binomial_se(larger, reps))
            assert larger >= smaller - slack
