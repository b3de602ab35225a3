# CSD Test Toolkit - simulation designs

import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from src.errors import InvalidParameterError
from src.services.designs import (
    CENSOR_POINT,
    DesignSpec,
    conditional_cdf_y,
    discrete_probabilities,
    draw_design,
    rdd_mean,
    round_half_away,
)


class TestDesignSpec:
    """Test design selection and validation."""

    def test_targets(self):
        assert DesignSpec(design=1, case="a").targets == (0.5,)
        assert DesignSpec(design=2, case="c").targets == (0.25, 0.75)
        assert DesignSpec(design=4, case="a").targets == (0.0,)
        assert DesignSpec(design=4, case="c").targets == (-0.5, 0.5)

    def test_flags(self):
        spec = DesignSpec(design=6, case="d", n=200)
        assert spec.is_discrete
        assert not spec.is_null
        assert spec.label == "6d"
        assert DesignSpec(design=4, case="b").is_rdd

    def test_invalid(self):
        with pytest.raises(ValidationError):
            DesignSpec(design=8, case="a")
        with pytest.raises(ValidationError):
            DesignSpec(design=1, case="e")
        with pytest.raises(ValidationError):
            DesignSpec(design=1, case="a", n=2)


class TestDesignConstants:
    """Test closed-form pieces of the data generating processes."""

    def test_rdd_mean_at_cutoff(self):
        assert rdd_mean(np.array([0.0]))[0] == pytest.approx(0.61)

    def test_censor_point(self):
        assert CENSOR_POINT == pytest.approx(0.43101, abs=1e-5)

    def test_categorical_probabilities(self):
        probs = discrete_probabilities(np.array([0.5]))[0]
        assert probs == pytest.approx([0.6285, 0.2312, 0.1403], abs=1e-4)
        assert probs.sum() == pytest.approx(1.0)

    def test_round_half_away(self):
        assert round_half_away(np.array([12.5, -2.5, 0.4, 1.6])).tolist() == [13.0, -3.0, 0.0, 2.0]


class TestDrawDesign:
    """Test draws from every design."""

    @pytest.mark.parametrize("design", [1, 2, 3, 5, 6, 7])
    def test_two_samples(self, design):
        draw = draw_design(DesignSpec(design=design, case="a", n=50), np.random.default_rng(0))
        assert len(draw.ysample) == 50
        assert len(draw.xsample) == 50
        assert np.all((draw.ysample.z > 0.0) & (draw.ysample.z < 1.0))

    def test_rdd_draw(self):
        draw = draw_design(DesignSpec(design=4, case="a", n=80), np.random.default_rng(1))
        assert draw.cutoff == 0.0
        assert len(draw.sample) == 80
        assert np.all(np.abs(draw.sample.z) < 1.0)

    def test_censored_lognormal(self):
        draw = draw_design(DesignSpec(design=5, case="a", n=500), np.random.default_rng(2))
        scaled = draw.ysample.w / draw.ysample.z ** 2
        assert np.min(scaled) >= CENSOR_POINT - 1e-9
        assert np.mean(np.isclose(scaled, CENSOR_POINT)) == pytest.approx(0.2, abs=0.06)

    def test_discrete_supports(self):
        rng = np.random.default_rng(3)
        six = draw_design(DesignSpec(design=6, case="d", n=300), rng)
        seven = draw_design(DesignSpec(design=7, case="b", n=300), rng)
        assert set(np.unique(six.ysample.w)) <= {1.0, 2.0, 3.0}
        assert np.all(seven.ysample.w == np.round(seven.ysample.w))
        assert np.all(seven.xsample.w >= 0)

    def test_reproducible(self):
        spec = DesignSpec(design=3, case="d", n=40)
        first = draw_design(spec, np.random.default_rng(5))
        second = draw_design(spec, np.random.default_rng(5))
        assert np.array_equal(first.ysample.w, second.ysample.w)
        assert np.array_equal(first.xsample.z, second.xsample.z)


class TestConditionalCdf:
    """Test the closed-form conditional CDFs."""

    def test_design_one(self):
        cdf = conditional_cdf_y(DesignSpec(design=1, case="a"), 0.5)
        assert cdf(0.5) == pytest.approx(0.5)
        assert cdf(0.5 + 0.25) == pytest.approx(0.8413, abs=1e-4)

    def test_uniform_noise(self):
        cdf = conditional_cdf_y(DesignSpec(design=3, case="a"), 0.5)
        assert float(cdf(0.5)) == 0.0
        assert float(cdf(0.5 + 0.125)) == pytest.approx(0.5)

    def test_unsupported_design(self):
        with pytest.raises(InvalidParameterError):
            conditional_cdf_y(DesignSpec(design=4, case="a"), 0.0)
