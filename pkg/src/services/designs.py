"""
Data generating processes for the simulation benchmark (Designs 1-7).

Designs 1-3 and 5 follow Y = mu_Y(Z) + sigma_Y(Z) U and
X = mu_X(Z) + sigma_X(Z) V with Z ~ Beta(2, 2). Design 4 is a sharp RDD
on Z ~ 2 Beta(2, 2) - 1 with the Y model above the cutoff 0. Designs 6
and 7 are discrete (three-category softmax and binomial).

Cases (a)-(c) satisfy the null; case (c) tests two targets. Case (d) is
the alternative.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import norm

from src.models import Sample
from src.utils.validation import require

logger = structlog.get_logger(__name__)

Curve = Callable[[np.ndarray], np.ndarray]

# Left-censoring point of LogNormal(0, 1): its 20% quantile
CENSOR_POINT = math.exp(norm.ppf(0.2))

THETA_X = np.array([-0.5, -1.5, -2.0])

CASES = ("a", "b", "c", "d")


def rdd_mean(z: np.ndarray) -> np.ndarray:
    """mu(z) = 0.61 - 0.02 z + 0.06 z^2 + 0.17 z^3."""
    return 0.61 - 0.02 * z + 0.06 * z ** 2 + 0.17 * z ** 3


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Nearest integer, halves rounded away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _identity(z):
    return z


def _square(z):
    return z ** 2


def _zero(z):
    return np.zeros_like(z)


def _one(z):
    return np.ones_like(z)


@dataclass(frozen=True)
class LocationScale:
    """Location-scale parameters of one (design, case)."""

    mu_y: Curve
    mu_x: Curve
    sigma_y: Curve
    sigma_x: Curve
    noise: Literal["normal", "uniform", "clognormal"]


LOCATION_SCALE: Dict[Tuple[int, str], LocationScale] = {
    (1, "a"): LocationScale(_identity, _identity, _square, _square, "normal"),
    (1, "b"): LocationScale(lambda z: 1.05 * z, _identity, _square, _square, "normal"),
    (1, "c"): LocationScale(_identity, _identity, _square, _square, "normal"),
    (1, "d"): LocationScale(lambda z: 0.95 * z, _identity, _square, _square, "normal"),
    (2, "a"): LocationScale(_identity, lambda z: z ** 2 + 0.25, _square, _square, "normal"),
    (2, "b"): LocationScale(lambda z: 1.05 * z, lambda z: 0.5 * z + 0.25, _square, _square, "normal"),
    (2, "c"): LocationScale(_identity, lambda z: z - (z - 0.25) * (z - 0.75), _square, _square, "normal"),
    (2, "d"): LocationScale(_identity, lambda z: 0.6 * z + 0.25, _square, _square, "normal"),
    (3, "a"): LocationScale(_identity, _identity, _square, _square, "uniform"),
    (3, "b"): LocationScale(lambda z: z + 0.1 * z ** 2, _identity, lambda z: 0.95 * z ** 2, _square, "uniform"),
    (3, "c"): LocationScale(_identity, _identity, _square, _square, "uniform"),
    (3, "d"): LocationScale(_identity, _identity, lambda z: 0.9 * z ** 2, _square, "uniform"),
    (4, "a"): LocationScale(rdd_mean, rdd_mean, _one, _one, "normal"),
    (4, "b"): LocationScale(lambda z: rdd_mean(z) + 0.1, rdd_mean, _one, _one, "normal"),
    (4, "c"): LocationScale(rdd_mean, rdd_mean, _one, _one, "normal"),
    (4, "d"): LocationScale(rdd_mean, rdd_mean, lambda z: 0.5 + z ** 2, _one, "normal"),
    (5, "a"): LocationScale(_zero, _zero, _square, _square, "clognormal"),
    (5, "b"): LocationScale(_zero, _zero, lambda z: 1.05 * z ** 2, _square, "clognormal"),
    (5, "c"): LocationScale(_zero, _zero, _square, _square, "clognormal"),
    (5, "d"): LocationScale(_zero, _zero, lambda z: 0.9 * z ** 2, _square, "clognormal"),
}

# mu_Y shift of the discrete designs per case
DISCRETE_SHIFT: Dict[Tuple[int, str], float] = {
    (6, "a"): 0.0, (6, "b"): 1.0, (6, "c"): 0.0, (6, "d"): -0.5,
    (7, "a"): 0.0, (7, "b"): 1.0, (7, "c"): 0.0, (7, "d"): -1.0,
}


class DesignSpec(BaseModel):
    """One simulation design: design number, case and per-sample size."""

    model_config = ConfigDict(frozen=True)

    design: int = Field(description="Design number 1-7")
    case: Literal["a", "b", "c", "d"]
    n: int = Field(default=1000, description="Draws per sample (total draws for the RDD design)")

    @field_validator("design")
    @classmethod
    def validate_design(cls, v):
        if v not in range(1, 8):
            raise ValueError("design must be between 1 and 7")
        return v

    @field_validator("n")
    @classmethod
    def validate_n(cls, v):
        if v < 3:
            raise ValueError("n must be at least 3")
        return v

    @property
    def is_rdd(self) -> bool:
        return self.design == 4

    @property
    def is_discrete(self) -> bool:
        return self.design in (6, 7)

    @property
    def is_null(self) -> bool:
        return self.case != "d"

    @property
    def targets(self) -> Tuple[float, ...]:
        if self.case == "c":
            return (-0.5, 0.5) if self.is_rdd else (0.25, 0.75)
        return (0.0,) if self.is_rdd else (0.5,)

    @property
    def label(self) -> str:
        return f"{self.design}{self.case}"


@dataclass(frozen=True)
class DesignDraw:
    """One simulated data set: two samples, or a running-variable sample and its cutoff."""

    ysample: Optional[Sample] = None
    xsample: Optional[Sample] = None
    sample: Optional[Sample] = None
    cutoff: Optional[float] = None


def _noise(rng: np.random.Generator, kind: str, n: int) -> np.ndarray:
    if kind == "normal":
        return rng.standard_normal(n)
    if kind == "uniform":
        return rng.random(n)
    return np.maximum(rng.lognormal(0.0, 1.0, n), CENSOR_POINT)


def discrete_probabilities(z: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """P{W = k | Z = z}, k = 1, 2, 3, for Design 6 with mu_Y = ``shift``."""
    theta = THETA_X + np.array([-shift, shift, 0.0])
    logits = theta[None, :] * (1.5 - np.asarray(z, dtype=float))[:, None]
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def _draw_categorical(rng: np.random.Generator, z: np.ndarray, shift: float) -> np.ndarray:
    cumulative = np.cumsum(discrete_probabilities(z, shift), axis=1)
    u = rng.random(z.size)
    return 1.0 + (u > cumulative[:, 0]) + (u > cumulative[:, 1])


def _draw_binomial(rng: np.random.Generator, z: np.ndarray, shift: float) -> np.ndarray:
    trials = np.maximum(round_half_away(25.0 * z) + shift, 0).astype(np.int64)
    return rng.binomial(trials, 0.5).astype(float)


def _draw_side(rng: np.random.Generator, spec: DesignSpec, side: str) -> Sample:
    z = rng.beta(2.0, 2.0, spec.n)
    key = (spec.design, spec.case)
    if spec.is_discrete:
        shift = DISCRETE_SHIFT[key] if side == "y" else 0.0
        draw = _draw_categorical if spec.design == 6 else _draw_binomial
        return Sample(draw(rng, z, shift), z)

    params = LOCATION_SCALE[key]
    mu, sigma = (params.mu_y, params.sigma_y) if side == "y" else (params.mu_x, params.sigma_x)
    return Sample(mu(z) + sigma(z) * _noise(rng, params.noise, spec.n), z)


def draw_design(spec: DesignSpec, rng: np.random.Generator) -> DesignDraw:
    """
    Draw one data set from a design.

    Args:
        spec: Design, case and size
        rng: Random stream for this replication

    Returns:
        DesignDraw with two samples of size n, or for Design 4 one
        running-variable sample of size n with cutoff 0
    """
    if spec.is_rdd:
        params = LOCATION_SCALE[(spec.design, spec.case)]
        z = 2.0 * rng.beta(2.0, 2.0, spec.n) - 1.0
        u = rng.standard_normal(spec.n)
        above = z >= 0.0
        w = np.where(
            above,
            params.mu_y(z) + params.sigma_y(z) * u,
            params.mu_x(z) + params.sigma_x(z) * u,
        )
        return DesignDraw(sample=Sample(w, z), cutoff=0.0)

    ysample = _draw_side(rng, spec, "y")
    xsample = _draw_side(rng, spec, "x")
    return DesignDraw(ysample=ysample, xsample=xsample)


def conditional_cdf_y(spec: DesignSpec, z0: float) -> Callable[[np.ndarray], np.ndarray]:
    """
    True F_Y(. | z0) for the continuous location-scale designs 1-3.

    Raises:
        InvalidParameterError: For designs without a closed form here
    """
    require((spec.design in (1, 2, 3), f"no closed-form conditional CDF for design {spec.design}"))
    params = LOCATION_SCALE[(spec.design, spec.case)]
    z = np.asarray([z0], dtype=float)
    loc = float(params.mu_y(z)[0])
    scale = float(params.sigma_y(z)[0])
    if params.noise == "normal":
        return lambda t: norm.cdf(t, loc=loc, scale=scale)
    return lambda t: np.clip((np.asarray(t, dtype=float) - loc) / scale, 0.0, 1.0)
