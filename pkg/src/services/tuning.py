"""
Data-dependent choice of the effective sample sizes q_y and q_x.

The rule balances the bias of using neighbours of the target against the
variance of a small effective sample under a normal working model for Z
and a Gaussian outcome-covariate dependence.
"""

import math
from typing import Any, Dict, Optional

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator
from scipy.stats import norm

from src.config import Settings, get_settings
from src.errors import DegenerateMomentsError
from src.models import SampleLike, as_sample
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2PIE = 1.0 / math.sqrt(2.0 * math.pi * math.e)


class TuningInputs(BaseModel):
    """Moments feeding the rule of thumb for one sample."""

    n: int = Field(description="Size of the sample the rule is applied to")
    mu_z: float
    sigma_z: float
    rho: float = Field(description="Outcome-covariate correlation after clamping")

    @field_validator("n")
    @classmethod
    def validate_n(cls, v):
        if v < 1:
            raise ValueError("n must be positive")
        return v

    @field_validator("sigma_z")
    @classmethod
    def validate_sigma(cls, v):
        if not v > 0.0:
            raise ValueError("sigma_z must be positive")
        return v

    @field_validator("rho")
    @classmethod
    def validate_rho(cls, v):
        if not -1.0 < v < 1.0:
            raise ValueError("rho must lie strictly inside (-1, 1)")
        return v


def estimate_moments(sample: SampleLike, rho_clamp: Optional[float] = None) -> TuningInputs:
    """
    Sample moments of Z and the outcome-covariate correlation.

    Args:
        sample: Observation records
        rho_clamp: Absolute bound on rho (settings default)

    Returns:
        TuningInputs with n = sample size

    Raises:
        DegenerateMomentsError: If the sample is too small or w or z has no variance
    """
    s = as_sample(sample)
    if rho_clamp is None:
        rho_clamp = get_settings().rho_clamp
    require((0.0 < rho_clamp < 1.0, f"rho_clamp must lie strictly between 0 and 1, got {rho_clamp}"))
    if len(s) < 3:
        raise DegenerateMomentsError(f"tuning needs at least 3 observations, got {len(s)}")

    sigma_z = float(np.std(s.z, ddof=1))
    sigma_w = float(np.std(s.w, ddof=1))
    if sigma_z == 0.0:
        raise DegenerateMomentsError("covariate z has zero variance")
    if sigma_w == 0.0:
        raise DegenerateMomentsError("outcome w has zero variance")

    rho = float(np.corrcoef(s.w, s.z)[0, 1])
    rho = float(np.clip(rho, -rho_clamp, rho_clamp))
    return TuningInputs(n=len(s), mu_z=float(np.mean(s.z)), sigma_z=sigma_z, rho=rho)


def rule_of_thumb_value(t: TuningInputs, z0: float) -> float:
    """
    Unrounded rule-of-thumb effective sample size.

    Returns:
        sqrt(n) * (4 f(z0)^2 / B)^(2/3), with f the N(mu_z, sigma_z^2) density and
        B = (2 / sigma_z) / sqrt(2 pi e) + |rho| / (sigma_z sqrt(1 - rho^2) sqrt(2 pi))
    """
    density = norm.pdf(z0, loc=t.mu_z, scale=t.sigma_z)
    bias = (2.0 / t.sigma_z) * _INV_SQRT_2PIE + (
        abs(t.rho) / (t.sigma_z * math.sqrt(1.0 - t.rho ** 2))
    ) * _INV_SQRT_2PI
    return math.sqrt(t.n) * (4.0 * density ** 2 / bias) ** (2.0 / 3.0)


def rule_of_thumb_q(t: TuningInputs, z0: float, settings: Optional[Settings] = None) -> int:
    """
    Rule-of-thumb q, rounded half up and clamped to [q_min, q_max_fraction * n].

    Args:
        t: Moments of the sample
        z0: Target covariate value
        settings: Clamp bounds (settings default)

    Returns:
        Effective sample size for this side
    """
    settings = settings or get_settings()
    require(InputValidator.validate_finite([z0], "z0"))
    value = rule_of_thumb_value(t, z0)
    upper = max(1, min(t.n, int(math.floor(settings.q_max_fraction * t.n))))
    lower = min(settings.q_min, upper)
    q = int(math.floor(value + 0.5))
    return int(min(max(q, lower), upper))


def tuning_report(t: TuningInputs, z0: float, q: int) -> Dict[str, Any]:
    """Moments and chosen q for reports."""
    return {
        "n": t.n,
        "mu_z": t.mu_z,
        "sigma_z": t.sigma_z,
        "rho": t.rho,
        "z0": z0,
        "q_unrounded": rule_of_thumb_value(t, z0),
        "q": q,
    }
