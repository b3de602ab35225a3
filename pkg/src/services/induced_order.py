"""
Induced order statistics for the CSD test.

Selects, for a target covariate value, the outcomes whose covariates lie
nearest to it and assembles the pooled effective sample.
"""

from typing import Literal, Optional, Tuple

import numpy as np
import structlog

from src.errors import DegenerateSplitError, EmptyInputError
from src.models import EffectiveSample, Sample, SampleLike, TargetPoint, as_sample
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)


def g_order_indices(sample: SampleLike, z0: float, q: int) -> np.ndarray:
    """
    Positions of the q records nearest to ``z0``.

    Ordering is by ascending ``|z - z0|`` with ties broken by ascending
    original index, so the result does not depend on storage order.

    Args:
        sample: Observation records
        z0: Target covariate value
        q: Number of records to select

    Returns:
        Array of positions into the sample's storage arrays

    Raises:
        EmptyInputError: If the sample is empty
        InvalidParameterError: If q is outside [1, len(sample)] or values are not finite
    """
    s = as_sample(sample)
    if len(s) == 0:
        raise EmptyInputError("cannot select induced order statistics from an empty sample")

    require(InputValidator.validate_count(q, "q"))
    if q > len(s):
        require((False, f"q={q} exceeds the sample size {len(s)}"))
    require(InputValidator.validate_finite([z0], "z0"))
    require(InputValidator.validate_finite(s.z, "z"))
    require(InputValidator.validate_finite(s.w, "w"))

    distance = np.abs(s.z - z0)
    # lexsort: last key is primary
    order = np.lexsort((s.index, distance))
    return order[:q]


def g_order_select(sample: SampleLike, z0: float, q: int) -> np.ndarray:
    """
    Outcomes of the q records whose covariates are nearest to ``z0``.

    Args:
        sample: Observation records
        z0: Target covariate value
        q: Number of outcomes to return

    Returns:
        Outcomes ordered by ascending (|z - z0|, index)
    """
    s = as_sample(sample)
    return s.w[g_order_indices(s, z0, q)]


def build_effective_sample(
    ysample: SampleLike,
    xsample: SampleLike,
    z0: float,
    q_y: int,
    q_x: int
) -> EffectiveSample:
    """
    Pool the induced Y and X outcomes at one target point.

    Args:
        ysample: Records of the Y population
        xsample: Records of the X population
        z0: Target covariate value
        q_y: Number of Y neighbours
        q_x: Number of X neighbours

    Returns:
        EffectiveSample with original indices of the selected records
    """
    ys = as_sample(ysample)
    xs = as_sample(xsample)
    y_pos = g_order_indices(ys, z0, q_y)
    x_pos = g_order_indices(xs, z0, q_x)

    logger.debug("Effective sample built", z0=z0, q_y=q_y, q_x=q_x)
    return EffectiveSample(
        y_values=ys.w[y_pos],
        x_values=xs.w[x_pos],
        target=TargetPoint(z0),
        y_indices=ys.index[y_pos],
        x_indices=xs.index[x_pos],
    )


def rdd_split(
    sample: SampleLike,
    cutoff: float,
    y_side: Literal["below", "above"] = "below"
) -> Tuple[Sample, Sample]:
    """
    Split a running-variable sample at a sharp RDD cutoff.

    With ``y_side="below"`` the Y side holds records with ``z <= cutoff``
    and X those with ``z > cutoff``. With ``y_side="above"`` Y holds
    ``z >= cutoff`` and X holds ``z < cutoff``. The cutoff record always
    belongs to Y.

    Args:
        sample: Pooled records
        cutoff: Discontinuity point
        y_side: Which side of the cutoff forms the Y sample

    Returns:
        Tuple of (ysample, xsample)

    Raises:
        EmptyInputError: If the sample is empty
        DegenerateSplitError: If either side is empty
    """
    s = as_sample(sample)
    if len(s) == 0:
        raise EmptyInputError("cannot split an empty sample")
    require(InputValidator.validate_finite([cutoff], "cutoff"))

    if y_side == "below":
        y_mask = s.z <= cutoff
    elif y_side == "above":
        y_mask = s.z >= cutoff
    else:
        require((False, f"y_side must be 'below' or 'above', got {y_side!r}"))

    ysample = s.subset(y_mask)
    xsample = s.subset(~y_mask)
    if len(ysample) == 0:
        raise DegenerateSplitError("Y", cutoff)
    if len(xsample) == 0:
        raise DegenerateSplitError("X", cutoff)

    logger.debug("RDD split", cutoff=cutoff, y_side=y_side, n_y=len(ysample), n_x=len(xsample))
    return ysample, xsample


def shared_indices(first: EffectiveSample, second: EffectiveSample) -> Optional[dict]:
    """Original indices selected at both targets, per side, or None if disjoint."""
    shared = {}
    for side, a, b in (
        ("Y", first.y_indices, second.y_indices),
        ("X", first.x_indices, second.x_indices),
    ):
        if a is None or b is None:
            continue
        common = np.intersect1d(a, b)
        if common.size:
            shared[side] = common.tolist()
    return shared or None
