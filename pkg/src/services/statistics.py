"""
One-sided two-sample statistics on an effective sample.

All three kinds are computed from integer ECDF counts on the sorted pooled
sample, so a relabelling of the same pooled values (permutation test,
enumerated nulls) reproduces the observed value bit for bit.

``(v)^+`` denotes the squared positive part ``max(v, 0)**2`` for both CvM
and AD; a plain positive part would give a different statistic.
"""

from typing import Tuple

import numpy as np
import structlog

from src.errors import EmptyInputError, UndefinedStatisticError
from src.models import EffectiveSample, StatisticKind

logger = structlog.get_logger(__name__)


class Ecdf:
    """Empirical CDF F(t) = #(points <= t) / count on a multiset."""

    def __init__(self, points):
        self.sorted_points = np.sort(np.asarray(points, dtype=float).reshape(-1))
        if self.sorted_points.size == 0:
            raise EmptyInputError("ECDF needs at least one point")

    @property
    def count(self) -> int:
        return int(self.sorted_points.size)

    def count_le(self, t) -> np.ndarray:
        """Number of points <= t, elementwise."""
        return np.searchsorted(self.sorted_points, t, side="right")

    def __call__(self, t) -> np.ndarray:
        return self.count_le(t) / self.count


def pooled_groups(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sort pooled values and locate tie groups.

    Args:
        values: Pooled sample

    Returns:
        Tuple of (stable sort order, 0-based position of the last member of each tie group)
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    ends = np.flatnonzero(np.r_[v[1:] != v[:-1], True])
    return order, ends


def statistic_from_labels(
    kind: StatisticKind,
    labels: np.ndarray,
    group_ends: np.ndarray,
    q_y: int
) -> np.ndarray:
    """
    Evaluate a statistic for many Y/X labellings of one sorted pooled sample.

    Args:
        kind: Statistic kind
        labels: Boolean array (B, q), True marks a Y value, columns in sorted order
        group_ends: Last position of each tie group in the sorted pooled sample
        q_y: Number of Y labels per row

    Returns:
        Array of B statistic values

    Raises:
        UndefinedStatisticError: For AD when every term has a zero denominator
    """
    labels = np.atleast_2d(labels)
    q = labels.shape[1]
    q_x = q - q_y
    scale = q_y * q_x

    cum_y = np.cumsum(labels, axis=1, dtype=np.int64)[:, group_ends]
    at_or_below = (group_ends + 1).astype(np.int64)
    cum_x = at_or_below[None, :] - cum_y
    # q_y * q_x * (F_Y - F_X) at each tie group, as integers
    gap = cum_y * q_x - cum_x * q_y

    if kind == StatisticKind.KS:
        return np.maximum(gap.max(axis=1), 0) / scale

    sizes = np.diff(np.r_[-1, group_ends]).astype(float)
    squared = np.square(np.maximum(gap, 0).astype(float)) * sizes[None, :]

    if kind == StatisticKind.CVM:
        return squared.sum(axis=1) / (q * float(scale) ** 2)

    if kind == StatisticKind.AD:
        keep = at_or_below < q
        if not keep.any():
            raise UndefinedStatisticError("AD statistic undefined: every pooled value is tied")
        e = at_or_below[keep].astype(float)
        weight = (q * q) / (e * (q - e))
        return (squared[:, keep] * weight[None, :]).sum(axis=1) / (q * float(scale) ** 2)

    raise ValueError(f"unknown statistic kind: {kind}")


def _evaluate(kind: StatisticKind, s: EffectiveSample, undefined_as_zero: bool = False) -> float:
    if s.q_y < 1 or s.q_x < 1:
        raise EmptyInputError("both sides of the effective sample must be nonempty")
    pooled = s.pooled
    is_y = np.zeros(pooled.size, dtype=bool)
    is_y[: s.q_y] = True
    order, ends = pooled_groups(pooled)
    try:
        value = float(statistic_from_labels(kind, is_y[order][None, :], ends, s.q_y)[0])
    except UndefinedStatisticError:
        if not undefined_as_zero:
            raise
        logger.debug("Undefined statistic scored as zero", kind=kind.value, q_y=s.q_y, q_x=s.q_x)
        return 0.0
    logger.debug("Statistic evaluated", kind=kind.value, q_y=s.q_y, q_x=s.q_x, value=value)
    return value


def ks_statistic(s: EffectiveSample) -> float:
    """
    One-sided KS statistic max_k F_Y(y_k) - F_X(y_k).

    Args:
        s: Effective sample

    Returns:
        Statistic value in [0, 1]
    """
    return _evaluate(StatisticKind.KS, s)


def cvm_statistic(s: EffectiveSample) -> float:
    """One-sided CvM: mean over pooled points of (F_Y - F_X)^+."""
    return _evaluate(StatisticKind.CVM, s)


def ad_statistic(s: EffectiveSample) -> float:
    """One-sided AD: mean of (F_Y - F_X)^+ / (F_S (1 - F_S)), zero-denominator terms dropped."""
    return _evaluate(StatisticKind.AD, s)


def compute_statistic(kind: StatisticKind, s: EffectiveSample, undefined_as_zero: bool = False) -> float:
    """
    Dispatch on the statistic kind.

    With ``undefined_as_zero`` an AD statistic whose pooled values are all
    tied is scored 0, which can never reject.
    """
    return _evaluate(StatisticKind(kind), s, undefined_as_zero)
