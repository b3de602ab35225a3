"""
Refined critical value for discrete outcome distributions.

When Y and X take at most r distinct values, Delta only needs to be
controlled at r evaluation points. The refined critical value is the
smallest x whose worst case (over r-point tuples in (0, 1)) of
P{max_k Delta(u_k) <= x} still reaches 1 - alpha.

The worst case is searched on a grid of ordered tuples and then polished
with Nelder-Mead on softmax-parametrised gaps, which keeps iterates
strictly increasing inside (0, 1).
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import minimize
from scipy.stats import binom

from src.config import get_settings
from src.models import EffectiveSample, RefinedSpec
from src.services.nulldist import critical_value, null_distribution, support_of_delta
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)

_PROB_TOL = 1e-12
_BATCH_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class RefinedResult:
    """Refined critical value with its search trail."""

    value: float
    c_lb: float
    c_ub: float
    r: int
    minimizing_tuple: Tuple[float, ...]
    minimum_probability: float
    grid_points: int
    candidates: Tuple[Tuple[float, float], ...] = ()
    warnings: Tuple[str, ...] = field(default_factory=tuple)


def _transitions(n: int, p: np.ndarray) -> np.ndarray:
    """Binomial moves of the running count: T[b, i, i'] = P{i -> i'} with success prob p[b]."""
    i = np.arange(n + 1)[:, None]
    k = np.arange(n + 1)[None, :] - i
    return binom.pmf(k[None, :, :], (n - i)[None, :, :], p[:, None, None])


def _threshold_numerator(q_y: int, q_x: int, x: float) -> float:
    return math.floor(x * q_y * q_x + 1e-9)


def _tuple_cdf_batch(q_y: int, q_x: int, tuples: np.ndarray, x: float) -> np.ndarray:
    """P{max_k Delta(u_k) <= x} for every row of ``tuples``."""
    if x >= 1.0:
        return np.ones(tuples.shape[0])
    d = _threshold_numerator(q_y, q_x, x)
    i = np.arange(q_y + 1)[:, None]
    j = np.arange(q_x + 1)[None, :]
    blocked = (i * q_x - j * q_y) > d

    per_row = (q_y + 1) ** 2 + (q_x + 1) ** 2 + (q_y + 1) * (q_x + 1)
    step = max(1, _BATCH_ELEMENTS // per_row)
    out = np.empty(tuples.shape[0])
    for start in range(0, tuples.shape[0], step):
        chunk = np.clip(tuples[start:start + step], _PROB_TOL, 1.0 - _PROB_TOL)
        mass = np.zeros((chunk.shape[0], q_y + 1, q_x + 1))
        mass[:, 0, 0] = 1.0
        previous = np.zeros(chunk.shape[0])
        for k in range(chunk.shape[1]):
            u = chunk[:, k]
            p = np.clip((u - previous) / (1.0 - previous), 0.0, 1.0)
            t_y = _transitions(q_y, p)
            t_x = _transitions(q_x, p)
            mass = np.matmul(np.matmul(t_y.transpose(0, 2, 1), mass), t_x)
            mass[:, blocked] = 0.0
            previous = u
        out[start:start + step] = mass.sum(axis=(1, 2))
    return out


def tuple_cdf(q_y: int, q_x: int, u_tuple: Sequence[float], x: float) -> float:
    """
    Probability that Delta stays <= x at every point of ``u_tuple``.

    The counts of Y and X uniforms falling in each gap of the tuple are
    independent binomial increments; the joint count state is propagated
    gap by gap and states violating the bound are dropped.

    Args:
        q_y: Number of Y uniforms
        q_x: Number of X uniforms
        u_tuple: Strictly increasing evaluation points in (0, 1)
        x: Bound on Delta

    Returns:
        Probability in [0, 1]

    Raises:
        InvalidParameterError: If the tuple is not strictly increasing in (0, 1)
    """
    require(InputValidator.validate_count(q_y, "q_y"))
    require(InputValidator.validate_count(q_x, "q_x"))
    require(InputValidator.validate_unit_tuple(u_tuple))
    require(InputValidator.validate_finite([x], "x"))
    tuples = np.asarray([list(u_tuple)], dtype=float)
    return float(_tuple_cdf_batch(q_y, q_x, tuples, x)[0])


def equally_spaced_tuple(r: int) -> Tuple[float, ...]:
    """The tuple (1/(1+r), ..., r/(1+r))."""
    return tuple(k / (1 + r) for k in range(1, r + 1))


def _grid_points(r: int, resolution: int, max_tuples: int) -> int:
    """Largest grid size <= resolution whose r-subsets number at most max_tuples."""
    g = max(resolution, r)
    while g > r and math.comb(g, r) > max_tuples:
        g -= 1
    return g


def _grid_tuples(r: int, g: int) -> np.ndarray:
    points = np.arange(1, g + 1) / (g + 1)
    rows = [points[list(c)] for c in itertools.combinations(range(g), r)]
    rows.append(np.asarray(equally_spaced_tuple(r)))
    return np.vstack(rows)


def _from_logits(theta: np.ndarray, r: int) -> np.ndarray:
    gaps = np.exp(theta - theta.max())
    gaps /= gaps.sum()
    return np.cumsum(gaps)[:r]


def _to_logits(u: np.ndarray) -> np.ndarray:
    gaps = np.diff(np.r_[0.0, u, 1.0])
    return np.log(np.clip(gaps, _PROB_TOL, None))


def _worst_case(
    q_y: int,
    q_x: int,
    x: float,
    grid: np.ndarray,
    cell: float,
    iterations: int
) -> Tuple[float, np.ndarray, Optional[str]]:
    """Approximate inf over tuples of the tuple CDF at x."""
    values = _tuple_cdf_batch(q_y, q_x, grid, x)
    best = int(np.argmin(values))
    start = grid[best]
    best_value = float(values[best])
    best_tuple = start
    note = None

    if iterations > 0 and best_value > 0.0:
        r = grid.shape[1]

        def objective(theta):
            return float(_tuple_cdf_batch(q_y, q_x, _from_logits(theta, r)[None, :], x)[0])

        result = minimize(
            objective,
            _to_logits(start),
            method="Nelder-Mead",
            options={"maxiter": iterations, "xatol": 1e-6, "fatol": 1e-12},
        )
        if result.fun < best_value:
            best_value = float(result.fun)
            best_tuple = _from_logits(result.x, r)
            moved = float(np.max(np.abs(best_tuple - start)))
            if moved > cell:
                note = (
                    f"refinement moved a tuple coordinate by {moved:.4f} at x={x:.6g}, "
                    f"more than one grid cell ({cell:.4f}); consider a finer grid"
                )
    return best_value, best_tuple, note


@lru_cache(maxsize=128)
def _refined(q_y: int, q_x: int, r: int, alpha: float, spec: RefinedSpec) -> RefinedResult:
    target = 1.0 - alpha - _PROB_TOL
    c_ub = critical_value(null_distribution(q_y, q_x), alpha)
    support = support_of_delta(q_y, q_x)

    equal = np.asarray([equally_spaced_tuple(r)])
    lo, hi = 0, support.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _tuple_cdf_batch(q_y, q_x, equal, float(support[mid]))[0] >= target:
            hi = mid
        else:
            lo = mid + 1
    c_lb = float(support[lo])

    candidates = support[(support >= c_lb - _PROB_TOL) & (support <= c_ub + _PROB_TOL)]
    g = _grid_points(r, spec.grid_resolution, spec.max_grid_tuples)
    grid = _grid_tuples(r, g)
    cell = 1.0 / (g + 1)

    trail: List[Tuple[float, float]] = []
    warnings: List[str] = []
    minimizers = {}

    # inf over tuples is nondecreasing in x; the last candidate (c_ub) always qualifies
    lo, hi = 0, candidates.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        x = float(candidates[mid])
        value, minimizer, note = _worst_case(q_y, q_x, x, grid, cell, spec.refinement_iterations)
        trail.append((x, value))
        minimizers[x] = (value, minimizer)
        if note:
            warnings.append(note)
        if value >= target:
            hi = mid
        else:
            lo = mid + 1

    chosen = float(candidates[lo])
    if chosen not in minimizers:
        value, minimizer, note = _worst_case(q_y, q_x, chosen, grid, cell, spec.refinement_iterations)
        trail.append((chosen, value))
        minimizers[chosen] = (value, minimizer)
        if note:
            warnings.append(note)
    value, minimizer = minimizers[chosen]

    for note in warnings:
        logger.warning("Refined search bracketing", q_y=q_y, q_x=q_x, r=r, detail=note)
    logger.info(
        "Refined critical value computed",
        q_y=q_y,
        q_x=q_x,
        r=r,
        alpha=alpha,
        value=chosen,
        c_lb=c_lb,
        c_ub=c_ub,
        grid_points=g,
    )
    return RefinedResult(
        value=chosen,
        c_lb=c_lb,
        c_ub=c_ub,
        r=r,
        minimizing_tuple=tuple(float(u) for u in minimizer),
        minimum_probability=value,
        grid_points=g,
        candidates=tuple(trail),
        warnings=tuple(warnings),
    )


def refined_critical_value(
    q_y: int,
    q_x: int,
    r: int,
    alpha: float,
    spec: Optional[RefinedSpec] = None
) -> RefinedResult:
    """
    Smallest support value in [c_lb, c_ub] passing the worst-case tuple check.

    Args:
        q_y: Number of Y uniforms
        q_x: Number of X uniforms
        r: Smaller support size of Y and X
        alpha: Nominal level
        spec: Grid and refinement settings (settings defaults)

    Returns:
        RefinedResult; ``value`` is the refined critical value
    """
    require(InputValidator.validate_count(q_y, "q_y"))
    require(InputValidator.validate_count(q_x, "q_x"))
    require(InputValidator.validate_count(r, "r"))
    require(InputValidator.validate_alpha(alpha))
    if spec is None:
        settings = get_settings()
        spec = RefinedSpec(
            r=r,
            grid_resolution=settings.refined_grid_resolution,
            refinement_iterations=settings.refined_iterations,
            max_grid_tuples=settings.refined_max_grid_tuples,
        )
    return _refined(q_y, q_x, r, alpha, spec)


def estimate_support_size(s: EffectiveSample) -> int:
    """min(#distinct Y values, #distinct X values) in the effective sample."""
    return int(min(np.unique(s.y_values).size, np.unique(s.x_values).size))
