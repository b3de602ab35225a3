"""
Null distributions and critical values for the CSD test.

The KS null is the law of sup_u Delta(u), where Delta is the difference of
the ECDFs of q_y and q_x i.i.d. uniforms. The supremum depends only on how
the two uniform samples interleave, and all C(q, q_y) interleavings are
equally likely, so the exact law is a lattice path count: a path from
(0, 0) to (q_y, q_x) takes a Y step or an X step per order statistic, and
the statistic is the largest value of i/q_y - j/q_x along the path.

Values are carried as integer numerators ``i*q_x - j*q_y`` over the common
denominator ``q_y*q_x`` everywhere in the toolkit, which keeps the
data-independent and permutation quantiles bit-identical.
"""

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from src.config import Settings, get_settings
from src.errors import UnsupportedSizeError
from src.models import EffectiveSample, NullDistribution, NullMethod, StatisticKind
from src.services.statistics import pooled_groups, statistic_from_labels
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)

# Slack on probability comparisons, below any atom of a q <= 10^4 null
_CDF_TOL = 1e-12

# Elements per DP pass (diagonal length x thresholds)
_DP_CHUNK_ELEMENTS = 4_000_000


def _validate_sizes(q_y: int, q_x: int) -> None:
    require(InputValidator.validate_count(q_y, "q_y"))
    require(InputValidator.validate_count(q_x, "q_x"))


def _lattice_numerators(q_y: int, q_x: int) -> np.ndarray:
    i = np.arange(q_y + 1, dtype=np.int64)[:, None]
    j = np.arange(q_x + 1, dtype=np.int64)[None, :]
    return np.unique(i * q_x - j * q_y)


def support_of_delta(q_y: int, q_x: int) -> np.ndarray:
    """
    All values i/q_y - j/q_x, deduplicated and sorted.

    Args:
        q_y: Number of Y uniforms
        q_x: Number of X uniforms

    Returns:
        Sorted array of at most (q_y+1)(q_x+1) values in [-1, 1]
    """
    _validate_sizes(q_y, q_x)
    return _lattice_numerators(q_y, q_x) / (q_y * q_x)


def _path_mass(q_y: int, q_x: int, thresholds: np.ndarray, integer: bool) -> np.ndarray:
    """Paths (counts or probabilities) whose every vertex has numerator <= threshold."""
    q = q_y + q_x
    i = np.arange(q_y + 1, dtype=np.int64)
    dtype = np.int64 if integer else float
    current = np.zeros((q_y + 1, thresholds.size), dtype=dtype)
    current[0] = 1

    for s in range(1, q + 1):
        j_prev = (s - 1) - i
        new = np.zeros_like(current)
        if integer:
            x_ok = (j_prev >= 0) & (j_prev < q_x)
            new[1:] += current[:-1]
            new += current * x_ok[:, None]
        else:
            remaining = q - (s - 1)
            p_y = (q_y - i) / remaining
            p_x = np.clip(q_x - j_prev, 0, None) / remaining
            new[1:] += current[:-1] * p_y[:-1, None]
            new += current * p_x[:, None]

        j = s - i
        valid = (j >= 0) & (j <= q_x)
        numerator = i * q_x - j * q_y
        allowed = valid[:, None] & (numerator[:, None] <= thresholds[None, :])
        new[~allowed] = 0
        current = new

    return current[q_y]


def exact_null_cdf(q_y: int, q_x: int, integer_max_q: Optional[int] = None) -> NullDistribution:
    """
    Exact law of sup_u Delta(u) by lattice path dynamic programming.

    Path counts use int64 arithmetic while C(q, q_y) fits; above that (or
    above ``integer_max_q``) the DP propagates hypergeometric step
    probabilities in float64.

    Args:
        q_y: Number of Y uniforms
        q_x: Number of X uniforms
        integer_max_q: Largest q counted with integers (settings default)

    Returns:
        NullDistribution with method EXACT
    """
    _validate_sizes(q_y, q_x)
    if integer_max_q is None:
        integer_max_q = get_settings().exact_integer_max_q

    q = q_y + q_x
    total = math.comb(q, q_y)
    integer = q <= integer_max_q and total <= np.iinfo(np.int64).max // 2

    numerators = _lattice_numerators(q_y, q_x)
    numerators = numerators[numerators >= 0]

    chunk = max(1, _DP_CHUNK_ELEMENTS // (q_y + 1))
    pieces = [
        _path_mass(q_y, q_x, numerators[start:start + chunk], integer)
        for start in range(0, numerators.size, chunk)
    ]
    mass = np.concatenate(pieces)

    if integer:
        counts = tuple(int(c) for c in mass)
        cdf = np.array([c / total for c in counts])
        path_counts, total_paths = counts, total
    else:
        cdf = np.maximum.accumulate(np.clip(mass, 0.0, 1.0))
        cdf[-1] = 1.0
        path_counts, total_paths = None, None

    logger.info(
        "Exact null distribution computed",
        q_y=q_y,
        q_x=q_x,
        support_size=int(numerators.size),
        arithmetic="integer" if integer else "float",
    )
    return NullDistribution(
        q_y=q_y,
        q_x=q_x,
        support=numerators / (q_y * q_x),
        cdf=cdf,
        method=NullMethod.EXACT,
        path_counts=path_counts,
        total_paths=total_paths,
    )


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _uniform_labels(rng: np.random.Generator, size: int, q_y: int, q_x: int) -> np.ndarray:
    """Y/X labels of the sorted pooled uniforms, one row per draw."""
    u = rng.random((size, q_y + q_x))
    return np.argsort(u, axis=1) < q_y


def _mc_ks_block(q_y: int, q_x: int, size: int, seed: int, block: int) -> np.ndarray:
    """Histogram of sup numerators for one seeded block of draws."""
    labels = _uniform_labels(_block_rng(seed, block), size, q_y, q_x)
    q = q_y + q_x
    cum_y = np.cumsum(labels, axis=1, dtype=np.int64)
    cum_x = np.arange(1, q + 1, dtype=np.int64)[None, :] - cum_y
    sup = np.maximum((cum_y * q_x - cum_x * q_y).max(axis=1), 0)
    return np.bincount(sup, minlength=q_y * q_x + 1)


def _mc_statistic_block(kind: str, q_y: int, q_x: int, size: int, seed: int, block: int) -> np.ndarray:
    labels = _uniform_labels(_block_rng(seed, block), size, q_y, q_x)
    return statistic_from_labels(StatisticKind(kind), labels, np.arange(q_y + q_x), q_y)


def _block_sizes(draws: int, block_size: int) -> List[int]:
    full, rest = divmod(draws, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _run_blocks(fn, args_per_block: Sequence[tuple], workers: int) -> list:
    if workers <= 1 or len(args_per_block) <= 1:
        return [fn(*args) for args in args_per_block]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args_per_block)))


def mc_null_cdf(
    q_y: int,
    q_x: int,
    draws: int,
    seed: int,
    block_size: Optional[int] = None,
    workers: Optional[int] = None
) -> NullDistribution:
    """
    Simulated law of sup_u Delta(u).

    Draws are split into blocks of ``block_size``; block ``b`` uses the
    stream ``SeedSequence(seed, spawn_key=(b,))``, so the result depends
    only on (draws, seed, block_size) and never on the worker count.

    Args:
        q_y: Number of Y uniforms
        q_x: Number of X uniforms
        draws: Number of replications
        seed: Root seed
        block_size: Draws per seeded block (settings default)
        workers: Worker processes (settings default)

    Returns:
        NullDistribution with method MONTE_CARLO over the observed values
    """
    _validate_sizes(q_y, q_x)
    require(InputValidator.validate_count(draws, "draws"))
    settings = get_settings()
    block_size = block_size or settings.mc_block_size
    workers = workers or settings.workers

    sizes = _block_sizes(draws, block_size)
    args = [(q_y, q_x, size, seed, b) for b, size in enumerate(sizes)]
    histogram = np.sum(_run_blocks(_mc_ks_block, args, workers), axis=0)

    observed = np.flatnonzero(histogram)
    cdf = np.cumsum(histogram[observed]) / draws
    cdf[-1] = 1.0

    logger.info("Monte Carlo null distribution computed", q_y=q_y, q_x=q_x, draws=draws, seed=seed, blocks=len(sizes))
    return NullDistribution(
        q_y=q_y,
        q_x=q_x,
        support=observed / (q_y * q_x),
        cdf=cdf,
        method=NullMethod.MONTE_CARLO,
        draws=draws,
        seed=seed,
    )


def _index_of_quantile(nd: NullDistribution, alpha: float) -> int:
    require(InputValidator.validate_alpha(alpha))
    idx = int(np.searchsorted(nd.cdf, 1.0 - alpha - _CDF_TOL, side="left"))
    return min(idx, nd.support.size - 1)


def _upper_tail(nd: NullDistribution, idx: int) -> float:
    """P{statistic > support[idx]}."""
    if idx < 0:
        return 1.0
    if nd.path_counts is not None:
        return (nd.total_paths - nd.path_counts[idx]) / nd.total_paths
    return max(0.0, 1.0 - float(nd.cdf[idx]))


def critical_value(nd: NullDistribution, alpha: float) -> float:
    """
    Smallest support value x with P{statistic <= x} >= 1 - alpha.

    Args:
        nd: Null distribution
        alpha: Nominal level

    Returns:
        Critical value
    """
    return float(nd.support[_index_of_quantile(nd, alpha)])


def achieved_level(nd: NullDistribution, alpha: float) -> float:
    """Exact null rejection probability P{statistic > c_alpha}; never above alpha."""
    return _upper_tail(nd, _index_of_quantile(nd, alpha))


def p_value(nd: NullDistribution, t_obs: float) -> float:
    """
    Tail probability P{statistic >= t_obs}.

    Decisions are taken as ``T > c``; the p-value is reported alongside and
    uses the closed tail, so ``p <= alpha`` and ``T > c`` can disagree only
    when t_obs sits on an atom at the boundary.
    """
    require(InputValidator.validate_finite([t_obs], "t_obs"))
    below = int(np.searchsorted(nd.support, t_obs - _CDF_TOL, side="left")) - 1
    return _upper_tail(nd, below)


def limiting_critical_value(alpha: float) -> float:
    """Large-sample critical value sqrt(-ln(alpha) / 2) for the scaled statistic."""
    require(InputValidator.validate_alpha(alpha))
    return math.sqrt(-math.log(alpha) / 2.0)


def scaled_critical_value(q_y: int, q_x: int, c: float) -> float:
    """sqrt(q_y q_x / q) * c, comparable with the limiting critical value."""
    return math.sqrt(q_y * q_x / (q_y + q_x)) * c


def _distribution_from_values(
    values: np.ndarray,
    q_y: int,
    q_x: int,
    kind: StatisticKind,
    method: NullMethod,
    draws: Optional[int] = None,
    seed: Optional[int] = None
) -> NullDistribution:
    support, counts = np.unique(values, return_counts=True)
    total = int(counts.sum())
    cumulative = np.cumsum(counts)
    return NullDistribution(
        q_y=q_y,
        q_x=q_x,
        support=support,
        cdf=cumulative / total,
        method=method,
        statistic=kind,
        draws=draws,
        seed=seed,
        path_counts=tuple(int(c) for c in cumulative),
        total_paths=total,
    )


def _combination_labels(q: int, q_y: int, count: int) -> np.ndarray:
    """Boolean (count, q) matrix with one row per choice of Y positions."""
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(q), q_y)),
        dtype=np.int64,
        count=count * q_y,
    )
    labels = np.zeros((count, q), dtype=bool)
    labels[np.arange(count)[:, None], flat.reshape(count, q_y)] = True
    return labels


@dataclass(frozen=True)
class EngineLimits:
    """Hashable snapshot of the settings that steer the null engines."""

    exact_max_q: int
    exact_integer_max_q: int
    mc_draws: int
    mc_block_size: int
    enumeration_max_assignments: int
    workers: int
    seed: int

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "EngineLimits":
        settings = settings or get_settings()
        return cls(
            exact_max_q=settings.exact_max_q,
            exact_integer_max_q=settings.exact_integer_max_q,
            mc_draws=settings.mc_draws,
            mc_block_size=settings.mc_block_size,
            enumeration_max_assignments=settings.enumeration_max_assignments,
            workers=settings.workers,
            seed=settings.seed,
        )


def null_distribution(
    q_y: int,
    q_x: int,
    method: str = "auto",
    draws: Optional[int] = None,
    seed: Optional[int] = None,
    settings: Optional[Settings] = None
) -> NullDistribution:
    """
    KS null distribution through the configured engine.

    ``auto`` selects the exact DP when q <= exact_max_q and Monte Carlo
    otherwise. Engine limits come from ``settings`` (process settings when
    omitted); results are memoised per arguments and limits.
    """
    return _null_distribution(q_y, q_x, method, draws, seed, EngineLimits.from_settings(settings))


@lru_cache(maxsize=256)
def _null_distribution(
    q_y: int,
    q_x: int,
    method: str,
    draws: Optional[int],
    seed: Optional[int],
    limits: EngineLimits
) -> NullDistribution:
    q = q_y + q_x
    if method == "auto":
        method = "exact" if q <= limits.exact_max_q else "mc"
    if method == "exact":
        if q > limits.exact_max_q:
            logger.warning("Exact DP requested above the configured bound", q=q, bound=limits.exact_max_q)
        return exact_null_cdf(q_y, q_x, limits.exact_integer_max_q)
    if method == "mc":
        return mc_null_cdf(
            q_y,
            q_x,
            draws if draws is not None else limits.mc_draws,
            seed if seed is not None else limits.seed,
            block_size=limits.mc_block_size,
            workers=limits.workers,
        )
    require((False, f"unknown critical value method {method!r}"))


def statistic_null_distribution(
    kind: StatisticKind,
    q_y: int,
    q_x: int,
    method: str = "auto",
    draws: Optional[int] = None,
    seed: Optional[int] = None,
    settings: Optional[Settings] = None
) -> NullDistribution:
    """
    Null law of the statistic itself on q_y + q_x i.i.d. uniforms.

    KS defers to ``null_distribution``. CvM and AD enumerate every
    interleaving when C(q, q_y) is within the enumeration bound, else they
    are simulated with the same seeded block scheme as the KS engine.
    """
    return _statistic_null_distribution(
        StatisticKind(kind), q_y, q_x, method, draws, seed, EngineLimits.from_settings(settings)
    )


@lru_cache(maxsize=256)
def _statistic_null_distribution(
    kind: StatisticKind,
    q_y: int,
    q_x: int,
    method: str,
    draws: Optional[int],
    seed: Optional[int],
    limits: EngineLimits
) -> NullDistribution:
    if kind == StatisticKind.KS:
        return _null_distribution(q_y, q_x, method, draws, seed, limits)

    _validate_sizes(q_y, q_x)
    q = q_y + q_x
    count = math.comb(q, q_y)

    if method in ("auto", "exact") and count <= limits.enumeration_max_assignments:
        values = statistic_from_labels(kind, _combination_labels(q, q_y, count), np.arange(q), q_y)
        logger.info("Enumerated statistic null", kind=kind.value, q_y=q_y, q_x=q_x, assignments=count)
        return _distribution_from_values(values, q_y, q_x, kind, NullMethod.ENUMERATION)

    if method == "exact":
        raise UnsupportedSizeError(
            f"C({q}, {q_y}) = {count} interleavings exceed the enumeration bound "
            f"{limits.enumeration_max_assignments}; use the Monte Carlo method"
        )
    if method not in ("auto", "mc"):
        require((False, f"unknown critical value method {method!r}"))

    draws = draws if draws is not None else limits.mc_draws
    seed = seed if seed is not None else limits.seed
    sizes = _block_sizes(draws, limits.mc_block_size)
    args = [(kind.value, q_y, q_x, size, seed, b) for b, size in enumerate(sizes)]
    values = np.concatenate(_run_blocks(_mc_statistic_block, args, limits.workers))
    logger.info("Simulated statistic null", kind=kind.value, q_y=q_y, q_x=q_x, draws=draws, seed=seed)
    return _distribution_from_values(values, q_y, q_x, kind, NullMethod.MONTE_CARLO, draws, seed)


def permutation_null(
    s: EffectiveSample,
    kind: StatisticKind = StatisticKind.KS,
    max_assignments: Optional[int] = None
) -> NullDistribution:
    """
    Distribution of the statistic over all relabellings of the pooled sample.

    The statistic depends only on which pooled positions carry the Y label,
    so the C(q, q_y) label assignments give the same distribution as the q!
    permutations at a fraction of the cost.

    Raises:
        UnsupportedSizeError: If C(q, q_y) exceeds the enumeration bound
    """
    if max_assignments is None:
        max_assignments = get_settings().permutation_max_assignments
    q_y, q_x, q = s.q_y, s.q_x, s.q
    _validate_sizes(q_y, q_x)
    count = math.comb(q, q_y)
    if count > max_assignments:
        raise UnsupportedSizeError(
            f"permutation test needs C({q}, {q_y}) = {count} assignments (bound {max_assignments}); "
            "use the data-independent critical value instead"
        )

    order, ends = pooled_groups(s.pooled)
    labels = _combination_labels(q, q_y, count)[:, order]
    values = statistic_from_labels(StatisticKind(kind), labels, ends, q_y)
    return _distribution_from_values(values, q_y, q_x, StatisticKind(kind), NullMethod.ENUMERATION)


def permutation_critical_value(
    s: EffectiveSample,
    alpha: float,
    kind: StatisticKind = StatisticKind.KS,
    max_assignments: Optional[int] = None
) -> float:
    """
    Non-randomised permutation critical value.

    Args:
        s: Effective sample
        alpha: Nominal level
        kind: Statistic kind
        max_assignments: Enumeration bound (settings default)

    Returns:
        1 - alpha quantile of the statistic over all label assignments
    """
    nd = permutation_null(s, kind, max_assignments)
    return critical_value(nd, alpha)


def critical_value_table(
    q_ys: Sequence[int],
    q_xs: Sequence[int],
    alphas: Sequence[float],
    method: str = "auto",
    draws: Optional[int] = None,
    seed: Optional[int] = None,
    settings: Optional[Settings] = None
) -> List[Dict[str, object]]:
    """
    Rows of c_alpha(q_y, q) for every combination of inputs.

    Returns:
        List of dicts with keys q_y, q_x, alpha, c, achieved_level, method
    """
    rows = []
    for q_y, q_x in itertools.product(q_ys, q_xs):
        nd = null_distribution(q_y, q_x, method, draws, seed, settings)
        for alpha in alphas:
            rows.append({
                "q_y": q_y,
                "q_x": q_x,
                "alpha": alpha,
                "c": critical_value(nd, alpha),
                "achieved_level": achieved_level(nd, alpha),
                "method": nd.method.value,
            })
    logger.info("Critical value table built", rows=len(rows))
    return rows
