"""
Monte Carlo harness for size and power studies on Designs 1-7.

Replication ``k`` draws from ``SeedSequence(seed, spawn_key=(k,))``, so a
run is reproducible from (design, alpha, reps, seed) and does not depend
on how replications are spread across worker processes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.stats import kstest

from src.config import Settings, get_settings
from src.errors import CSDError, SimulationError
from src.models import EffectiveSample, RefinedSpec, StatisticKind, TestConfig, TestOutcome
from src.services.designs import DesignSpec, conditional_cdf_y, draw_design
from src.services.induced_order import g_order_select, rdd_split
from src.services.nulldist import critical_value, statistic_null_distribution
from src.services.runner import rdd_tuning, run_multi_target, run_rdd
from src.services.statistics import compute_statistic
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)

DiscreteDistribution = Tuple[Sequence[float], Sequence[float]]


class SimOverrides(BaseModel):
    """Per-run changes to the default test used inside the harness."""

    model_config = ConfigDict(frozen=True)

    statistic: StatisticKind = StatisticKind.KS
    refined: bool = False
    refined_spec: Optional[RefinedSpec] = None
    manual_q: Optional[Tuple[int, int]] = None
    cv_method: Literal["auto", "exact", "mc"] = "auto"
    rdd_moments: Literal["side", "pooled"] = "pooled"


@dataclass
class SimResult:
    """Aggregated rejection rate and tuning values of one design run."""

    spec: DesignSpec
    alpha: float
    reps: int
    seed: int
    rejection_rate: float
    se: float
    mean_q_y: float
    mean_q_x: float
    failures: int = 0
    refined_rejection_rate: Optional[float] = None
    per_target: List[Dict[str, float]] = field(default_factory=list)

    def to_row(self) -> Dict[str, Any]:
        """CSV row: design, case, n, alpha, reps, rejection_rate, se, mean_qy, mean_qx, seed."""
        row = {
            "design": self.spec.design,
            "case": self.spec.case,
            "n": self.spec.n,
            "alpha": self.alpha,
            "reps": self.reps,
            "rejection_rate": self.rejection_rate,
            "se": self.se,
            "mean_qy": self.mean_q_y,
            "mean_qx": self.mean_q_x,
            "seed": self.seed,
        }
        if self.refined_rejection_rate is not None:
            row["refined_rejection_rate"] = self.refined_rejection_rate
        return row


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep`` under root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def _test_config(spec: DesignSpec, alpha: float, seed: int, overrides: SimOverrides, refined: bool) -> TestConfig:
    return TestConfig(
        alpha=alpha,
        targets=list(spec.targets),
        statistic=overrides.statistic,
        q_mode="manual" if overrides.manual_q else "auto",
        manual_q=[overrides.manual_q] if overrides.manual_q else [],
        cv_method=overrides.cv_method,
        seed=seed,
        refined=(overrides.refined_spec or RefinedSpec()) if refined else None,
        rdd_cutoff=0.0 if spec.is_rdd and spec.case != "c" else None,
        rdd_y_side="above",
        rdd_moments=overrides.rdd_moments,
        undefined_as_zero=True,
    )


def _run_test(spec: DesignSpec, draw, config: TestConfig, settings: Settings) -> TestOutcome:
    if not spec.is_rdd:
        return run_multi_target(draw.ysample, draw.xsample, config, settings=settings)
    if config.rdd_cutoff is not None:
        return run_rdd(draw.sample, config, settings=settings)
    # two targets away from the cutoff: split once, test both
    ysample, xsample = rdd_split(draw.sample, draw.cutoff, config.rdd_y_side)
    tuning = None
    if config.q_mode == "auto":
        tuning = rdd_tuning(draw.sample, ysample, xsample, config.rdd_moments, settings)
    return run_multi_target(ysample, xsample, config, tuning=tuning, settings=settings)


def _replicate(
    spec: DesignSpec,
    alpha: float,
    seed: int,
    rep: int,
    overrides: SimOverrides,
    settings: Settings
) -> Dict[str, Any]:
    draw = draw_design(spec, replication_rng(seed, rep))
    outcome = _run_test(spec, draw, _test_config(spec, alpha, seed, overrides, False), settings)
    record: Dict[str, Any] = {
        "rep": rep,
        "reject": outcome.overall_reject,
        "targets": [r.target.z0 for r in outcome.per_target],
        "target_reject": [r.reject for r in outcome.per_target],
        "q_y": [r.q_y for r in outcome.per_target],
        "q_x": [r.q_x for r in outcome.per_target],
    }
    if overrides.refined:
        refined = _run_test(spec, draw, _test_config(spec, alpha, seed, overrides, True), settings)
        record["refined_reject"] = refined.overall_reject
    return record


def _replicate_chunk(
    spec: DesignSpec,
    alpha: float,
    seed: int,
    reps: Sequence[int],
    overrides: SimOverrides,
    settings: Settings
) -> List[Dict[str, Any]]:
    records = []
    for rep in reps:
        try:
            records.append(_replicate(spec, alpha, seed, rep, overrides, settings))
        except CSDError as e:
            logger.warning("Replication failed", design=spec.label, rep=rep, error=str(e))
            records.append({"rep": rep, "error": str(e)})
    return records


def run_monte_carlo(
    spec: DesignSpec,
    alpha: float,
    reps: int,
    seed: int,
    overrides: Optional[SimOverrides] = None,
    workers: Optional[int] = None,
    settings: Optional[Settings] = None
) -> SimResult:
    """
    Estimate the rejection rate of the test on one design.

    Args:
        spec: Design, case and size
        alpha: Family-wise nominal level
        reps: Number of replications
        seed: Root seed
        overrides: Statistic, refined and q-selection overrides
        workers: Worker processes (settings default)
        settings: Engine settings

    Returns:
        SimResult over the successful replications

    Raises:
        SimulationError: If more than max_failure_fraction of the replications fail
    """
    settings = settings or get_settings()
    overrides = overrides or SimOverrides()
    workers = workers or settings.workers
    require(InputValidator.validate_count(reps, "reps"))
    require(InputValidator.validate_alpha(alpha))

    logger.info("Simulation started", design=spec.label, n=spec.n, reps=reps, alpha=alpha, seed=seed, workers=workers)

    if workers <= 1:
        records = _replicate_chunk(spec, alpha, seed, range(reps), overrides, settings)
    else:
        chunks = [list(range(reps))[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replicate_chunk, spec, alpha, seed, chunk, overrides, settings) for chunk in chunks if chunk]
            records = [record for future in futures for record in future.result()]
    records.sort(key=lambda record: record["rep"])

    done = [r for r in records if "error" not in r]
    failures = len(records) - len(done)
    if failures > settings.max_failure_fraction * reps:
        raise SimulationError(
            f"{failures} of {reps} replications failed for design {spec.label} "
            f"(limit {settings.max_failure_fraction:.1%})"
        )
    if not done:
        raise SimulationError(f"no replication succeeded for design {spec.label}")

    rate = float(np.mean([r["reject"] for r in done]))
    per_target = []
    targets = done[0]["targets"]
    if len(targets) > 1:
        for k, z0 in enumerate(targets):
            per_target.append({
                "target": z0,
                "rejection_rate": float(np.mean([r["target_reject"][k] for r in done])),
                "mean_q_y": float(np.mean([r["q_y"][k] for r in done])),
                "mean_q_x": float(np.mean([r["q_x"][k] for r in done])),
            })

    result = SimResult(
        spec=spec,
        alpha=alpha,
        reps=reps,
        seed=seed,
        rejection_rate=rate,
        se=math.sqrt(rate * (1.0 - rate) / len(done)),
        mean_q_y=float(np.mean([np.mean(r["q_y"]) for r in done])),
        mean_q_x=float(np.mean([np.mean(r["q_x"]) for r in done])),
        failures=failures,
        refined_rejection_rate=(
            float(np.mean([r["refined_reject"] for r in done])) if overrides.refined else None
        ),
        per_target=per_target,
    )
    logger.info(
        "Simulation completed",
        design=spec.label,
        n=spec.n,
        rejection_rate=result.rejection_rate,
        mean_q_y=result.mean_q_y,
        mean_q_x=result.mean_q_x,
        failures=failures,
    )
    return result


def run_grid(
    designs: Sequence[int],
    cases: Sequence[str],
    ns: Sequence[int],
    alpha: float,
    reps: int,
    seed: int,
    overrides: Optional[SimOverrides] = None,
    workers: Optional[int] = None,
    settings: Optional[Settings] = None
) -> Iterator[SimResult]:
    """Run every (design, case, n) combination with the same root seed."""
    for design in designs:
        for case in cases:
            for n in ns:
                spec = DesignSpec(design=design, case=case, n=n)
                yield run_monte_carlo(spec, alpha, reps, seed, overrides, workers, settings)


def limit_experiment_check(
    dist_y: DiscreteDistribution,
    dist_x: DiscreteDistribution,
    q_y: int,
    q_x: int,
    statistic: StatisticKind,
    alpha: float,
    reps: int,
    seed: int,
    settings: Optional[Settings] = None
) -> float:
    """
    Rejection frequency when the effective sample is drawn directly from the limit law.

    Args:
        dist_y: (support values, probabilities) of Y at the target
        dist_x: (support values, probabilities) of X at the target
        q_y: Number of Y draws
        q_x: Number of X draws
        statistic: Statistic kind
        alpha: Nominal level
        reps: Number of replications
        seed: Root seed
        settings: Engine settings for the critical value

    Returns:
        Fraction of replications with statistic above its critical value; an
        AD draw with every value tied counts as no rejection
    """
    require(InputValidator.validate_count(reps, "reps"))
    kind = StatisticKind(statistic)
    c = critical_value(statistic_null_distribution(kind, q_y, q_x, settings=settings), alpha)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    y_values, y_probs = (np.asarray(v, dtype=float) for v in dist_y)
    x_values, x_probs = (np.asarray(v, dtype=float) for v in dist_x)
    ys = rng.choice(y_values, size=(reps, q_y), p=y_probs)
    xs = rng.choice(x_values, size=(reps, q_x), p=x_probs)

    rejections = sum(
        compute_statistic(kind, EffectiveSample.from_values(ys[k], xs[k]), undefined_as_zero=True) > c
        for k in range(reps)
    )
    rate = rejections / reps
    logger.info("Limit experiment checked", statistic=kind.value, q_y=q_y, q_x=q_x, critical_value=c, rejection_rate=rate)
    return rate


def induced_distance_check(
    n_values: Sequence[int],
    reps: int,
    seed: int,
    spec: Optional[DesignSpec] = None,
    z0: float = 0.5,
    rank: int = 1
) -> List[Tuple[int, float]]:
    """
    KS distance between the law of one induced Y value and F_Y(. | z0).

    For each n the ``rank``-th induced Y order statistic is collected over
    ``reps`` draws and compared with the true conditional CDF.

    Returns:
        List of (n, distance)
    """
    base = spec or DesignSpec(design=1, case="a")
    truth = conditional_cdf_y(base, z0)
    distances = []
    for n in n_values:
        sized = base.model_copy(update={"n": n})
        values = np.empty(reps)
        for rep in range(reps):
            draw = draw_design(sized, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, rep))))
            values[rep] = g_order_select(draw.ysample, z0, rank)[rank - 1]
        distance = float(kstest(values, truth).statistic)
        distances.append((n, distance))
        logger.info("Induced distance computed", n=n, rank=rank, reps=reps, distance=distance)
    return distances
