"""
End-to-end CSD tests: single target, several targets, and sharp RDD.
"""

import itertools
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog

from src import __version__
from src.config import Settings, get_settings
from src.errors import CSDError, TargetError
from src.models import (
    NullMethod,
    SampleLike,
    StatisticKind,
    TargetPoint,
    TargetResult,
    TestConfig,
    TestOutcome,
    as_sample,
)
from src.services.induced_order import build_effective_sample, rdd_split, shared_indices
from src.services.nulldist import (
    achieved_level,
    critical_value,
    null_distribution,
    p_value,
    statistic_null_distribution,
)
from src.services.refined import estimate_support_size, refined_critical_value
from src.services.statistics import compute_statistic
from src.services.tuning import TuningInputs, estimate_moments, rule_of_thumb_q, tuning_report
from src.utils.validation import require

logger = structlog.get_logger(__name__)

CVM_WARNING = "CvM test: validity holds only for continuous outcome distributions"
AD_WARNING = "AD test: validity is unproven, including for continuous outcome distributions"

TuningPair = Tuple[TuningInputs, TuningInputs]


def per_target_level(alpha: float, n_targets: int) -> float:
    """Level 1 - (1 - alpha)^(1/L) that keeps the family-wise level at alpha."""
    if n_targets == 1:
        return alpha
    return 1.0 - (1.0 - alpha) ** (1.0 / n_targets)


def statistic_warnings(kind: StatisticKind) -> List[str]:
    """Mandatory validity notes for the non-default statistics."""
    kind = StatisticKind(kind)
    if kind == StatisticKind.CVM:
        return [CVM_WARNING]
    if kind == StatisticKind.AD:
        return [AD_WARNING]
    return []


def select_q(
    ysample: SampleLike,
    xsample: SampleLike,
    z0: float,
    tuning: Optional[TuningPair] = None,
    settings: Optional[Settings] = None
) -> Tuple[int, int, Dict[str, Any]]:
    """
    Rule-of-thumb (q_y, q_x) at one target.

    Args:
        ysample: Records of the Y population
        xsample: Records of the X population
        z0: Target covariate value
        tuning: Precomputed moments per side (estimated from each sample otherwise)
        settings: Clamp bounds

    Returns:
        Tuple of (q_y, q_x, report with the moments per side)
    """
    settings = settings or get_settings()
    if tuning is None:
        tuning = (
            estimate_moments(ysample, settings.rho_clamp),
            estimate_moments(xsample, settings.rho_clamp),
        )
    t_y, t_x = tuning
    q_y = rule_of_thumb_q(t_y, z0, settings)
    q_x = rule_of_thumb_q(t_x, z0, settings)
    report = {"y": tuning_report(t_y, z0, q_y), "x": tuning_report(t_x, z0, q_x)}
    return q_y, q_x, report


def run_single_target(
    ysample: SampleLike,
    xsample: SampleLike,
    target: Union[TargetPoint, float],
    level: float,
    config: TestConfig,
    tuning: Optional[TuningPair] = None,
    position: int = 0,
    settings: Optional[Settings] = None
) -> TargetResult:
    """
    Test dominance at one target point.

    Args:
        ysample: Records of the Y population
        xsample: Records of the X population
        target: Target covariate value
        level: Level used at this target
        config: Run configuration
        tuning: Precomputed tuning moments (auto q mode)
        position: Index of the target in config.targets (manual q lookup)
        settings: Engine settings

    Returns:
        TargetResult with reject = statistic_value > critical_value

    Raises:
        TargetError: Wrapping any toolkit error raised at this target
    """
    settings = settings or get_settings()
    target = target if isinstance(target, TargetPoint) else TargetPoint(float(target))
    z0 = target.z0

    try:
        report = None
        if config.q_mode == "manual":
            q_y, q_x = config.q_for(position)
        else:
            q_y, q_x, report = select_q(ysample, xsample, z0, tuning, settings)

        s = build_effective_sample(ysample, xsample, z0, q_y, q_x)
        kind = StatisticKind(config.statistic)
        t_obs = compute_statistic(kind, s, config.undefined_as_zero)

        draws = config.draws
        seed = config.seed
        if kind == StatisticKind.KS:
            nd = null_distribution(q_y, q_x, config.cv_method, draws, seed, settings)
        else:
            nd = statistic_null_distribution(kind, q_y, q_x, config.cv_method, draws, seed, settings)

        default_cv = critical_value(nd, level)
        cv = default_cv
        level_reached = achieved_level(nd, level)
        warnings: List[str] = []
        r = None

        if config.refined is not None:
            if kind == StatisticKind.KS:
                r = config.refined.r or estimate_support_size(s)
                refined = refined_critical_value(q_y, q_x, r, level, config.refined)
                cv = refined.value
                level_reached = None
                warnings.extend(refined.warnings)
            else:
                warnings.append(f"refined critical value applies to the KS statistic only; ignored for {kind.value}")

        result = TargetResult(
            target=target,
            q_y=q_y,
            q_x=q_x,
            statistic_value=t_obs,
            critical_value=cv,
            p_value=p_value(nd, t_obs),
            reject=t_obs > cv,
            per_target_level=level,
            default_critical_value=default_cv,
            refined_r=r,
            achieved_level=level_reached,
            null_method=nd.method.value,
            tuning=report,
            warnings=warnings,
            effective=s,
        )
    except CSDError as e:
        logger.error("Target computation failed", z0=z0, error=str(e))
        raise TargetError(z0, e) from e

    logger.debug(
        "Target tested",
        z0=z0,
        q_y=q_y,
        q_x=q_x,
        statistic=t_obs,
        critical_value=cv,
        reject=result.reject,
    )
    return result


def _overlap_warnings(results: List[TargetResult]) -> List[str]:
    warnings = []
    for first, second in itertools.combinations(results, 2):
        if first.effective is None or second.effective is None:
            continue
        shared = shared_indices(first.effective, second.effective)
        if shared:
            detail = "; ".join(f"{side}: {indices}" for side, indices in shared.items())
            warnings.append(
                f"effective samples at z0={first.target.z0} and z0={second.target.z0} "
                f"share observations ({detail})"
            )
    return warnings


def run_multi_target(
    ysample: SampleLike,
    xsample: SampleLike,
    config: TestConfig,
    tuning: Optional[TuningPair] = None,
    settings: Optional[Settings] = None
) -> TestOutcome:
    """
    Test dominance at every configured target with the adjusted level.

    Args:
        ysample: Records of the Y population
        xsample: Records of the X population
        config: Run configuration with at least one target
        tuning: Precomputed tuning moments (auto q mode)
        settings: Engine settings

    Returns:
        TestOutcome sorted by target; overall_reject is the max of the per-target flags
    """
    settings = settings or get_settings()
    require((len(config.targets) >= 1, "at least one target point is required"))
    ysample = as_sample(ysample)
    xsample = as_sample(xsample)

    n_targets = len(config.targets)
    level = per_target_level(config.alpha, n_targets)
    warnings = statistic_warnings(config.statistic)
    for note in warnings:
        logger.warning("Statistic validity", detail=note)

    positions = sorted(range(n_targets), key=lambda k: config.targets[k])
    results = [
        run_single_target(
            ysample,
            xsample,
            config.targets[k],
            level,
            config,
            tuning=tuning,
            position=k,
            settings=settings,
        )
        for k in positions
    ]

    for result in results:
        warnings.extend(result.warnings)
    overlap = _overlap_warnings(results)
    for note in overlap:
        logger.warning("Effective samples overlap", detail=note)
    warnings.extend(overlap)

    methods = sorted({r.null_method for r in results if r.null_method})
    metadata: Dict[str, Any] = {
        "version": __version__,
        "n_targets": n_targets,
        "per_target_level": level,
        "null_methods": methods,
        "n_y": len(ysample),
        "n_x": len(xsample),
    }
    if NullMethod.MONTE_CARLO.value in methods:
        metadata["mc_draws"] = config.draws
        metadata["mc_seed"] = config.seed

    outcome = TestOutcome(
        per_target=results,
        overall_reject=any(r.reject for r in results),
        config=config,
        warnings=warnings,
        metadata=metadata,
    )
    logger.debug("Test completed", targets=n_targets, overall_reject=outcome.overall_reject)
    return outcome


def rdd_tuning(
    sample: SampleLike,
    ysample: SampleLike,
    xsample: SampleLike,
    mode: str = "side",
    settings: Optional[Settings] = None
) -> TuningPair:
    """
    Tuning moments for an RDD split.

    ``side`` estimates each side on its own records; ``pooled`` takes mu_z,
    sigma_z and rho from the whole running-variable sample and keeps n as
    the side size.
    """
    settings = settings or get_settings()
    if mode == "side":
        return (
            estimate_moments(ysample, settings.rho_clamp),
            estimate_moments(xsample, settings.rho_clamp),
        )
    if mode == "pooled":
        pooled = estimate_moments(sample, settings.rho_clamp)
        return (
            pooled.model_copy(update={"n": len(as_sample(ysample))}),
            pooled.model_copy(update={"n": len(as_sample(xsample))}),
        )
    require((False, f"unknown rdd moments mode {mode!r}"))


def run_rdd(sample: SampleLike, config: TestConfig, settings: Optional[Settings] = None) -> TestOutcome:
    """
    Sharp RDD test: split at the cutoff and test at the cutoff.

    Args:
        sample: Running-variable records
        config: Run configuration with rdd_cutoff set
        settings: Engine settings

    Returns:
        TestOutcome with the cutoff as single target

    Raises:
        InvalidParameterError: If the cutoff is missing or other targets are configured
        DegenerateSplitError: If one side of the cutoff is empty
    """
    settings = settings or get_settings()
    require((config.rdd_cutoff is not None, "RDD mode requires rdd_cutoff"))
    cutoff = float(config.rdd_cutoff)
    require((
        config.targets in ([], [cutoff]),
        f"RDD mode tests at the cutoff only, got targets {config.targets}",
    ))
    config = config.model_copy(update={"targets": [cutoff]})

    sample = as_sample(sample)
    ysample, xsample = rdd_split(sample, cutoff, config.rdd_y_side)
    tuning = None
    if config.q_mode == "auto":
        tuning = rdd_tuning(sample, ysample, xsample, config.rdd_moments, settings)

    outcome = run_multi_target(ysample, xsample, config, tuning=tuning, settings=settings)
    outcome.metadata["rdd"] = {"cutoff": cutoff, "y_side": config.rdd_y_side, "moments": config.rdd_moments}
    return outcome
