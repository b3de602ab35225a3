"""
Shared domain types for the CSD test toolkit.

Observation records, samples, effective samples, null distributions and the
per-run configuration and result objects live here so that every service
speaks the same vocabulary.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StatisticKind(str, Enum):
    """One-sided two-sample statistics offered by the toolkit."""

    KS = "ks"
    CVM = "cvm"
    AD = "ad"


class NullMethod(str, Enum):
    """How a null distribution was obtained."""

    EXACT = "exact"
    MONTE_CARLO = "mc"
    ENUMERATION = "enumeration"


@dataclass(frozen=True)
class ObservationPair:
    """One record: outcome ``w`` observed with covariate ``z``."""

    w: float
    z: float
    index: int


@dataclass(frozen=True)
class TargetPoint:
    """Covariate value at which dominance is tested."""

    z0: float


class Sample:
    """Column store for a list of observation pairs.

    Outcomes, covariates and original indices are held as numpy arrays so
    selection stays O(n log n) on large files.
    """

    def __init__(self, w: Iterable[float], z: Iterable[float], index: Optional[Iterable[int]] = None):
        self.w = np.asarray(w, dtype=float).reshape(-1)
        self.z = np.asarray(z, dtype=float).reshape(-1)
        if self.w.shape != self.z.shape:
            raise ValueError("w and z must have the same length")
        if index is None:
            self.index = np.arange(self.w.size, dtype=np.int64)
        else:
            self.index = np.asarray(index, dtype=np.int64).reshape(-1)
            if self.index.shape != self.w.shape:
                raise ValueError("index must match the sample length")

    @classmethod
    def from_pairs(cls, pairs: Sequence[ObservationPair]) -> "Sample":
        """Build a sample from observation records."""
        pairs = list(pairs)
        return cls(
            [p.w for p in pairs],
            [p.z for p in pairs],
            [p.index for p in pairs],
        )

    def pairs(self) -> Iterator[ObservationPair]:
        """Iterate over the records in storage order."""
        for w, z, i in zip(self.w.tolist(), self.z.tolist(), self.index.tolist()):
            yield ObservationPair(w=w, z=z, index=i)

    def subset(self, mask: np.ndarray) -> "Sample":
        """Records selected by a boolean mask, original indices kept."""
        return Sample(self.w[mask], self.z[mask], self.index[mask])

    def transform_outcomes(self, fn) -> "Sample":
        """Apply ``fn`` to every outcome, keeping covariates and indices."""
        return Sample(fn(self.w), self.z, self.index)

    def __len__(self) -> int:
        return int(self.w.size)

    def __repr__(self) -> str:
        return f"Sample(n={len(self)})"


SampleLike = Union[Sample, Sequence[ObservationPair]]


def as_sample(sample: SampleLike) -> Sample:
    """Coerce a list of observation pairs (or a Sample) into a Sample."""
    if isinstance(sample, Sample):
        return sample
    return Sample.from_pairs(sample)


@dataclass(frozen=True)
class EffectiveSample:
    """Pooled induced order statistics at one target point.

    ``y_values``/``x_values`` are ordered by increasing distance to the
    target; ``y_indices``/``x_indices`` keep the original record indices.
    """

    y_values: np.ndarray
    x_values: np.ndarray
    target: TargetPoint
    y_indices: Optional[np.ndarray] = None
    x_indices: Optional[np.ndarray] = None

    @classmethod
    def from_values(cls, y_values: Iterable[float], x_values: Iterable[float], z0: float = 0.0) -> "EffectiveSample":
        """Effective sample built directly from outcome values (limit experiment, tests)."""
        return cls(
            y_values=np.asarray(list(y_values), dtype=float),
            x_values=np.asarray(list(x_values), dtype=float),
            target=TargetPoint(z0),
        )

    @property
    def q_y(self) -> int:
        return int(self.y_values.size)

    @property
    def q_x(self) -> int:
        return int(self.x_values.size)

    @property
    def q(self) -> int:
        return self.q_y + self.q_x

    @property
    def pooled(self) -> np.ndarray:
        """The vector S_n: Y values followed by X values."""
        return np.concatenate([self.y_values, self.x_values])

    def transform(self, fn) -> "EffectiveSample":
        """Apply a common map to every pooled value."""
        return EffectiveSample(
            y_values=np.asarray(fn(self.y_values), dtype=float),
            x_values=np.asarray(fn(self.x_values), dtype=float),
            target=self.target,
            y_indices=self.y_indices,
            x_indices=self.x_indices,
        )


@dataclass(frozen=True)
class NullDistribution:
    """Null distribution of a statistic on q i.i.d. uniforms.

    For the KS kind this is the law of sup_u Delta(u); ``support`` holds the
    achievable values and ``cdf`` the cumulative probabilities aligned with it.
    ``path_counts``/``total_paths`` are present when the exact engine counted
    lattice paths with integers.
    """

    q_y: int
    q_x: int
    support: np.ndarray
    cdf: np.ndarray
    method: NullMethod
    statistic: StatisticKind = StatisticKind.KS
    draws: Optional[int] = None
    seed: Optional[int] = None
    path_counts: Optional[Tuple[int, ...]] = None
    total_paths: Optional[int] = None

    def cdf_at(self, x: float) -> float:
        """P{statistic <= x}."""
        idx = int(np.searchsorted(self.support, x + 1e-12, side="right")) - 1
        return 0.0 if idx < 0 else float(self.cdf[idx])

    def describe(self) -> Dict[str, Any]:
        """Provenance summary for reports."""
        return {
            "q_y": self.q_y,
            "q_x": self.q_x,
            "statistic": self.statistic.value,
            "method": self.method.value,
            "draws": self.draws,
            "seed": self.seed,
            "support_size": int(self.support.size),
        }


class RefinedSpec(BaseModel):
    """Inputs of the refined critical value search."""

    model_config = ConfigDict(frozen=True)

    r: Optional[int] = Field(default=None, description="Smaller support size of Y and X; None estimates it")
    grid_resolution: int = Field(default=101, description="Grid points per coordinate")
    refinement_iterations: int = Field(default=200, description="Nelder-Mead iterations per local search")
    max_grid_tuples: int = Field(default=5_000, description="Cap on exhaustively evaluated tuples")

    @field_validator("r")
    @classmethod
    def validate_r(cls, v):
        """Ensure the support size is positive when supplied."""
        if v is not None and v < 1:
            raise ValueError("r must be >= 1")
        return v

    @field_validator("grid_resolution", "max_grid_tuples")
    @classmethod
    def validate_grid(cls, v):
        if v < 1:
            raise ValueError("grid settings must be positive")
        return v

    @field_validator("refinement_iterations")
    @classmethod
    def validate_iterations(cls, v):
        if v < 0:
            raise ValueError("refinement_iterations must be >= 0")
        return v


class TestConfig(BaseModel):
    """Configuration of one end-to-end test run."""

    __test__ = False  # not a pytest test class
    model_config = ConfigDict(frozen=True)

    alpha: float = 0.05
    targets: List[float] = Field(default_factory=list)
    statistic: StatisticKind = StatisticKind.KS
    q_mode: Literal["auto", "manual"] = "auto"
    manual_q: List[Tuple[int, int]] = Field(default_factory=list, description="(q_y, q_x) per target, or one pair for all")
    cv_method: Literal["auto", "exact", "mc"] = "auto"
    draws: int = 1_000_000
    seed: int = 20240517
    refined: Optional[RefinedSpec] = None
    rdd_cutoff: Optional[float] = None
    rdd_y_side: Literal["below", "above"] = "below"
    rdd_moments: Literal["side", "pooled"] = "side"
    undefined_as_zero: bool = Field(default=False, description="Score an all-tied AD effective sample as 0 instead of failing")

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        return v

    @field_validator("targets")
    @classmethod
    def validate_targets(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("targets must be distinct")
        if any(not np.isfinite(t) for t in v):
            raise ValueError("targets must be finite")
        return v

    @model_validator(mode="after")
    def validate_manual_q(self):
        if self.q_mode == "manual":
            if not self.manual_q:
                raise ValueError("manual q_mode requires manual_q")
            if len(self.manual_q) not in (1, max(len(self.targets), 1)):
                raise ValueError("manual_q needs one pair or one pair per target")
            for q_y, q_x in self.manual_q:
                if q_y < 1 or q_x < 1:
                    raise ValueError("manual q values must be >= 1")
        return self

    def q_for(self, position: int) -> Tuple[int, int]:
        """Manual (q_y, q_x) for the target at ``position``."""
        if len(self.manual_q) == 1:
            return self.manual_q[0]
        return self.manual_q[position]


@dataclass
class TargetResult:
    """Outcome of the test at one target point."""

    target: TargetPoint
    q_y: int
    q_x: int
    statistic_value: float
    critical_value: float
    p_value: float
    reject: bool
    per_target_level: float
    default_critical_value: Optional[float] = None
    refined_r: Optional[int] = None
    achieved_level: Optional[float] = None
    null_method: Optional[str] = None
    tuning: Optional[Dict[str, Any]] = None
    warnings: List[str] = field(default_factory=list)
    effective: Optional[EffectiveSample] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "target": self.target.z0,
            "q_y": self.q_y,
            "q_x": self.q_x,
            "statistic_value": self.statistic_value,
            "critical_value": self.critical_value,
            "default_critical_value": self.default_critical_value,
            "refined_r": self.refined_r,
            "p_value": self.p_value,
            "reject": self.reject,
            "per_target_level": self.per_target_level,
            "achieved_level": self.achieved_level,
            "null_method": self.null_method,
            "tuning": self.tuning,
        }


@dataclass
class TestOutcome:
    """Per-target results and the overall multi-target decision."""

    __test__ = False  # not a pytest test class

    per_target: List[TargetResult]
    overall_reject: bool
    config: TestConfig
    warnings: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """JSON report: config echo, per_target array, overall_reject, warnings."""
        return {
            "config": self.config.model_dump(mode="json"),
            "per_target": [r.to_dict() for r in self.per_target],
            "overall_reject": self.overall_reject,
            "warnings": list(self.warnings),
            "metadata": dict(self.metadata),
        }
