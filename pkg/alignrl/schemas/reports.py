"""
Evaluation report schemas.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

ALIGNMENT_COLUMNS = ("target", "mean_return", "std_return", "mean_abs_err", "episodes")
ABLATION_COLUMNS = ("variant_or_N", "mean_abs_err")
SAFETY_COLUMNS = ("target_fraction", "mean_return", "adverse_per_1k", "remission_rate", "episodes")

# adverse events are reported per this many episodes
ADVERSE_NORMALIZATION = 1000


class AlignmentRow(BaseModel):
    """Aggregate of the aligned rollouts at one target return."""
    target: float
    mean_return: float
    std_return: float = Field(..., ge=0.0)
    mean_abs_err: float = Field(..., ge=0.0)
    episodes: int = Field(..., ge=1)


class AlignmentReport(BaseModel):
    """One row per target return."""
    rows: List[AlignmentRow]
    r_max: float
    removal_percent: float = 0.0

    @property
    def mean_abs_err(self) -> float:
        """Mean absolute error averaged over targets."""
        if not self.rows:
            return 0.0
        return sum(row.mean_abs_err for row in self.rows) / len(self.rows)


class AblationRow(BaseModel):
    variant_or_N: str
    mean_abs_err: float = Field(..., ge=0.0)


class AblationReport(BaseModel):
    rows: List[AblationRow]


class SafetyReport(BaseModel):
    """Return and outcome statistics of aligned rollouts in the treatment env."""
    target_fraction: float
    target: float
    mean_return: float
    adverse_per_1k: float = Field(..., ge=0.0)
    remission_rate: float = Field(..., ge=0.0, le=1.0)
    episodes: int = Field(..., ge=0)
    adverse_events: int = Field(..., ge=0)
    remissions: int = Field(..., ge=0)
    exhausted: int = Field(..., ge=0, description="Episodes ending at the step limit")
    normalization: int = ADVERSE_NORMALIZATION

    @model_validator(mode="after")
    def _check_partition(self) -> "SafetyReport":
        if self.adverse_events + self.remissions + self.exhausted != self.episodes:
            raise ValueError(
                f"outcome counts {self.adverse_events} + {self.remissions} + {self.exhausted} "
                f"do not sum to {self.episodes} episodes"
            )
        return self


class ExtrapolationReport(BaseModel):
    """Double-check versus conditioning-only error at out-of-support targets."""
    targets: List[float]
    full_abs_err: float
    conditioning_only_abs_err: float
    seeds: int = 1
    dataset_r_max: Optional[float] = None

    @property
    def gap(self) -> float:
        return self.conditioning_only_abs_err - self.full_abs_err
