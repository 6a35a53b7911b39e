"""Stage-length fluctuation coefficient from observed aggregate samples.

The coefficient lambda in [lambda_min, 1] scales the geometric stage-length
growth factor (1 + 1/T).  It is driven by the dispersion of the positive
aggregate samples collected during the stage: either the coefficient of
variation (scale-invariant) or the mean absolute deviation (scale-dependent),
each clipped against a configured ceiling.  Fewer than two samples, or mode
NONE, give lambda = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class FluctuationMode(Enum):
    CV = "cv"
    MAD = "mad"
    NONE = "none"


DEFAULT_CV_MAX = 0.5


def default_lambda_min(horizon: int) -> float:
    """Largest of T/(T+1) + 0.01 and 0.9, clipped to 1."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return min(1.0, max(horizon / (horizon + 1) + 0.01, 0.9))


@dataclass(frozen=True)
class FluctuationConfig:
    mode: FluctuationMode = FluctuationMode.CV
    lambda_min: float = 0.9
    cv_max: float = DEFAULT_CV_MAX
    mad_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.lambda_min <= 1.0:
            raise ValueError("lambda_min must be in (0, 1]")
        if self.cv_max <= 0.0:
            raise ValueError("cv_max must be positive")
        if self.mad_max <= 0.0:
            raise ValueError("mad_max must be positive")

    def validate_for_horizon(self, horizon: int) -> None:
        # The stage-length recursion only grows when lambda_min * (1 + 1/T) > 1.
        floor = horizon / (horizon + 1)
        if self.lambda_min <= floor:
            raise ValueError(
                f"lambda_min must exceed T/(T+1) = {floor:.6f} for horizon {horizon}"
            )


def coefficient(config: FluctuationConfig, samples: Sequence[float], horizon: int) -> float:
    """Stage-growth coefficient lambda for one completed stage."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    config.validate_for_horizon(horizon)
    if config.mode is not FluctuationMode.NONE:
        for d in samples:
            if d <= 0.0:
                raise ValueError("aggregate must be positive")
    if config.mode is FluctuationMode.NONE or len(samples) < 2:
        return 1.0
    n = len(samples)
    mean = sum(samples) / n
    if config.mode is FluctuationMode.CV:
        var = sum((d - mean) ** 2 for d in samples) / (n - 1)
        dispersion = math.sqrt(var) / mean
        ceiling = config.cv_max
    else:
        dispersion = sum(abs(d - mean) for d in samples) / n
        ceiling = config.mad_max
    gamma = min(dispersion / ceiling, 1.0)
    return config.lambda_min + (1.0 - config.lambda_min) * gamma
