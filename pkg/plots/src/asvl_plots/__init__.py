"""Figure regeneration from stage-based V-learning experiment csv logs."""

from .figures import (
    KINDS,
    FigureSpec,
    comparison_series,
    fit_exponent,
    read_rewards,
    read_sweep,
    render,
    rewards_series,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "KINDS",
    "comparison_series",
    "fit_exponent",
    "read_rewards",
    "read_sweep",
    "render",
    "rewards_series",
]
