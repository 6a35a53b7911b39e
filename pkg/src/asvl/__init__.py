"""Decentralized stage-based V-learning on aggregative Markov games.

Independent agents run an adaptive-stage bandit learner over a shared
episodic game; recorded policy snapshots make the equilibrium gap of the
induced output policy exactly computable afterwards.
"""

from .baselines import CentralizedQLearner, IndependentQLearner, QConfig, joint_optimum
from .bandit import TsallisBandit, normalizer_by_bisection, solve_normalizer
from .certify import (
    CertifiedPolicy,
    GapCertificate,
    SnapshotStore,
    best_response_upper,
    exact_policy_value,
    gap_certificate,
    load_store,
    lower_estimates,
    sample_trajectory,
    save_store,
)
from .envs import fishermen_game, load_game_file, random_amg
from .fluctuation import FluctuationConfig, FluctuationMode, coefficient, default_lambda_min
from .games import (
    ActionSet,
    AggregativeMarkovGame,
    Aggregator,
    aggregate,
    expected_stage_value,
    opponent_aggregate_distribution,
)
from .harness import RunConfig, RunResult, fit_power_law, run, sweep
from .learner import LearnerConfig, StageEvent, StageVLearner, default_iota

__version__ = "0.1.0"

__all__ = [
    "ActionSet",
    "AggregativeMarkovGame",
    "Aggregator",
    "CentralizedQLearner",
    "CertifiedPolicy",
    "FluctuationConfig",
    "FluctuationMode",
    "GapCertificate",
    "IndependentQLearner",
    "LearnerConfig",
    "QConfig",
    "RunConfig",
    "RunResult",
    "SnapshotStore",
    "StageEvent",
    "StageVLearner",
    "TsallisBandit",
    "aggregate",
    "best_response_upper",
    "coefficient",
    "default_iota",
    "default_lambda_min",
    "exact_policy_value",
    "expected_stage_value",
    "fishermen_game",
    "fit_power_law",
    "gap_certificate",
    "joint_optimum",
    "load_game_file",
    "load_store",
    "lower_estimates",
    "normalizer_by_bisection",
    "opponent_aggregate_distribution",
    "random_amg",
    "run",
    "sample_trajectory",
    "save_store",
    "solve_normalizer",
    "sweep",
]
