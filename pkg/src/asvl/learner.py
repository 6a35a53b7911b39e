"""Decentralized stage-based V-learner for one agent.

Each (step, state) pair runs its own Tsallis-INF bandit over the agent's
local actions.  Play is partitioned into stages whose lengths grow roughly
geometrically, modulated by the fluctuation coefficient of the aggregate
samples seen during the stage.  At a stage boundary the optimistic value
estimate is refreshed from the stage averages plus an exploration bonus, and
the bandit restarts from the uniform policy.

The agent only ever receives its own action and reward, the common state,
and the broadcast global aggregate; nothing about other agents' identities
or choices crosses this interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .bandit import TsallisBandit
from .fluctuation import FluctuationConfig, coefficient
from .games import ActionSet, StateId


@dataclass(frozen=True)
class LearnerConfig:
    """Shared learner constants.

    ``iota`` is the confidence log-term used by the stage bonus
    bonus_scale * sqrt(T^2 * A_i * iota / count); A_i is the agent's largest
    action-set size.
    """

    iota: float
    bonus_scale: float = 4.0
    fluctuation: FluctuationConfig = field(default_factory=FluctuationConfig)

    def __post_init__(self):
        if self.iota <= 0.0:
            raise ValueError("iota must be positive")
        if self.bonus_scale < 0.0:
            raise ValueError("bonus_scale must be nonnegative")


def default_iota(num_agents: int, num_states: int, max_actions: int,
                 episodes: int, horizon: int, p: float = 0.05) -> float:
    """Confidence log-term log(2 * N * S * A_max * K * T / p)."""
    if min(num_agents, num_states, max_actions, episodes, horizon) < 1:
        raise ValueError("counts must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    return math.log(2.0 * num_agents * num_states * max_actions * episodes * horizon / p)


@dataclass
class StageEvent:
    """Emitted when a (t, state) pair completes a stage."""

    agent: int
    t: int
    state: StateId
    stage_index: int      # index of the stage that just completed, from 0
    length: int           # number of visits in the completed stage
    lam: float            # fluctuation coefficient computed at the boundary
    next_length: int      # scheduled length of the next stage
    vhat: float           # unclipped refreshed value estimate
    vbar: float           # clipped optimistic value used by other steps
    episode: int = 0      # filled in by the driver


class _StateSlot:
    """Per-(t, state) bookkeeping for one agent."""

    __slots__ = (
        "bandit", "visit_count", "stage_length", "stage_index",
        "reward_acc", "value_acc", "agg_samples", "vhat", "vbar", "pending",
    )

    def __init__(self, actions: ActionSet, horizon: int, t: int):
        cap = (horizon - t + 1) / horizon
        self.bandit = TsallisBandit(actions.ids, loss_cap=cap)
        self.visit_count = 0
        self.stage_length = horizon
        self.stage_index = 0
        self.reward_acc = 0.0
        self.value_acc = 0.0
        self.agg_samples: list = []
        self.vhat = float(horizon - t + 1)
        self.vbar = float(horizon - t + 1)
        self.pending = False


class StageVLearner:
    """One agent's learner over all (step, state) pairs.

    ``action_table`` maps (t, state) to this agent's ActionSet.  Call
    ``step`` to draw an action, then ``observe`` with the outcome; ``observe``
    returns a StageEvent when the visit closed a stage, else None.
    """

    def __init__(self, agent: int, horizon: int, action_table: Mapping, config: LearnerConfig):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        config.fluctuation.validate_for_horizon(horizon)
        self.agent = agent
        self.horizon = horizon
        self.action_table = dict(action_table)
        self.config = config
        self.max_actions = max(len(a) for a in self.action_table.values())
        self._slots: dict = {}

    # -- state access --------------------------------------------------------

    def _slot(self, t: int, s: StateId) -> _StateSlot:
        key = (t, s)
        slot = self._slots.get(key)
        if slot is None:
            slot = _StateSlot(self.action_table[key], self.horizon, t)
            self._slots[key] = slot
        return slot

    def value_bar(self, t: int, s: StateId) -> float:
        """Current optimistic value estimate; zero past the horizon."""
        if t > self.horizon:
            return 0.0
        key = (t, s)
        slot = self._slots.get(key)
        if slot is None:
            return float(self.horizon - t + 1)
        return slot.vbar

    def policy(self, t: int, s: StateId) -> tuple:
        """Copy of the current policy, aligned with the action table order."""
        return self._slot(t, s).bandit.policy_snapshot()

    def visit_count(self, t: int, s: StateId) -> int:
        return self._slot(t, s).visit_count

    def stage_length(self, t: int, s: StateId) -> int:
        return self._slot(t, s).stage_length

    # -- the learning step ----------------------------------------------------

    def step(self, t: int, s: StateId, rng):
        """Count the visit and draw an action from the current policy."""
        slot = self._slot(t, s)
        if slot.pending:
            raise RuntimeError(f"step called twice without observe at (t={t}, s={s!r})")
        slot.visit_count += 1
        slot.pending = True
        return slot.bandit.sample(rng)

    def observe(self, t: int, s: StateId, action, reward: float,
                next_state: StateId | None, aggregate: float) -> StageEvent | None:
        """Fold in the outcome of the last step at (t, s).

        ``reward`` is the agent's own normalized reward, ``next_state`` the
        common next state (ignored at the final step) and ``aggregate`` the
        broadcast global aggregate of all action values.
        """
        slot = self._slot(t, s)
        if not slot.pending:
            raise RuntimeError(f"observe without a preceding step at (t={t}, s={s!r})")
        slot.pending = False
        cfg = self.config
        if cfg.fluctuation.mode.value != "none" and aggregate <= 0.0:
            raise ValueError("aggregate must be positive")
        T = self.horizon
        vnext = 0.0 if t >= T else self.value_bar(t + 1, next_state)
        slot.agg_samples.append(float(aggregate))
        slot.reward_acc += reward
        slot.value_acc += vnext
        count = slot.visit_count
        eta = 2.0 * math.sqrt(1.0 / count)
        loss = (T - t + 1 - (reward + vnext)) / T
        slot.bandit.loss_update(action, loss)
        slot.bandit.recompute_policy(eta)
        if count == slot.stage_length:
            return self._end_stage(t, s, slot)
        return None

    def _end_stage(self, t: int, s: StateId, slot: _StateSlot) -> StageEvent:
        cfg = self.config
        T = self.horizon
        count = slot.visit_count
        bonus = cfg.bonus_scale * math.sqrt(T * T * self.max_actions * cfg.iota / count)
        slot.vhat = slot.reward_acc / count + slot.value_acc / count + bonus
        slot.vbar = min(slot.vhat, float(T - t + 1))
        lam = coefficient(cfg.fluctuation, slot.agg_samples, T)
        next_length = max(int(math.floor(lam * (1.0 + 1.0 / T) * slot.stage_length)), 1)
        event = StageEvent(
            agent=self.agent, t=t, state=s, stage_index=slot.stage_index,
            length=slot.stage_length, lam=lam, next_length=next_length,
            vhat=slot.vhat, vbar=slot.vbar,
        )
        slot.stage_index += 1
        slot.stage_length = next_length
        slot.visit_count = 0
        slot.reward_acc = 0.0
        slot.value_acc = 0.0
        slot.agg_samples = []
        slot.bandit.reset()
        return event
