"""Tabular Q-learning baselines: one centralized controller and fully
independent learners.

Both work on normalized rewards with optimistic initialization T - t + 1,
the horizon-aware learning rate (T + 1) / (T + n) for the n-th visit of a
(step, state, action) cell, and epsilon-greedy exploration that decays
linearly from 1 to 0.05 over the first half of the run.  The centralized
controller treats the joint action as a single action and maximizes the
mean of the agents' rewards (the same argmax as the sum); the independent
learners each see only their own action and reward.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .games import AggregativeMarkovGame, StateId, aggregate


@dataclass(frozen=True)
class QConfig:
    eps_start: float = 1.0
    eps_end: float = 0.05
    decay_fraction: float = 0.5   # share of episodes over which eps decays

    def epsilon(self, episode: int, episodes: int) -> float:
        span = max(int(episodes * self.decay_fraction), 1)
        frac = min(max(episode - 1, 0) / span, 1.0)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


class TabularQState:
    """Q table over (t, state) -> per-action values, with visit counts."""

    def __init__(self, horizon: int, num_actions_fn):
        self.horizon = horizon
        self._num_actions_fn = num_actions_fn
        self._q: dict = {}
        self._n: dict = {}

    def q_values(self, t: int, s: StateId) -> list:
        key = (t, s)
        row = self._q.get(key)
        if row is None:
            row = [float(self.horizon - t + 1)] * self._num_actions_fn(t, s)
            self._q[key] = row
            self._n[key] = [0] * len(row)
        return row

    def greedy(self, t: int, s: StateId) -> int:
        row = self.q_values(t, s)
        best = 0
        for idx in range(1, len(row)):
            if row[idx] > row[best]:
                best = idx
        return best

    def max_q(self, t: int, s: StateId) -> float:
        if t > self.horizon:
            return 0.0
        return max(self.q_values(t, s))

    def update(self, t: int, s: StateId, action_index: int, target: float) -> None:
        row = self.q_values(t, s)
        counts = self._n[(t, s)]
        counts[action_index] += 1
        alpha = (self.horizon + 1) / (self.horizon + counts[action_index])
        value = (1.0 - alpha) * row[action_index] + alpha * target
        # optimistic init keeps targets in range; clip float drift only
        row[action_index] = min(max(value, 0.0), float(self.horizon - t + 1))


def _epsilon_greedy(q: TabularQState, t: int, s: StateId, eps: float, rng) -> int:
    if rng.random() < eps:
        return int(rng.integers(0, len(q.q_values(t, s))))
    return q.greedy(t, s)


class CentralizedQLearner:
    """One controller choosing the joint action to maximize total reward."""

    def __init__(self, game: AggregativeMarkovGame, config: QConfig = QConfig()):
        self.game = game
        self.config = config
        self._joint: dict = {}
        self.table = TabularQState(game.horizon, lambda t, s: len(self._joint_actions(t, s)))

    def _joint_actions(self, t: int, s: StateId) -> list:
        key = (t, s)
        combos = self._joint.get(key)
        if combos is None:
            combos = list(itertools.product(*(
                self.game.actions(t, s, i).ids for i in range(self.game.num_agents)
            )))
            self._joint[key] = combos
        return combos

    def episode(self, episode: int, episodes: int, rng) -> list:
        """Run one episode; returns per-agent normalized returns."""
        game = self.game
        eps = self.config.epsilon(episode, episodes)
        s = _draw_state(game.initial_distribution, game.states[0], rng)
        returns = [0.0] * game.num_agents
        for t in range(1, game.horizon + 1):
            idx = _epsilon_greedy(self.table, t, s, eps, rng)
            joint = self._joint_actions(t, s)[idx]
            rewards, g_all = _joint_rewards(game, t, s, joint)
            for i, r in enumerate(rewards):
                returns[i] += r
            s2 = None
            if t < game.horizon:
                key = g_all if game.aggregate_dependent else joint
                s2 = _draw_state(game.transition(t, s, key), game.states[t], rng)
            mean_r = sum(rewards) / len(rewards)
            target = mean_r + (self.table.max_q(t + 1, s2) if s2 is not None else 0.0)
            self.table.update(t, s, idx, target)
            s = s2
        return returns

    def greedy_joint(self, t: int, s: StateId) -> tuple:
        return self._joint_actions(t, s)[self.table.greedy(t, s)]


class IndependentQLearner:
    """Per-agent Q learners that never see each other's actions or rewards."""

    def __init__(self, game: AggregativeMarkovGame, config: QConfig = QConfig()):
        self.game = game
        self.config = config
        self.tables = [
            TabularQState(game.horizon, lambda t, s, i=i: len(game.actions(t, s, i)))
            for i in range(game.num_agents)
        ]

    def episode(self, episode: int, episodes: int, rng) -> list:
        game = self.game
        eps = self.config.epsilon(episode, episodes)
        s = _draw_state(game.initial_distribution, game.states[0], rng)
        returns = [0.0] * game.num_agents
        for t in range(1, game.horizon + 1):
            idxs = [
                _epsilon_greedy(self.tables[i], t, s, eps, rng)
                for i in range(game.num_agents)
            ]
            joint = tuple(
                game.actions(t, s, i).ids[idx] for i, idx in enumerate(idxs)
            )
            rewards, g_all = _joint_rewards(game, t, s, joint)
            for i, r in enumerate(rewards):
                returns[i] += r
            s2 = None
            if t < game.horizon:
                key = g_all if game.aggregate_dependent else joint
                s2 = _draw_state(game.transition(t, s, key), game.states[t], rng)
            for i in range(game.num_agents):
                target = rewards[i] + (self.tables[i].max_q(t + 1, s2) if s2 is not None else 0.0)
                self.tables[i].update(t, s, idxs[i], target)
            s = s2
        return returns


def _joint_rewards(game: AggregativeMarkovGame, t: int, s: StateId, joint: tuple):
    values = [game.actions(t, s, i).value_of(a) for i, a in enumerate(joint)]
    g_all = aggregate(values, game.aggregator)
    rewards = []
    for i in range(game.num_agents):
        others = values[:i] + values[i + 1:]
        g_others = aggregate(others, game.aggregator) if others else 0.0
        rewards.append(game.reward(t, s, i, joint[i], g_others))
    return rewards, g_all


def _draw_state(dist, order, rng) -> StateId:
    u = rng.random()
    acc = 0.0
    last = None
    for s in order:
        p = dist.get(s, 0.0)
        if p <= 0.0:
            continue
        last = s
        acc += p
        if u < acc:
            return s
    return last


def joint_optimum(game: AggregativeMarkovGame) -> float:
    """Exact DP optimum of the expected total raw reward over all agents.

    Backward induction over joint actions; the benchmark for how much total
    value any coordination scheme could extract.
    """
    T = game.horizon
    nxt: dict | None = None
    level: dict = {}
    for t in range(T, 0, -1):
        level = {}
        for s in game.states[t - 1]:
            combos = itertools.product(*(
                game.actions(t, s, i).ids for i in range(game.num_agents)
            ))
            best = -math.inf
            for joint in combos:
                rewards, g_all = _joint_rewards(game, t, s, joint)
                total = sum(
                    game.raw_return(r, 1) for r in rewards
                )
                if t < T:
                    key = g_all if game.aggregate_dependent else joint
                    for s2, p in game.transition(t, s, key).items():
                        if p > 0.0:
                            total += p * nxt[s2]
                best = max(best, total)
            level[s] = best
        nxt = level
    return sum(
        game.initial_distribution.get(s, 0.0) * level[s] for s in game.states[0]
    )
