"""Aggregative Markov game model and exact expectation operators.

An aggregative Markov game is a finite-horizon Markov game in which each
agent's reward depends only on the step, the common state, the agent's own
action, and a scalar aggregate (sum or mean) of the other agents' action
values.  Transitions may depend either on the full joint action or only on
the global aggregate.  Rewards are kept normalized to [0, 1] internally; the
affine map back to raw units is stored on the game.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Mapping, Sequence

StateId = Hashable
ActionId = Hashable

# Joint-action enumeration guard for games without aggregate-dependent
# transitions.  Desk-scale instances stay far below this.
JOINT_SPACE_LIMIT = 10**6

_DIST_ATOL = 1e-12
_POLICY_ATOL = 1e-9
_AGG_DECIMALS = 9


class Aggregator(Enum):
    SUM = "sum"
    MEAN = "mean"


def aggregate(values: Sequence[float], aggregator: Aggregator) -> float:
    """Scalar aggregate of a nonempty list of action values."""
    if len(values) == 0:
        raise ValueError("empty aggregate")
    total = 0.0
    for v in values:
        total += float(v)
    if aggregator is Aggregator.MEAN:
        return total / len(values)
    return total


def _agg_key(g: float) -> float:
    # Canonical support key; merges float-addition jitter between
    # enumeration orders without colliding desk-scale action values.
    return round(g, _AGG_DECIMALS)


@dataclass(frozen=True)
class ActionSet:
    """Ordered action ids with their numeric values for aggregation."""

    ids: tuple
    values: tuple

    def __post_init__(self):
        if len(self.ids) == 0:
            raise ValueError("action set must be nonempty")
        if len(self.ids) != len(self.values):
            raise ValueError("action ids and values must align")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate action id")

    def __len__(self) -> int:
        return len(self.ids)

    def value_of(self, action: ActionId) -> float:
        try:
            return self.values[self.ids.index(action)]
        except ValueError:
            raise KeyError(f"unknown action {action!r}") from None

    def index_of(self, action: ActionId) -> int:
        try:
            return self.ids.index(action)
        except ValueError:
            raise KeyError(f"unknown action {action!r}") from None


@dataclass(frozen=True)
class AggregateDistribution:
    """Finite distribution over aggregate values, sorted support."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.support) != len(self.probs) or len(self.support) == 0:
            raise ValueError("support and probs must align and be nonempty")
        if any(p < -_DIST_ATOL for p in self.probs):
            raise ValueError("negative probability")
        if abs(sum(self.probs) - 1.0) > _DIST_ATOL:
            raise ValueError("probabilities must sum to 1")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be sorted and distinct")

    def items(self):
        return zip(self.support, self.probs)

    def mean(self) -> float:
        return sum(g * p for g, p in self.items())


def _check_policy(policy: Sequence[float], actions: ActionSet, who: str) -> None:
    if len(policy) != len(actions):
        raise ValueError(f"{who}: policy length {len(policy)} != {len(actions)} actions")
    if any(p < -_POLICY_ATOL for p in policy):
        raise ValueError(f"{who}: negative probability")
    if abs(sum(policy) - 1.0) > _POLICY_ATOL:
        raise ValueError(f"{who}: policy does not sum to 1")


@dataclass(frozen=True)
class AggregativeMarkovGame:
    """Finite-horizon aggregative Markov game.

    states[t-1] lists the (opaque, hashable) state ids available at step t.
    ``action_sets`` maps (t, state, agent) to an ActionSet.  ``reward_fn``
    returns the *raw* reward for (t, state, agent, action, others_aggregate);
    normalized values are (raw - reward_offset) / reward_scale and must land
    in [0, 1].  ``transition_fn`` maps (t, state, key) to a distribution over
    step-(t+1) states, where key is the global aggregate when
    ``aggregate_dependent`` and the joint action-id tuple otherwise.
    """

    horizon: int
    num_agents: int
    states: tuple
    action_sets: Mapping
    aggregator: Aggregator
    reward_fn: Callable
    transition_fn: Callable
    initial_distribution: Mapping
    aggregate_dependent: bool = True
    reward_offset: float = 0.0
    reward_scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")
        if len(self.states) != self.horizon:
            raise ValueError("states must list one tuple per step")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")
        for t in range(1, self.horizon + 1):
            if len(self.states[t - 1]) == 0:
                raise ValueError(f"no states at step {t}")
            for s in self.states[t - 1]:
                for i in range(self.num_agents):
                    if (t, s, i) not in self.action_sets:
                        raise ValueError(f"missing action set for (t={t}, s={s!r}, agent={i})")
        probs = [self.initial_distribution.get(s, 0.0) for s in self.states[0]]
        if any(p < -_DIST_ATOL for p in probs):
            raise ValueError("initial distribution has negative mass")
        if abs(sum(probs) - 1.0) > _DIST_ATOL:
            raise ValueError("initial distribution must sum to 1")
        self._validate_tables()

    # -- basic accessors ---------------------------------------------------

    def actions(self, t: int, s: StateId, agent: int) -> ActionSet:
        return self.action_sets[(t, s, agent)]

    def max_actions(self, agent: int) -> int:
        """Largest action-set size this agent sees at any (t, s)."""
        return max(
            len(self.actions(t, s, agent))
            for t in range(1, self.horizon + 1)
            for s in self.states[t - 1]
        )

    def max_state_count(self) -> int:
        return max(len(tier) for tier in self.states)

    def reward(self, t: int, s: StateId, agent: int, action: ActionId, others_aggregate: float) -> float:
        """Normalized reward in [0, 1]."""
        raw = self.reward_fn(t, s, agent, action, others_aggregate)
        return (raw - self.reward_offset) / self.reward_scale

    def reward_raw(self, t: int, s: StateId, agent: int, action: ActionId, others_aggregate: float) -> float:
        return self.reward_fn(t, s, agent, action, others_aggregate)

    def raw_return(self, normalized_total: float, steps: int) -> float:
        """Invert normalization for a sum of rewards over ``steps`` steps."""
        return normalized_total * self.reward_scale + self.reward_offset * steps

    def transition(self, t: int, s: StateId, key) -> Mapping:
        if t >= self.horizon:
            raise ValueError(f"no transition at terminal step {t}")
        return self.transition_fn(t, s, key)

    def global_aggregate(self, i: int, own_value: float, others_aggregate: float) -> float:
        """Fold one agent's action value back into the others' aggregate."""
        if self.aggregator is Aggregator.MEAN:
            return (own_value + others_aggregate * (self.num_agents - 1)) / self.num_agents
        return own_value + others_aggregate

    # -- achievable aggregate supports --------------------------------------

    def others_aggregate_support(self, t: int, s: StateId, agent: int) -> tuple:
        values = [self.actions(t, s, j).values for j in range(self.num_agents) if j != agent]
        return _value_support(values, self.aggregator)

    def global_aggregate_support(self, t: int, s: StateId) -> tuple:
        values = [self.actions(t, s, j).values for j in range(self.num_agents)]
        return _value_support(values, self.aggregator)

    def min_global_aggregate(self) -> float:
        return min(
            min(self.global_aggregate_support(t, s))
            for t in range(1, self.horizon + 1)
            for s in self.states[t - 1]
        )

    def aggregate_range(self) -> tuple:
        lo = math.inf
        hi = -math.inf
        for t in range(1, self.horizon + 1):
            for s in self.states[t - 1]:
                sup = self.global_aggregate_support(t, s)
                lo = min(lo, sup[0])
                hi = max(hi, sup[-1])
        return lo, hi

    # -- construction-time validation ---------------------------------------

    def _validate_tables(self):
        for t in range(1, self.horizon + 1):
            for s in self.states[t - 1]:
                for i in range(self.num_agents):
                    acts = self.actions(t, s, i)
                    for a in acts.ids:
                        for g in self.others_aggregate_support(t, s, i):
                            r = self.reward(t, s, i, a, g)
                            if not -_DIST_ATOL <= r <= 1.0 + 1e-9:
                                raise ValueError(
                                    f"normalized reward {r} outside [0, 1] at "
                                    f"(t={t}, s={s!r}, agent={i}, action={a!r}, g={g})"
                                )
                if t == self.horizon:
                    continue
                for key in self._transition_keys(t, s):
                    self._check_transition_row(t, s, key)

    def _transition_keys(self, t: int, s: StateId):
        if self.aggregate_dependent:
            return self.global_aggregate_support(t, s)
        sizes = 1
        for i in range(self.num_agents):
            sizes *= len(self.actions(t, s, i))
        if sizes > JOINT_SPACE_LIMIT:
            return []  # too large to sweep; rows are checked on use instead
        return itertools.product(*(self.actions(t, s, i).ids for i in range(self.num_agents)))

    def _check_transition_row(self, t: int, s: StateId, key):
        dist = self.transition_fn(t, s, key)
        nxt = set(self.states[t])
        total = 0.0
        for s2, p in dist.items():
            if s2 not in nxt:
                raise ValueError(f"transition to unknown state {s2!r} at (t={t}, s={s!r})")
            if p < -_DIST_ATOL:
                raise ValueError(f"negative transition probability at (t={t}, s={s!r})")
            total += p
        if abs(total - 1.0) > _DIST_ATOL:
            raise ValueError(f"transition row does not sum to 1 at (t={t}, s={s!r}, key={key!r})")


def _value_support(value_lists: Sequence[Sequence[float]], aggregator: Aggregator) -> tuple:
    """Achievable aggregates of one value per list (support only)."""
    if not value_lists:
        return (0.0,)
    sums = {0.0}
    for values in value_lists:
        sums = {acc + float(v) for acc in sums for v in values}
    n = len(value_lists)
    if aggregator is Aggregator.MEAN:
        return tuple(sorted({_agg_key(x / n) for x in sums}))
    return tuple(sorted({_agg_key(x) for x in sums}))


def opponent_aggregate_distribution(
    game: AggregativeMarkovGame,
    t: int,
    s: StateId,
    agent: int,
    policies: Mapping,
) -> AggregateDistribution:
    """Exact distribution of the other agents' aggregate under independent play.

    ``policies[j]`` is a probability sequence aligned with
    ``game.actions(t, s, j).ids`` for every ``j != agent``.  Built by iterated
    convolution, so the cost is polynomial in the number of agents and the
    support size rather than exponential in the number of opponents.
    """
    others = [j for j in range(game.num_agents) if j != agent]
    if not others:
        if game.aggregator is Aggregator.MEAN:
            raise ValueError("mean aggregate of zero opponents is undefined")
        return AggregateDistribution((0.0,), (1.0,))
    acc = {0.0: 1.0}
    for j in others:
        acts = game.actions(t, s, j)
        pol = policies[j]
        _check_policy(pol, acts, f"agent {j}")
        nxt: dict = {}
        for g, pg in acc.items():
            for v, pa in zip(acts.values, pol):
                if pa <= 0.0:
                    continue
                key = g + float(v)
                nxt[key] = nxt.get(key, 0.0) + pg * pa
        acc = nxt
    if game.aggregator is Aggregator.MEAN:
        acc = {g / len(others): p for g, p in acc.items()}
    merged: dict = {}
    for g, p in acc.items():
        key = _agg_key(g)
        merged[key] = merged.get(key, 0.0) + p
    support = tuple(sorted(merged))
    return AggregateDistribution(support, tuple(merged[g] for g in support))


def expected_stage_value(
    game: AggregativeMarkovGame,
    t: int,
    s: StateId,
    agent: int,
    policy: Sequence[float],
    opponent_policies: Mapping,
    continuation: Mapping | None = None,
) -> float:
    """Exact one-step lookahead value for ``agent`` at (t, s), normalized units.

    Returns E[r_i + V(s')] under the product of the given per-agent policies,
    where ``continuation`` maps every step-(t+1) state to its value (omit it,
    or pass None, for a zero continuation; always zero at the final step).
    Uses the opponents' aggregate distribution when transitions are
    aggregate-dependent, and guarded joint enumeration otherwise.
    """
    acts = game.actions(t, s, agent)
    _check_policy(policy, acts, f"agent {agent}")
    terminal = t >= game.horizon

    def cont(s2: StateId) -> float:
        if continuation is None:
            return 0.0
        return continuation[s2]

    if game.aggregate_dependent or game.num_agents == 1:
        opp = opponent_aggregate_distribution(game, t, s, agent, opponent_policies)
        total = 0.0
        for a, v, pa in zip(acts.ids, acts.values, policy):
            if pa <= 0.0:
                continue
            for g, pg in opp.items():
                term = game.reward(t, s, agent, a, g)
                if not terminal:
                    g_all = game.global_aggregate(agent, float(v), g)
                    for s2, pt in game.transition(t, s, g_all).items():
                        if pt > 0.0:
                            term += pt * cont(s2)
                total += pa * pg * term
        return total

    sizes = 1
    for j in range(game.num_agents):
        sizes *= len(game.actions(t, s, j))
    if sizes > JOINT_SPACE_LIMIT:
        raise ValueError("joint space too large; transition not aggregate-dependent")
    all_sets = [game.actions(t, s, j) for j in range(game.num_agents)]
    all_pols = [policy if j == agent else opponent_policies[j] for j in range(game.num_agents)]
    for j, (aset, pol) in enumerate(zip(all_sets, all_pols)):
        if j != agent:
            _check_policy(pol, aset, f"agent {j}")
    total = 0.0
    for combo in itertools.product(*(range(len(a)) for a in all_sets)):
        prob = 1.0
        for j, idx in enumerate(combo):
            prob *= all_pols[j][idx]
        if prob <= 0.0:
            continue
        others = [all_sets[j].values[idx] for j, idx in enumerate(combo) if j != agent]
        g = aggregate(others, game.aggregator) if others else 0.0
        a_i = acts.ids[combo[agent]]
        term = game.reward(t, s, agent, a_i, g)
        if not terminal:
            key = tuple(all_sets[j].ids[idx] for j, idx in enumerate(combo))
            for s2, pt in game.transition(t, s, key).items():
                if pt > 0.0:
                    term += pt * cont(s2)
        total += prob * term
    return total
