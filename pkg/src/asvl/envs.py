"""Benchmark environments: the two-agent fishery game and random instances.

The fishery game is a two-step, two-agent game over a healthy and a depleted
fish stock.  Each agent chooses a high or low fishing effort; individual
catch value f grows concavely in own effort, a congestion cost g grows in the
total effort, and the depleted stock charges an extra maintenance cost.  High
total effort makes the stock more likely to deplete.  Raw payoffs span
[2, 18] and are normalized to [0, 1] by (x - 2) / 16.
"""

from __future__ import annotations

import itertools
import json

import numpy as np

from .games import (
    ActionSet,
    Aggregator,
    AggregativeMarkovGame,
    StateId,
    _agg_key,
)

STOCK_HIGH = "s_h"
STOCK_LOW = "s_l"
EFFORT_HIGH = "a_m"   # catch many fish: effort value 5
EFFORT_LOW = "a_f"    # catch few fish: effort value 3

_EFFORT_VALUES = {EFFORT_HIGH: 5.0, EFFORT_LOW: 3.0}
_STATE_COST = {STOCK_HIGH: 0.0, STOCK_LOW: 1.0}
# P(stock stays/becomes healthy | state, total effort)
_STAY_HIGH = {
    (STOCK_HIGH, 6.0): 1.0,
    (STOCK_HIGH, 8.0): 2.0 / 3.0,
    (STOCK_HIGH, 10.0): 1.0 / 5.0,
    (STOCK_LOW, 6.0): 1.0,
    (STOCK_LOW, 8.0): 1.0 / 2.0,
    (STOCK_LOW, 10.0): 0.0,
}

FISHERMEN_RAW_MIN = 2.0
FISHERMEN_RAW_MAX = 18.0


def fishermen_reward(state: StateId, own_effort: float, total_effort: float) -> float:
    """Raw payoff f(own) - g(total) - cost(state)."""
    if state not in _STATE_COST:
        raise ValueError(f"unknown state {state!r}")
    if own_effort not in (3.0, 5.0):
        raise ValueError(f"effort must be 3 or 5, got {own_effort!r}")
    if total_effort not in (6.0, 8.0, 10.0):
        raise ValueError(f"total effort must be 6, 8 or 10, got {total_effort!r}")
    f = -own_effort**2 / 2.0 + 23.0 * own_effort / 2.0 + 1.0
    g = total_effort**2 / 4.0 - total_effort / 2.0 + 16.0
    return f - g - _STATE_COST[state]


def fishermen_transition(state: StateId, total_effort: float) -> dict:
    """Distribution over next stock states given the total effort."""
    key = (state, float(total_effort))
    if key not in _STAY_HIGH:
        raise ValueError(f"no transition for state {state!r}, total effort {total_effort!r}")
    p = _STAY_HIGH[key]
    return {STOCK_HIGH: p, STOCK_LOW: 1.0 - p}


def fishermen_game(initial_state: StateId = STOCK_HIGH) -> AggregativeMarkovGame:
    """Two-step fishery benchmark; the first-step stock defaults to healthy."""
    if initial_state not in (STOCK_HIGH, STOCK_LOW):
        raise ValueError(f"unknown initial state {initial_state!r}")
    states = ((STOCK_HIGH, STOCK_LOW), (STOCK_HIGH, STOCK_LOW))
    acts = ActionSet(ids=(EFFORT_HIGH, EFFORT_LOW), values=(5.0, 3.0))
    action_sets = {
        (t, s, i): acts
        for t in (1, 2)
        for s in (STOCK_HIGH, STOCK_LOW)
        for i in (0, 1)
    }

    def reward_fn(t, s, agent, action, others_aggregate):
        own = _EFFORT_VALUES[action]
        return fishermen_reward(s, own, own + others_aggregate)

    def transition_fn(t, s, total_effort):
        return fishermen_transition(s, round(total_effort, 9))

    return AggregativeMarkovGame(
        horizon=2,
        num_agents=2,
        states=states,
        action_sets=action_sets,
        aggregator=Aggregator.SUM,
        reward_fn=reward_fn,
        transition_fn=transition_fn,
        initial_distribution={initial_state: 1.0},
        aggregate_dependent=True,
        reward_offset=FISHERMEN_RAW_MIN,
        reward_scale=FISHERMEN_RAW_MAX - FISHERMEN_RAW_MIN,
        name="fishermen",
    )


def random_amg(
    seed: int,
    horizon: int = 2,
    num_agents: int = 2,
    num_states: int = 2,
    num_actions: int = 2,
    aggregate_dependent: bool = True,
    aggregator: Aggregator = Aggregator.SUM,
) -> AggregativeMarkovGame:
    """Random instance with tabulated rewards/transitions, deterministic in seed.

    Action values are positive integers so aggregate samples stay valid for
    the fluctuation estimators.  Rewards are uniform in [0, 1] (already
    normalized); transition rows are Dirichlet(1) draws.
    """
    if min(horizon, num_agents, num_states, num_actions) < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    states = tuple(tuple(range(num_states)) for _ in range(horizon))
    action_sets = {}
    for t in range(1, horizon + 1):
        for s in states[t - 1]:
            for i in range(num_agents):
                values = tuple(float(v) for v in rng.integers(1, 6, size=num_actions))
                action_sets[(t, s, i)] = ActionSet(ids=tuple(range(num_actions)), values=values)

    def others_support(t, s, i):
        value_lists = [action_sets[(t, s, j)].values for j in range(num_agents) if j != i]
        return _enumerate_support(value_lists, aggregator)

    def global_support(t, s):
        value_lists = [action_sets[(t, s, j)].values for j in range(num_agents)]
        return _enumerate_support(value_lists, aggregator)

    rewards = {}
    for t in range(1, horizon + 1):
        for s in states[t - 1]:
            for i in range(num_agents):
                for a in action_sets[(t, s, i)].ids:
                    for g in others_support(t, s, i):
                        rewards[(t, s, i, a, g)] = float(rng.random())

    transitions = {}
    for t in range(1, horizon):
        for s in states[t - 1]:
            if aggregate_dependent:
                keys = list(global_support(t, s))
            else:
                keys = list(itertools.product(*(
                    action_sets[(t, s, j)].ids for j in range(num_agents)
                )))
            for key in keys:
                row = rng.dirichlet(np.ones(num_states))
                transitions[(t, s, key)] = {
                    s2: float(p) for s2, p in zip(states[t], row)
                }

    rho_row = rng.dirichlet(np.ones(num_states))
    initial = {s: float(p) for s, p in zip(states[0], rho_row)}

    def reward_fn(t, s, agent, action, others_aggregate):
        return rewards[(t, s, agent, action, _agg_key(others_aggregate))]

    def transition_fn(t, s, key):
        if aggregate_dependent:
            key = _agg_key(key)
        return transitions[(t, s, key)]

    return AggregativeMarkovGame(
        horizon=horizon,
        num_agents=num_agents,
        states=states,
        action_sets=action_sets,
        aggregator=aggregator,
        reward_fn=reward_fn,
        transition_fn=transition_fn,
        initial_distribution=initial,
        aggregate_dependent=aggregate_dependent,
        name=f"random-{seed}",
    )


def _enumerate_support(value_lists, aggregator) -> tuple:
    if not value_lists:
        return (0.0,)
    sums = {0.0}
    for values in value_lists:
        sums = {acc + float(v) for acc in sums for v in values}
    if aggregator is Aggregator.MEAN:
        return tuple(sorted({_agg_key(x / len(value_lists)) for x in sums}))
    return tuple(sorted({_agg_key(x) for x in sums}))


# -- structured text game files ------------------------------------------------


def dump_game_file(game: AggregativeMarkovGame, path) -> None:
    """Write a tabular JSON description of the game (ids must be JSON-safe)."""
    actions = []
    rewards = []
    transitions = []
    for t in range(1, game.horizon + 1):
        for s in game.states[t - 1]:
            for i in range(game.num_agents):
                acts = game.actions(t, s, i)
                actions.append({
                    "t": t, "state": s, "agent": i,
                    "ids": list(acts.ids), "values": list(acts.values),
                })
                for a in acts.ids:
                    for g in game.others_aggregate_support(t, s, i):
                        rewards.append({
                            "t": t, "state": s, "agent": i, "action": a,
                            "others_aggregate": g,
                            "reward": game.reward_raw(t, s, i, a, g),
                        })
            if t == game.horizon:
                continue
            if game.aggregate_dependent:
                for g in game.global_aggregate_support(t, s):
                    transitions.append({
                        "t": t, "state": s, "aggregate": g,
                        "next": dict(game.transition(t, s, g)),
                    })
            else:
                for combo in itertools.product(*(
                    game.actions(t, s, j).ids for j in range(game.num_agents)
                )):
                    transitions.append({
                        "t": t, "state": s, "joint_action": list(combo),
                        "next": dict(game.transition(t, s, combo)),
                    })
    doc = {
        "name": game.name,
        "horizon": game.horizon,
        "num_agents": game.num_agents,
        "aggregator": game.aggregator.value,
        "aggregate_dependent": game.aggregate_dependent,
        "states": [list(tier) for tier in game.states],
        "actions": actions,
        "rewards": rewards,
        "reward_normalization": {"offset": game.reward_offset, "scale": game.reward_scale},
        "transitions": transitions,
        "initial_distribution": {s: game.initial_distribution.get(s, 0.0) for s in game.states[0]},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)


def load_game_file(path) -> AggregativeMarkovGame:
    """Load a game from the JSON schema written by dump_game_file."""
    with open(path) as fh:
        doc = json.load(fh)
    states = tuple(tuple(tier) for tier in doc["states"])
    action_sets = {}
    for row in doc["actions"]:
        action_sets[(row["t"], row["state"], row["agent"])] = ActionSet(
            ids=tuple(row["ids"]), values=tuple(float(v) for v in row["values"])
        )
    rewards = {}
    for row in doc["rewards"]:
        key = (row["t"], row["state"], row["agent"], row["action"], _agg_key(row["others_aggregate"]))
        rewards[key] = float(row["reward"])
    aggregate_dependent = bool(doc["aggregate_dependent"])
    # JSON object keys are strings; map them back onto the declared state ids.
    by_repr = [{str(s): s for s in tier} for tier in states]
    transitions = {}
    for row in doc["transitions"]:
        if aggregate_dependent:
            key = (row["t"], row["state"], _agg_key(row["aggregate"]))
        else:
            key = (row["t"], row["state"], tuple(row["joint_action"]))
        tier = by_repr[row["t"]]  # states at step t+1
        transitions[key] = {tier[s2]: float(p) for s2, p in row["next"].items()}

    def reward_fn(t, s, agent, action, others_aggregate):
        return rewards[(t, s, agent, action, _agg_key(others_aggregate))]

    def transition_fn(t, s, key):
        if aggregate_dependent:
            return transitions[(t, s, _agg_key(key))]
        return transitions[(t, s, tuple(key))]

    norm = doc.get("reward_normalization", {"offset": 0.0, "scale": 1.0})
    initial = {by_repr[0][s]: float(p) for s, p in doc["initial_distribution"].items()}
    return AggregativeMarkovGame(
        horizon=int(doc["horizon"]),
        num_agents=int(doc["num_agents"]),
        states=states,
        action_sets=action_sets,
        aggregator=Aggregator(doc["aggregator"]),
        reward_fn=reward_fn,
        transition_fn=transition_fn,
        initial_distribution=initial,
        aggregate_dependent=aggregate_dependent,
        reward_offset=float(norm["offset"]),
        reward_scale=float(norm["scale"]),
        name=doc.get("name", ""),
    )
