"""Snapshot store and exact gap certification for stage-based learning runs.

The harness records, for every visit to a (step, state) pair, the episode
index and each agent's acting policy (plus, optionally, realized actions,
rewards and the next state), together with the stage boundaries.  The
certified output policy replays those snapshots: draw an episode index k
uniformly, then at each step map k through a uniformly chosen visit of the
stage preceding k's current stage and play the product of the recorded
policies from that visit.

Certification evaluates this policy exactly by backward recursion.  All
values depend on the episode index only through the current stage of the
(step, state) pair at that episode, so tables are memoized per stage.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Mapping, Sequence

from .games import (
    AggregativeMarkovGame,
    StateId,
    aggregate,
    expected_stage_value,
    opponent_aggregate_distribution,
)

_GAP_FLOOR = -1e-6


class _Entry:
    """Visit and stage records for one (t, state) pair."""

    __slots__ = (
        "episodes", "policies", "actions", "rewards", "next_states",
        "stage_lengths", "stage_end_episodes", "stage_lambdas",
        "stage_vhat", "stage_vbar", "stage_final_policies",
        "last_policies", "_cums",
    )

    def __init__(self, num_agents: int):
        self.episodes: list = []
        self.policies = [[] for _ in range(num_agents)]
        self.actions = [[] for _ in range(num_agents)]
        self.rewards = [[] for _ in range(num_agents)]
        self.next_states: list = []
        self.stage_lengths: list = []
        self.stage_end_episodes: list = []
        self.stage_lambdas: list = []
        self.stage_vhat = [[] for _ in range(num_agents)]
        self.stage_vbar = [[] for _ in range(num_agents)]
        self.stage_final_policies = [[] for _ in range(num_agents)]
        self.last_policies: list | None = None
        self._cums: list = []

    def cums(self) -> list:
        if len(self._cums) != len(self.stage_lengths):
            acc = 0
            cums = []
            for length in self.stage_lengths:
                acc += length
                cums.append(acc)
            self._cums = cums
        return self._cums


class SnapshotStore:
    """Everything needed to replay and certify a finished (or running) run.

    ``compact`` keeps only each stage's final policy instead of one snapshot
    per visit; certification then treats every visit of a stage as using that
    final policy, which is an approximation.  ``log_samples`` additionally
    records realized actions, rewards and next states, which the lower-bound
    estimates require.
    """

    def __init__(self, horizon: int, num_agents: int, max_actions: Sequence[int],
                 iota: float, bonus_scale: float = 4.0,
                 compact: bool = False, log_samples: bool = False):
        self.horizon = horizon
        self.num_agents = num_agents
        self.max_actions = tuple(int(a) for a in max_actions)
        self.iota = float(iota)
        self.bonus_scale = float(bonus_scale)
        self.compact = bool(compact)
        self.log_samples = bool(log_samples)
        self.episodes = 0
        self._entries: dict = {}

    # -- recording -----------------------------------------------------------

    def _entry(self, t: int, s: StateId) -> _Entry:
        key = (t, s)
        entry = self._entries.get(key)
        if entry is None:
            entry = _Entry(self.num_agents)
            self._entries[key] = entry
        return entry

    def entry(self, t: int, s: StateId) -> _Entry | None:
        return self._entries.get((t, s))

    def keys(self):
        return self._entries.keys()

    def record_visit(self, t: int, s: StateId, episode: int, policies: Sequence,
                     actions: Sequence | None = None, rewards: Sequence | None = None,
                     next_state: StateId | None = None) -> None:
        entry = self._entry(t, s)
        if entry.episodes and episode <= entry.episodes[-1]:
            raise ValueError(f"visits must arrive in episode order at (t={t}, s={s!r})")
        entry.episodes.append(episode)
        entry.last_policies = [tuple(p) for p in policies]
        if not self.compact:
            for i in range(self.num_agents):
                entry.policies[i].append(tuple(policies[i]))
        if self.log_samples:
            if actions is None or rewards is None:
                raise ValueError("log_samples store needs realized actions and rewards")
            for i in range(self.num_agents):
                entry.actions[i].append(actions[i])
                entry.rewards[i].append(float(rewards[i]))
            entry.next_states.append(next_state)
        self.episodes = max(self.episodes, episode)

    def record_stage_end(self, t: int, s: StateId, episode: int, events: Sequence) -> None:
        """Append one completed stage; ``events`` holds every agent's StageEvent."""
        entry = self._entry(t, s)
        first = events[0]
        for ev in events[1:]:
            if (ev.length, ev.stage_index) != (first.length, first.stage_index) or \
                    abs(ev.lam - first.lam) > 1e-12:
                raise ValueError("stage bookkeeping diverged across agents")
        if first.stage_index != len(entry.stage_lengths):
            raise ValueError(f"stage records out of order at (t={t}, s={s!r})")
        entry.stage_lengths.append(first.length)
        entry.stage_end_episodes.append(episode)
        entry.stage_lambdas.append(first.lam)
        if entry.last_policies is None:
            raise ValueError("stage end recorded before any visit")
        for i in range(self.num_agents):
            entry.stage_vhat[i].append(events[i].vhat)
            entry.stage_vbar[i].append(events[i].vbar)
            entry.stage_final_policies[i].append(entry.last_policies[i])

    # -- stage bookkeeping queries --------------------------------------------

    def current_stage_index(self, t: int, s: StateId, k: int) -> int:
        """Index of the stage in effect for (t, s) at the beginning of episode k."""
        entry = self._entries.get((t, s))
        if entry is None:
            return 0
        n_before = bisect_left(entry.episodes, k)
        return bisect_right(entry.cums(), n_before)

    def prev_stage_positions(self, t: int, s: StateId, k: int) -> range | None:
        """Visit positions of the stage right before episode k's current stage."""
        entry = self._entries.get((t, s))
        if entry is None:
            return None
        j = self.current_stage_index(t, s, k)
        if j == 0:
            return None
        cums = entry.cums()
        lo = cums[j - 2] if j >= 2 else 0
        return range(lo, cums[j - 1])

    def visit_stage_index(self, entry: _Entry, position: int) -> int:
        return bisect_right(entry.cums(), position)

    def policy_at(self, t: int, s: StateId, agent: int, position: int) -> tuple:
        entry = self._entries[(t, s)]
        if self.compact:
            return entry.stage_final_policies[agent][self.visit_stage_index(entry, position)]
        return entry.policies[agent][position]

    def optimistic_value_at(self, t: int, s: StateId, agent: int, k: int) -> float:
        """The learner's clipped optimistic value at the beginning of episode k."""
        entry = self._entries.get((t, s))
        initial = float(self.horizon - t + 1)
        if entry is None:
            return initial
        idx = bisect_left(entry.stage_end_episodes, k)
        if idx == 0:
            return initial
        return entry.stage_vbar[agent][idx - 1]

    def bonus(self, agent: int, count: int) -> float:
        T = self.horizon
        return self.bonus_scale * math.sqrt(T * T * self.max_actions[agent] * self.iota / count)

    def stage_counts_up_to(self, t: int, s: StateId, episodes: int):
        """How many k in [1, episodes] sit in each current-stage index."""
        entry = self._entries.get((t, s))
        ends = entry.stage_end_episodes if entry is not None else []
        counts = []
        prev = 0
        for e in ends:
            hi = min(e, episodes)
            lo = min(prev, episodes)
            counts.append(max(hi - lo, 0))
            prev = e
        counts.append(max(episodes - min(prev, episodes), 0))
        return counts


# -- value tables ---------------------------------------------------------------


class ValueTable:
    """Per-(t, state, stage) values with episode-index resolution."""

    def __init__(self, store: SnapshotStore, game: AggregativeMarkovGame, agent: int):
        self.store = store
        self.game = game
        self.agent = agent
        self._memo: dict = {}

    def at_stage(self, t: int, s: StateId, stage: int) -> float:
        key = (t, s, stage)
        value = self._memo.get(key)
        if value is None:
            value = self._compute(t, s, stage)
            self._memo[key] = value
        return value

    def at_episode(self, t: int, s: StateId, k: int) -> float:
        return self.at_stage(t, s, self.store.current_stage_index(t, s, k))

    def initial_average(self, episodes: int, initial_state: StateId | None = None) -> float:
        """Average over k in [1, episodes], ``initial_distribution``-weighted
        unless a fixed initial state is given."""
        if episodes < 1:
            raise ValueError("episodes must be >= 1")
        if initial_state is not None:
            weights = {initial_state: 1.0}
        else:
            weights = self.game.initial_distribution
        total = 0.0
        for s1, w in weights.items():
            if w <= 0.0:
                continue
            counts = self.store.stage_counts_up_to(1, s1, episodes)
            acc = 0.0
            for stage, n in enumerate(counts):
                if n:
                    acc += n * self.at_stage(1, s1, stage)
            total += w * acc / episodes
        return total

    def _compute(self, t: int, s: StateId, stage: int) -> float:
        raise NotImplementedError


class _PolicyValueTable(ValueTable):
    """Exact value of the certified policy chain started at stage ``stage``."""

    def _compute(self, t: int, s: StateId, stage: int) -> float:
        if stage == 0:
            return 0.0
        store, game, agent = self.store, self.game, self.agent
        entry = store.entry(t, s)
        cums = entry.cums()
        lo = cums[stage - 2] if stage >= 2 else 0
        hi = cums[stage - 1]
        terminal = t >= game.horizon
        nxt = game.states[t] if not terminal else ()
        total = 0.0
        for pos in range(lo, hi):
            e = entry.episodes[pos]
            own = store.policy_at(t, s, agent, pos)
            opp = {j: store.policy_at(t, s, j, pos) for j in range(game.num_agents) if j != agent}
            cont = None
            if not terminal:
                cont = {s2: self.at_episode(t + 1, s2, e) for s2 in nxt}
            total += expected_stage_value(game, t, s, agent, own, opp, cont)
        return total / (hi - lo)


class _BestResponseTable(ValueTable):
    """Upper bound on any deviator's value against the certified policy."""

    def _compute(self, t: int, s: StateId, stage: int) -> float:
        T = self.game.horizon
        if stage == 0:
            return float(T - t + 1)
        store, game, agent = self.store, self.game, self.agent
        entry = store.entry(t, s)
        cums = entry.cums()
        lo = cums[stage - 2] if stage >= 2 else 0
        hi = cums[stage - 1]
        acts = game.actions(t, s, agent)
        sums = [0.0] * len(acts)
        terminal = t >= T
        nxt = game.states[t] if not terminal else ()
        for pos in range(lo, hi):
            e = entry.episodes[pos]
            opp = {j: store.policy_at(t, s, j, pos) for j in range(game.num_agents) if j != agent}
            cont = None
            if not terminal:
                cont = {s2: self.at_episode(t + 1, s2, e) for s2 in nxt}
            for idx, term in enumerate(_per_action_values(game, t, s, agent, opp, cont)):
                sums[idx] += term
        return max(sums) / (hi - lo)


class _LowerEstimateTable(ValueTable):
    """Pessimistic value estimates rebuilt from the realized samples."""

    def _compute(self, t: int, s: StateId, stage: int) -> float:
        if stage == 0:
            return 0.0
        store, game, agent = self.store, self.game, self.agent
        if not store.log_samples:
            raise ValueError("run was recorded without sample logging")
        entry = store.entry(t, s)
        cums = entry.cums()
        lo = cums[stage - 2] if stage >= 2 else 0
        hi = cums[stage - 1]
        terminal = t >= game.horizon
        total = 0.0
        for pos in range(lo, hi):
            term = entry.rewards[agent][pos]
            if not terminal:
                e = entry.episodes[pos]
                s2 = entry.next_states[pos]
                term += self.at_episode(t + 1, s2, e)
            total += term
        count = hi - lo
        return max(total / count - store.bonus(agent, count), 0.0)


def _per_action_values(game: AggregativeMarkovGame, t: int, s: StateId, agent: int,
                       opponent_policies: Mapping, continuation: Mapping | None) -> list:
    """E[r + P*V] for each of the agent's actions under the opponents' product."""
    acts = game.actions(t, s, agent)
    terminal = continuation is None
    out = []
    if game.aggregate_dependent or game.num_agents == 1:
        opp = opponent_aggregate_distribution(game, t, s, agent, opponent_policies)
        for a, v in zip(acts.ids, acts.values):
            term = 0.0
            for g, pg in opp.items():
                part = game.reward(t, s, agent, a, g)
                if not terminal:
                    g_all = game.global_aggregate(agent, float(v), g)
                    for s2, pt in game.transition(t, s, g_all).items():
                        if pt > 0.0:
                            part += pt * continuation[s2]
                term += pg * part
            out.append(term)
        return out
    others = [j for j in range(game.num_agents) if j != agent]
    combos = [((), 1.0)]
    for j in others:
        pol = opponent_policies[j]
        aset = game.actions(t, s, j)
        combos = [
            (partial + ((j, idx),), p * pol[idx])
            for partial, p in combos
            for idx in range(len(aset))
            if pol[idx] > 0.0
        ]
        if len(combos) > 10**6:
            raise ValueError("joint space too large; transition not aggregate-dependent")
    for a_idx, a in enumerate(acts.ids):
        term = 0.0
        for combo, prob in combos:
            values = [game.actions(t, s, j).values[idx] for j, idx in combo]
            g = aggregate(values, game.aggregator) if values else 0.0
            part = game.reward(t, s, agent, a, g)
            if not terminal:
                ids = []
                it = iter(combo)
                for j in range(game.num_agents):
                    if j == agent:
                        ids.append(a)
                    else:
                        jj, idx = next(it)
                        ids.append(game.actions(t, s, jj).ids[idx])
                for s2, pt in game.transition(t, s, tuple(ids)).items():
                    if pt > 0.0:
                        part += pt * continuation[s2]
            term += prob * part
        out.append(term)
    return out


# -- public certification API ----------------------------------------------------


def exact_policy_value(store: SnapshotStore, game: AggregativeMarkovGame, agent: int) -> ValueTable:
    return _PolicyValueTable(store, game, agent)


def best_response_upper(store: SnapshotStore, game: AggregativeMarkovGame, agent: int) -> ValueTable:
    return _BestResponseTable(store, game, agent)


def lower_estimates(store: SnapshotStore, game: AggregativeMarkovGame, agent: int) -> ValueTable:
    if not store.log_samples:
        raise ValueError("run was recorded without sample logging")
    return _LowerEstimateTable(store, game, agent)


@dataclass(frozen=True)
class GapCertificate:
    """Per-agent certified value, best-response upper bound and gap."""

    episodes: int
    values: tuple
    br_uppers: tuple
    gaps: tuple
    gap: float

    def rows(self, seed: int):
        for i in range(len(self.values)):
            yield {
                "seed": seed, "K": self.episodes, "agent": i,
                "value": self.values[i], "br_upper": self.br_uppers[i],
                "gap": self.gaps[i],
            }


def gap_certificate(store: SnapshotStore, game: AggregativeMarkovGame,
                    episodes: int | None = None,
                    initial_state: StateId | None = None) -> GapCertificate:
    """Exact certificate for the policy mixture over episodes 1..``episodes``.

    Values are averaged over the game's initial distribution unless a fixed
    initial state is supplied.  The per-agent gap is a sound upper bound on
    how much that agent could gain by deviating unilaterally.
    """
    K = store.episodes if episodes is None else int(episodes)
    if K < 1:
        raise ValueError("episodes must be >= 1")
    values = []
    brs = []
    gaps = []
    for i in range(store.num_agents):
        v = exact_policy_value(store, game, i).initial_average(K, initial_state)
        b = best_response_upper(store, game, i).initial_average(K, initial_state)
        g = b - v
        if g < _GAP_FLOOR:
            raise AssertionError(f"negative certified gap {g} for agent {i}")
        values.append(v)
        brs.append(b)
        gaps.append(g)
    return GapCertificate(
        episodes=K, values=tuple(values), br_uppers=tuple(brs),
        gaps=tuple(gaps), gap=max(gaps),
    )


# -- executable certified policy ---------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    t: int
    state: StateId
    actions: tuple
    rewards: tuple      # normalized units
    aggregate: float
    next_state: StateId | None


@dataclass(frozen=True)
class CertifiedPolicy:
    """Replayable output policy: the snapshot store plus a shared seed."""

    store: SnapshotStore
    episodes: int
    seed: int

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


def sample_trajectory(policy: CertifiedPolicy, game: AggregativeMarkovGame, rng) -> list:
    """Roll out one episode of the certified policy; returns StepRecords.

    All agents share the rng (the common-seed coordination device), so a
    fixed seed reproduces the trace exactly.  While a (step, state) pair is
    still in its first stage the joint action falls back to uniform and the
    episode index keeps its current value.
    """
    store = policy.store
    k = int(rng.integers(1, policy.episodes + 1))
    s = _sample_from(game.initial_distribution, game.states[0], rng)
    trace = []
    for t in range(1, game.horizon + 1):
        positions = store.prev_stage_positions(t, s, k)
        actions = []
        if positions is None:
            for i in range(game.num_agents):
                acts = game.actions(t, s, i)
                actions.append(acts.ids[int(rng.integers(0, len(acts)))])
        else:
            pos = positions[int(rng.integers(0, len(positions)))]
            k = store.entry(t, s).episodes[pos]
            for i in range(game.num_agents):
                probs = store.policy_at(t, s, i, pos)
                actions.append(_sample_indexed(game.actions(t, s, i).ids, probs, rng))
        values = [game.actions(t, s, i).value_of(a) for i, a in enumerate(actions)]
        g_all = aggregate(values, game.aggregator)
        rewards = []
        for i in range(game.num_agents):
            others = values[:i] + values[i + 1:]
            g_others = aggregate(others, game.aggregator) if others else 0.0
            rewards.append(game.reward(t, s, i, actions[i], g_others))
        next_state = None
        if t < game.horizon:
            key = g_all if game.aggregate_dependent else tuple(actions)
            next_state = _sample_from(game.transition(t, s, key), game.states[t], rng)
        trace.append(StepRecord(
            t=t, state=s, actions=tuple(actions), rewards=tuple(rewards),
            aggregate=g_all, next_state=next_state,
        ))
        s = next_state
    return trace


def _sample_from(dist: Mapping, order: Sequence, rng) -> StateId:
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


def _sample_indexed(ids: Sequence, probs: Sequence[float], rng):
    u = rng.random()
    acc = 0.0
    for a, p in zip(ids, probs):
        acc += p
        if u < acc:
            return a
    return ids[-1]


# -- serialization -----------------------------------------------------------------


def save_store(store: SnapshotStore, path) -> None:
    """Serialize the store as JSON (state and action ids must be JSON-safe)."""
    entries = []
    for (t, s) in sorted(store.keys(), key=lambda key: (key[0], str(key[1]))):
        entry = store.entry(t, s)
        entries.append({
            "t": t, "state": s,
            "episodes": entry.episodes,
            "policies": None if store.compact else [
                [list(p) for p in entry.policies[i]] for i in range(store.num_agents)
            ],
            "actions": entry.actions if store.log_samples else None,
            "rewards": entry.rewards if store.log_samples else None,
            "next_states": entry.next_states if store.log_samples else None,
            "stage_lengths": entry.stage_lengths,
            "stage_end_episodes": entry.stage_end_episodes,
            "stage_lambdas": entry.stage_lambdas,
            "stage_vhat": entry.stage_vhat,
            "stage_vbar": entry.stage_vbar,
            "stage_final_policies": [
                [list(p) for p in entry.stage_final_policies[i]] for i in range(store.num_agents)
            ],
        })
    doc = {
        "version": 1,
        "horizon": store.horizon,
        "num_agents": store.num_agents,
        "max_actions": list(store.max_actions),
        "iota": store.iota,
        "bonus_scale": store.bonus_scale,
        "compact": store.compact,
        "log_samples": store.log_samples,
        "episodes": store.episodes,
        "entries": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_store(path) -> SnapshotStore:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported store version {doc.get('version')!r}")
    store = SnapshotStore(
        horizon=doc["horizon"], num_agents=doc["num_agents"],
        max_actions=doc["max_actions"], iota=doc["iota"],
        bonus_scale=doc["bonus_scale"], compact=doc["compact"],
        log_samples=doc["log_samples"],
    )
    store.episodes = doc["episodes"]
    for row in doc["entries"]:
        entry = store._entry(row["t"], row["state"])
        entry.episodes = list(row["episodes"])
        if not store.compact:
            entry.policies = [[tuple(p) for p in pol] for pol in row["policies"]]
        if store.log_samples:
            entry.actions = [list(a) for a in row["actions"]]
            entry.rewards = [list(r) for r in row["rewards"]]
            entry.next_states = list(row["next_states"])
        entry.stage_lengths = list(row["stage_lengths"])
        entry.stage_end_episodes = list(row["stage_end_episodes"])
        entry.stage_lambdas = list(row["stage_lambdas"])
        entry.stage_vhat = [list(v) for v in row["stage_vhat"]]
        entry.stage_vbar = [list(v) for v in row["stage_vbar"]]
        entry.stage_final_policies = [[tuple(p) for p in pol] for pol in row["stage_final_policies"]]
        if entry.stage_final_policies[0]:
            entry.last_policies = [pol[-1] for pol in entry.stage_final_policies]
    return store
