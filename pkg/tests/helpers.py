"""Independent brute-force oracles the tests check the package against.

Everything here recomputes quantities from first principles (exhaustive
enumeration, direct formula evaluation) without reusing the package's own
convolution, recursion, or table machinery.
"""

from __future__ import annotations

import itertools
import math

from asvl.games import Aggregator


def brute_opponent_aggregate(game, t, s, agent, policies):
    """Aggregate distribution of the other agents by joint enumeration.

    ``policies`` maps opponent index -> probability sequence over that
    opponent's action ids (in id order).  Returns {aggregate: prob}.
    """
    others = [j for j in range(game.num_agents) if j != agent]
    if not others:
        if game.aggregator is Aggregator.SUM:
            return {0.0: 1.0}
        raise ValueError("no opponents to aggregate")
    spaces = []
    for j in others:
        acts = game.actions(t, s, j)
        spaces.append([(acts.values[idx], policies[j][idx]) for idx in range(len(acts))])
    out: dict = {}
    for combo in itertools.product(*spaces):
        prob = 1.0
        vals = []
        for v, p in combo:
            prob *= p
            vals.append(v)
        if prob == 0.0:
            continue
        if game.aggregator is Aggregator.SUM:
            g = math.fsum(vals)
        else:
            g = math.fsum(vals) / len(vals)
        g = round(g, 9)
        out[g] = out.get(g, 0.0) + prob
    return out


def brute_stage_value(game, t, s, agent, policy, opponent_policies, continuation=None):
    """E[r_i + continuation(s')] by enumerating the full joint action space."""
    spaces = []
    for j in range(game.num_agents):
        acts = game.actions(t, s, j)
        pol = policy if j == agent else opponent_policies[j]
        spaces.append([(acts.ids[idx], acts.values[idx], pol[idx]) for idx in range(len(acts))])
    total = 0.0
    for combo in itertools.product(*spaces):
        prob = 1.0
        for _, _, p in combo:
            prob *= p
        if prob == 0.0:
            continue
        ids = [c[0] for c in combo]
        vals = [c[1] for c in combo]
        others = [v for j, v in enumerate(vals) if j != agent]
        if game.aggregator is Aggregator.SUM:
            g_others = math.fsum(others) if others else 0.0
            g_all = math.fsum(vals)
        else:
            g_others = math.fsum(others) / len(others) if others else 0.0
            g_all = math.fsum(vals) / len(vals)
        term = game.reward(t, s, agent, ids[agent], g_others)
        if continuation is not None:
            key = g_all if game.aggregate_dependent else tuple(ids)
            for s2, pt in game.transition(t, s, key).items():
                if pt > 0.0:
                    term += pt * continuation[s2]
        total += prob * term
    return total


def brute_joint_optimum(game):
    """Max expected total raw reward over joint deterministic Markov policies."""
    T = game.horizon
    nxt = None
    level = {}
    for t in range(T, 0, -1):
        level = {}
        for s in game.states[t - 1]:
            spaces = [game.actions(t, s, i) for i in range(game.num_agents)]
            best = -math.inf
            for ids in itertools.product(*(a.ids for a in spaces)):
                vals = [spaces[i].value_of(ids[i]) for i in range(game.num_agents)]
                total = 0.0
                for i in range(game.num_agents):
                    others = [v for j, v in enumerate(vals) if j != i]
                    if game.aggregator is Aggregator.SUM:
                        g = math.fsum(others) if others else 0.0
                    else:
                        g = math.fsum(others) / len(others) if others else 0.0
                    total += game.reward_raw(t, s, i, ids[i], g)
                if t < T:
                    if game.aggregate_dependent:
                        if game.aggregator is Aggregator.SUM:
                            key = math.fsum(vals)
                        else:
                            key = math.fsum(vals) / len(vals)
                    else:
                        key = tuple(ids)
                    for s2, pt in game.transition(t, s, key).items():
                        if pt > 0.0:
                            total += pt * nxt[s2]
                best = max(best, total)
            level[s] = best
        nxt = level
    return math.fsum(p * level[s] for s, p in game.initial_distribution.items() if p > 0.0)


class VisitLog:
    """Plain parallel record of a run, kept independently of SnapshotStore."""

    def __init__(self, num_agents):
        self.num_agents = num_agents
        self.visits = {}        # (t, s) -> list of (episode, [policy per agent])
        self.stage_ends = {}    # (t, s) -> list of end episodes

    def visit(self, t, s, episode, policies):
        self.visits.setdefault((t, s), []).append((episode, [tuple(p) for p in policies]))

    def stage_end(self, t, s, episode):
        self.stage_ends.setdefault((t, s), []).append(episode)

    def stage_of(self, t, s, k):
        """Stage in effect at episode k: number of stages ended before k."""
        ends = self.stage_ends.get((t, s), [])
        return sum(1 for e in ends if e < k)

    def stage_slice(self, t, s, stage):
        """The (episode, policies) visits making up one completed stage."""
        ends = self.stage_ends.get((t, s), [])
        rows = self.visits.get((t, s), [])
        start_ep = ends[stage - 1] if stage >= 1 else 0
        end_ep = ends[stage]
        return [row for row in rows if start_ep < row[0] <= end_ep]


def brute_t1_certificate(log: VisitLog, game, episodes):
    """Exhaustive CCE gap of the certified mixture for a horizon-1 game.

    Returns (values, br_uppers, gaps) tuples indexed by agent.  Mirrors the
    output-policy construction directly: draw k uniformly from [1, episodes];
    while (1, s1) is in its first stage the joint play is uniform (counted at
    the stored optimistic bound for the best response).
    """
    assert game.horizon == 1
    values = []
    brs = []
    for i in range(game.num_agents):
        v_total = 0.0
        b_total = 0.0
        for k in range(1, episodes + 1):
            per_state_v = 0.0
            per_state_b = 0.0
            for s1, w in game.initial_distribution.items():
                if w <= 0.0:
                    continue
                stage = log.stage_of(1, s1, k)
                if stage == 0:
                    per_state_v += w * 0.0
                    per_state_b += w * 1.0
                    continue
                rows = log.stage_slice(1, s1, stage - 1)
                v_acc = 0.0
                b_by_action = [0.0] * len(game.actions(1, s1, i))
                for _, policies in rows:
                    opp = {j: policies[j] for j in range(game.num_agents) if j != i}
                    v_acc += brute_stage_value(game, 1, s1, i, policies[i], opp)
                    for idx, a in enumerate(game.actions(1, s1, i).ids):
                        point = tuple(1.0 if x == idx else 0.0
                                      for x in range(len(game.actions(1, s1, i))))
                        b_by_action[idx] += brute_stage_value(game, 1, s1, i, point, opp)
                per_state_v += w * v_acc / len(rows)
                per_state_b += w * max(b_by_action) / len(rows)
            v_total += per_state_v
            b_total += per_state_b
        values.append(v_total / episodes)
        brs.append(b_total / episodes)
    gaps = [b - v for v, b in zip(values, brs)]
    return values, brs, gaps


def run_manual(game, learners, episodes, env_rng, agent_rngs, store=None, log=None,
               log_samples=False):
    """Minimal episode loop used by tests; mirrors the harness wiring."""
    from asvl.games import aggregate

    N = game.num_agents
    for k in range(1, episodes + 1):
        s = _draw(game.initial_distribution, game.states[0], env_rng)
        for t in range(1, game.horizon + 1):
            policies = [learners[i].policy(t, s) for i in range(N)]
            actions = [learners[i].step(t, s, agent_rngs[i]) for i in range(N)]
            values = [game.actions(t, s, i).value_of(a) for i, a in enumerate(actions)]
            g_all = aggregate(values, game.aggregator)
            rewards = []
            for i in range(N):
                others = values[:i] + values[i + 1:]
                g_others = aggregate(others, game.aggregator) if others else 0.0
                rewards.append(game.reward(t, s, i, actions[i], g_others))
            s2 = None
            if t < game.horizon:
                key = g_all if game.aggregate_dependent else tuple(actions)
                s2 = _draw(game.transition(t, s, key), game.states[t], env_rng)
            if store is not None:
                store.record_visit(t, s, k, policies,
                                   actions=actions if log_samples else None,
                                   rewards=rewards if log_samples else None,
                                   next_state=s2)
            if log is not None:
                log.visit(t, s, k, policies)
            events = [learners[i].observe(t, s, actions[i], rewards[i], s2, g_all)
                      for i in range(N)]
            if events[0] is not None:
                if store is not None:
                    store.record_stage_end(t, s, k, events)
                if log is not None:
                    log.stage_end(t, s, k)
            s = s2


def _draw(dist, order, rng):
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


def tsallis_regret(num_arms, rounds, rng):
    """Average realized regret of the bandit on i.i.d. Bernoulli losses.

    Loss means are spread over [0.25, 0.75]; the regret compares the played
    arms' realized losses with the best single arm's realized losses, both
    measured on the same sampled loss matrix.
    """
    from asvl.bandit import TsallisBandit

    means = [0.25 + 0.5 * a / max(num_arms - 1, 1) for a in range(num_arms)]
    bandit = TsallisBandit(tuple(range(num_arms)))
    played = 0.0
    totals = [0.0] * num_arms
    for n in range(1, rounds + 1):
        losses = [float(rng.random() < m) for m in means]
        arm = bandit.sample(rng)
        played += losses[arm]
        for a in range(num_arms):
            totals[a] += losses[a]
        bandit.loss_update(arm, losses[arm])
        bandit.recompute_policy(2.0 * math.sqrt(1.0 / n))
    return (played - min(totals)) / rounds
