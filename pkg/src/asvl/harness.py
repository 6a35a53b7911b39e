"""Experiment harness: seeded runs, CSV outputs, checkpointed certification.

One run executes a list of seeds for a fixed game and algorithm.  Per seed it
writes ``rewards_<seed>.csv`` (per-episode per-agent raw return plus a moving
average) and, for the stage-based learner, ``stages_<seed>.csv`` (completed
stage records).  Gap certificates computed at the configured checkpoint
episodes are collected into one ``certificates.csv``.  Identical config and
seed always reproduce byte-identical CSV files; seeds draw from independent
random streams, so they may run in parallel worker processes.
"""

from __future__ import annotations

import csv
import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import CentralizedQLearner, IndependentQLearner, QConfig
from .certify import SnapshotStore, gap_certificate, save_store
from .envs import fishermen_game, load_game_file
from .fluctuation import (
    DEFAULT_CV_MAX,
    FluctuationConfig,
    FluctuationMode,
    default_lambda_min,
)
from .games import AggregativeMarkovGame, aggregate
from .learner import LearnerConfig, StageVLearner, default_iota

ALGOS = ("asvl", "centralized-q", "independent-q")

_CONFIG_KEYS = (
    "env", "episodes", "seed", "seeds", "algo", "fluctuation", "lambda_min",
    "cv_max", "mad_max", "iota", "p", "bonus_scale", "checkpoints", "out",
    "compact_store", "log_samples", "save_store", "initial_state",
    "ma_window", "workers",
)


@dataclass(frozen=True)
class RunConfig:
    env: str = "fishermen"
    episodes: int = 1000
    seeds: tuple = (0,)
    algo: str = "asvl"
    fluctuation: str = "cv"
    lambda_min: float | None = None
    cv_max: float | None = None
    mad_max: float | None = None
    iota: float | None = None
    p: float = 0.05
    bonus_scale: float = 4.0
    checkpoints: tuple = ()
    out: str = "runs"
    compact_store: bool = False
    log_samples: bool = False
    save_store: bool = False
    initial_state: str | None = None
    ma_window: int = 500
    workers: int = 1

    def validate(self) -> None:
        if self.episodes < 1:
            raise ValueError("invalid value for 'episodes': must be >= 1")
        if not self.seeds:
            raise ValueError("invalid value for 'seeds': need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("invalid value for 'seeds': duplicate seed")
        if self.algo not in ALGOS:
            raise ValueError(f"invalid value for 'algo': {self.algo!r} not in {ALGOS}")
        try:
            FluctuationMode(self.fluctuation)
        except ValueError:
            raise ValueError(f"invalid value for 'fluctuation': {self.fluctuation!r}") from None
        if not 0.0 < self.p < 1.0:
            raise ValueError("invalid value for 'p': must be in (0, 1)")
        if self.bonus_scale < 0.0:
            raise ValueError("invalid value for 'bonus_scale': must be >= 0")
        if self.ma_window < 1:
            raise ValueError("invalid value for 'ma_window': must be >= 1")
        if self.workers < 1:
            raise ValueError("invalid value for 'workers': must be >= 1")
        for k in self.checkpoints:
            if not 1 <= k <= self.episodes:
                raise ValueError(f"invalid value for 'checkpoints': {k} outside [1, episodes]")
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise ValueError("invalid value for 'checkpoints': must be increasing and distinct")
        if self.algo != "asvl":
            if self.checkpoints:
                raise ValueError("invalid value for 'checkpoints': only the asvl algo is certified")
            for key in ("save_store", "compact_store", "log_samples"):
                if getattr(self, key):
                    raise ValueError(f"invalid value for '{key}': snapshot stores only apply to asvl")


def resolve_game(config: RunConfig) -> AggregativeMarkovGame:
    if config.env == "fishermen":
        if config.initial_state is not None:
            return fishermen_game(initial_state=config.initial_state)
        return fishermen_game()
    if config.initial_state is not None:
        raise ValueError("invalid value for 'initial_state': only supported for env=fishermen")
    if os.path.exists(config.env):
        return load_game_file(config.env)
    raise ValueError(f"invalid value for 'env': {config.env!r} is neither 'fishermen' nor a game file")


def resolve_learner_config(config: RunConfig, game: AggregativeMarkovGame) -> LearnerConfig:
    mode = FluctuationMode(config.fluctuation)
    if mode is not FluctuationMode.NONE and game.min_global_aggregate() <= 0.0:
        raise ValueError(
            "invalid value for 'fluctuation': aggregates must be positive for cv/mad modes"
        )
    lambda_min = config.lambda_min
    if lambda_min is None:
        lambda_min = default_lambda_min(game.horizon)
    cv_max = DEFAULT_CV_MAX if config.cv_max is None else config.cv_max
    mad_max = config.mad_max
    if mad_max is None:
        lo, hi = game.aggregate_range()
        mad_max = (hi - lo) / 2.0 if hi > lo else 1.0
    iota = config.iota
    if iota is None:
        iota = default_iota(
            num_agents=game.num_agents,
            num_states=game.max_state_count(),
            max_actions=max(game.max_actions(i) for i in range(game.num_agents)),
            episodes=config.episodes,
            horizon=game.horizon,
            p=config.p,
        )
    fluct = FluctuationConfig(mode=mode, lambda_min=lambda_min, cv_max=cv_max, mad_max=mad_max)
    fluct.validate_for_horizon(game.horizon)
    return LearnerConfig(iota=iota, bonus_scale=config.bonus_scale, fluctuation=fluct)


@dataclass
class SeedResult:
    seed: int
    rewards_path: str
    stages_path: str
    cert_rows: list = field(default_factory=list)
    store_path: str | None = None


@dataclass
class RunResult:
    config: RunConfig
    out_dir: str
    seed_results: list
    certificates_path: str | None

    def cert_rows(self):
        for res in self.seed_results:
            yield from res.cert_rows


def run(config: RunConfig) -> RunResult:
    """Execute all seeds of one configuration and write the CSV outputs."""
    config.validate()
    game = resolve_game(config)
    if config.algo == "asvl":
        resolve_learner_config(config, game)  # fail fast before spawning workers
    os.makedirs(config.out, exist_ok=True)
    if not os.access(config.out, os.W_OK):
        raise ValueError(f"invalid value for 'out': {config.out!r} is not writable")
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_seed_job, [(config, seed) for seed in config.seeds]))
    else:
        results = [_run_seed_job((config, seed)) for seed in config.seeds]
    certificates_path = None
    if config.algo == "asvl":
        certificates_path = os.path.join(config.out, "certificates.csv")
        with open(certificates_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "K", "agent", "value", "br_upper", "gap"])
            for res in results:
                for row in res.cert_rows:
                    writer.writerow([
                        row["seed"], row["K"], row["agent"],
                        repr(row["value"]), repr(row["br_upper"]), repr(row["gap"]),
                    ])
    _write_config_echo(config, os.path.join(config.out, "config_used.txt"))
    return RunResult(config=config, out_dir=config.out, seed_results=results,
                     certificates_path=certificates_path)


def _run_seed_job(job) -> SeedResult:
    config, seed = job
    game = resolve_game(config)
    if config.algo == "asvl":
        return _run_seed_asvl(config, game, seed)
    return _run_seed_q(config, game, seed)


def _run_seed_asvl(config: RunConfig, game: AggregativeMarkovGame, seed: int) -> SeedResult:
    learner_config = resolve_learner_config(config, game)
    T = game.horizon
    N = game.num_agents
    root = np.random.SeedSequence(seed)
    env_ss, _cert_ss, *agent_ss = root.spawn(2 + N)
    env_rng = np.random.default_rng(env_ss)
    agent_rngs = [np.random.default_rng(ss) for ss in agent_ss]
    learners = []
    for i in range(N):
        table = {
            (t, s): game.actions(t, s, i)
            for t in range(1, T + 1)
            for s in game.states[t - 1]
        }
        learners.append(StageVLearner(i, T, table, learner_config))
    store = SnapshotStore(
        horizon=T, num_agents=N,
        max_actions=[game.max_actions(i) for i in range(N)],
        iota=learner_config.iota, bonus_scale=learner_config.bonus_scale,
        compact=config.compact_store, log_samples=config.log_samples,
    )
    checkpoints = set(config.checkpoints)
    cert_rows: list = []
    reward_rows: list = []
    stage_rows: list = []
    ma = _MovingAverages(N, config.ma_window)
    for k in range(1, config.episodes + 1):
        s = _draw(game.initial_distribution, game.states[0], env_rng)
        raw_returns = [0.0] * N
        for t in range(1, T + 1):
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
            if t < T:
                key = g_all if game.aggregate_dependent else tuple(actions)
                s2 = _draw(game.transition(t, s, key), game.states[t], env_rng)
            store.record_visit(
                t, s, k, policies,
                actions=actions if config.log_samples else None,
                rewards=rewards if config.log_samples else None,
                next_state=s2,
            )
            events = [
                learners[i].observe(t, s, actions[i], rewards[i], s2, g_all)
                for i in range(N)
            ]
            if events[0] is not None:
                if any(ev is None for ev in events):
                    raise RuntimeError("stage boundaries diverged across agents")
                store.record_stage_end(t, s, k, events)
                ev = events[0]
                stage_rows.append((t, s, ev.stage_index, ev.length, ev.lam))
            for i in range(N):
                raw_returns[i] += game.raw_return(rewards[i], 1)
            s = s2
        ma.push(raw_returns)
        for i in range(N):
            reward_rows.append((k, i, raw_returns[i], ma.value(i)))
        if k in checkpoints:
            cert = gap_certificate(store, game, episodes=k)
            cert_rows.extend(cert.rows(seed))
    rewards_path = _write_rewards(config, seed, reward_rows)
    stages_path = _write_stages(config, seed, stage_rows)
    store_path = None
    if config.save_store:
        store_path = os.path.join(config.out, f"snapshots_{seed}.json")
        save_store(store, store_path)
    return SeedResult(seed=seed, rewards_path=rewards_path, stages_path=stages_path,
                      cert_rows=cert_rows, store_path=store_path)


def _run_seed_q(config: RunConfig, game: AggregativeMarkovGame, seed: int) -> SeedResult:
    root = np.random.SeedSequence(seed)
    (learn_ss,) = root.spawn(1)
    rng = np.random.default_rng(learn_ss)
    if config.algo == "centralized-q":
        learner = CentralizedQLearner(game, QConfig())
    else:
        learner = IndependentQLearner(game, QConfig())
    N = game.num_agents
    ma = _MovingAverages(N, config.ma_window)
    reward_rows = []
    for k in range(1, config.episodes + 1):
        norm_returns = learner.episode(k, config.episodes, rng)
        raw_returns = [game.raw_return(r, game.horizon) for r in norm_returns]
        ma.push(raw_returns)
        for i in range(N):
            reward_rows.append((k, i, raw_returns[i], ma.value(i)))
    rewards_path = _write_rewards(config, seed, reward_rows)
    stages_path = _write_stages(config, seed, [])
    return SeedResult(seed=seed, rewards_path=rewards_path, stages_path=stages_path)


class _MovingAverages:
    def __init__(self, num_agents: int, window: int):
        self.window = window
        self._queues = [deque() for _ in range(num_agents)]
        self._sums = [0.0] * num_agents

    def push(self, values) -> None:
        for i, v in enumerate(values):
            q = self._queues[i]
            if len(q) == self.window:
                self._sums[i] -= q.popleft()
            q.append(v)
            self._sums[i] += v

    def value(self, agent: int) -> float:
        q = self._queues[agent]
        return self._sums[agent] / len(q)


def _write_rewards(config: RunConfig, seed: int, rows) -> str:
    path = os.path.join(config.out, f"rewards_{seed}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "agent", "raw_return", f"ma{config.ma_window}"])
        for episode, agent, raw, avg in rows:
            writer.writerow([episode, agent, repr(raw), repr(avg)])
    return path


def _write_stages(config: RunConfig, seed: int, rows) -> str:
    path = os.path.join(config.out, f"stages_{seed}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "state", "stage_index", "length", "lambda"])
        for t, s, stage_index, length, lam in rows:
            writer.writerow([t, s, stage_index, length, repr(lam)])
    return path


def _write_config_echo(config: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        for key in _CONFIG_KEYS:
            if key in ("seed", "out"):
                continue
            if key == "seeds":
                fh.write(f"seeds = {','.join(str(s) for s in config.seeds)}\n")
            elif key == "checkpoints":
                if config.checkpoints:
                    fh.write(f"checkpoints = {','.join(str(c) for c in config.checkpoints)}\n")
            elif getattr(config, key) is not None:
                # unset optional keys are omitted so the echo reloads cleanly
                fh.write(f"{key} = {getattr(config, key)}\n")


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


# -- sweeps over the episode budget ---------------------------------------------


def fit_power_law(ks, gaps) -> float:
    """Least-squares slope of log(gap) against log(K)."""
    if len(ks) < 2:
        raise ValueError("need at least two grid points to fit")
    xs = np.log(np.asarray(ks, dtype=float))
    ys = np.log(np.asarray(gaps, dtype=float))
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def median_gap_by_k(cert_rows) -> dict:
    """Median over seeds of the per-run overall gap (max across agents)."""
    per_run: dict = {}
    for row in cert_rows:
        key = (row["K"], row["seed"])
        per_run[key] = max(per_run.get(key, -math.inf), row["gap"])
    by_k: dict = {}
    for (K, _seed), gap in sorted(per_run.items()):
        by_k.setdefault(K, []).append(gap)
    return {K: float(np.median(gaps)) for K, gaps in by_k.items()}


def sweep(config: RunConfig, k_grid) -> tuple:
    """Run every seed once to max(k_grid) with certification at each grid point.

    Returns (summary rows, fitted exponent) and writes ``sweep_summary.csv``
    and ``sweep_fit.txt`` alongside the run outputs.
    """
    grid = sorted(set(int(k) for k in k_grid))
    if not grid:
        raise ValueError("invalid value for 'grid': must be nonempty")
    if config.algo != "asvl":
        raise ValueError("invalid value for 'algo': sweeps certify the asvl learner")
    swept = replace(config, episodes=grid[-1], checkpoints=tuple(grid))
    result = run(swept)
    medians = median_gap_by_k(list(result.cert_rows()))
    rows = [(K, medians[K]) for K in grid]
    exponent = fit_power_law([K for K, _ in rows], [g for _, g in rows]) if len(rows) >= 2 else float("nan")
    summary_path = os.path.join(swept.out, "sweep_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "median_gap"])
        for K, gap in rows:
            writer.writerow([K, repr(gap)])
    with open(os.path.join(swept.out, "sweep_fit.txt"), "w") as fh:
        fh.write(f"fitted_exponent = {exponent!r}\n")
    return rows, exponent


# -- config files -----------------------------------------------------------------


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
            key, value = text.split("=", 1)
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key '{key}'")
            values[key] = value.strip()
    return values


def config_from_values(values: dict) -> RunConfig:
    """Build a RunConfig from string values (file and/or CLI), with defaults."""
    def bad(key, detail):
        return ValueError(f"invalid value for '{key}': {detail}")

    out: dict = {}
    for key, raw in values.items():
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown config key '{key}'")
        if raw is None:
            continue
        try:
            if key == "episodes":
                out["episodes"] = int(raw)
            elif key == "seed":
                out.setdefault("seeds", (int(raw),))
            elif key == "seeds":
                if isinstance(raw, (list, tuple)):
                    out["seeds"] = tuple(int(x) for x in raw)
                else:
                    out["seeds"] = tuple(int(x) for x in str(raw).split(",") if x.strip())
            elif key == "checkpoints":
                if isinstance(raw, (list, tuple)):
                    out["checkpoints"] = tuple(int(x) for x in raw)
                else:
                    out["checkpoints"] = tuple(int(x) for x in str(raw).split(",") if x.strip())
            elif key in ("lambda_min", "cv_max", "mad_max", "iota", "p", "bonus_scale"):
                out[key] = float(raw)
            elif key in ("compact_store", "log_samples", "save_store"):
                out[key] = _parse_bool(key, raw)
            elif key in ("ma_window", "workers"):
                out[key] = int(raw)
            else:
                out[key] = str(raw)
        except ValueError as exc:
            if str(exc).startswith("invalid value for"):
                raise
            raise bad(key, raw) from None
    if "seeds" in values and values["seeds"] is not None and "seed" in values and values["seed"] is not None:
        raise ValueError("invalid value for 'seed': give either 'seed' or 'seeds', not both")
    config = RunConfig(**out)
    config.validate()
    return config


def _parse_bool(key, raw):
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"invalid value for '{key}': {raw!r} is not a boolean")
