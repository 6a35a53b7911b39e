"""Figure generation from experiment CSV logs.

Consumes the reward and sweep-summary files written by the experiment
harness and regenerates the standard figures: per-agent smoothed reward
curves, a cross-algorithm comparison of joint returns, and the certified
gap against the episode budget on log-log axes with a fitted power law.

Only the documented CSV schemas are relied on:

    rewards_<seed>.csv   episode,agent,raw_return,ma<window>
    sweep_summary.csv    K,median_gap

Smoothed curves use the moving-average column as written by the harness;
nothing is re-smoothed here.
"""

import csv
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("rewards", "comparison", "gap-scaling")

REFERENCE_SLOPE = -0.5


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: what to draw, from which files, to where."""

    kind: str
    inputs: tuple
    out: str
    labels: tuple | None = None
    window: int | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("need at least one input csv")
        for path in self.inputs:
            if not os.path.exists(path):
                raise ValueError(f"input csv not found: {path}")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise ValueError(
                f"got {len(self.labels)} labels for {len(self.inputs)} inputs")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be >= 1")


# -- csv readers --------------------------------------------------------------------


def read_rewards(path, window=None):
    """Parse one rewards csv into {agent: (episodes, raw, smoothed)} arrays.

    The header must be episode,agent,raw_return,ma<window>; a ``window``
    argument additionally pins the expected moving-average column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file, expected a rewards csv header")
        for idx, name in enumerate(("episode", "agent", "raw_return")):
            if len(header) <= idx or header[idx] != name:
                raise ValueError(
                    f"{path}: missing column '{name}' (header: {','.join(header)})")
        if len(header) < 4 or not header[3].startswith("ma"):
            raise ValueError(
                f"{path}: missing column 'ma<window>' (header: {','.join(header)})")
        if window is not None and header[3] != f"ma{window}":
            raise ValueError(
                f"{path}: missing column 'ma{window}' (found '{header[3]}')")
        series: dict = {}
        for row in reader:
            agent = int(row[1])
            series.setdefault(agent, []).append(
                (int(row[0]), float(row[2]), float(row[3])))
    if not series:
        raise ValueError(f"{path}: no reward rows")
    out = {}
    for agent, rows in series.items():
        arr = np.asarray(rows, dtype=float)
        out[agent] = (arr[:, 0].astype(int), arr[:, 1], arr[:, 2])
    return out


def read_sweep(path):
    """Parse a sweep summary csv into (K, median_gap) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["K", "median_gap"]:
            found = ",".join(header) if header else "<empty>"
            raise ValueError(f"{path}: missing columns 'K,median_gap' (header: {found})")
        rows = [(int(r[0]), float(r[1])) for r in reader]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two grid points")
    ks = np.asarray([k for k, _ in rows], dtype=float)
    gaps = np.asarray([g for _, g in rows], dtype=float)
    return ks, gaps


# -- data series (pure functions of the csvs) ----------------------------------------


def rewards_series(paths, window=None):
    """Per-agent smoothed return, averaged over the given runs.

    All files must cover the same episodes with the same agents.
    """
    merged: dict = {}
    episodes = None
    for path in paths:
        parsed = read_rewards(path, window)
        if episodes is None:
            episodes = {agent: eps for agent, (eps, _, _) in parsed.items()}
        for agent, (eps, _, smoothed) in parsed.items():
            if agent not in episodes or not np.array_equal(eps, episodes[agent]):
                raise ValueError(f"{path}: episode grid differs from the first input")
            merged.setdefault(agent, []).append(smoothed)
    return {
        agent: (episodes[agent], np.mean(stack, axis=0))
        for agent, stack in sorted(merged.items())
    }


def comparison_series(paths, labels, window=None):
    """Joint (summed over agents) smoothed return per labeled run."""
    out = {}
    for path, label in zip(paths, labels):
        parsed = read_rewards(path, window)
        agents = sorted(parsed)
        eps = parsed[agents[0]][0]
        for agent in agents[1:]:
            if not np.array_equal(parsed[agent][0], eps):
                raise ValueError(f"{path}: episode grid differs across agents")
        joint = np.sum([parsed[agent][2] for agent in agents], axis=0)
        out[label] = (eps, joint)
    return out


def fit_exponent(ks, gaps):
    """Least-squares power-law fit; returns (slope, scale) with gap ~= scale * K^slope."""
    slope, intercept = np.polyfit(np.log(ks), np.log(gaps), 1)
    return float(slope), float(np.exp(intercept))


# -- rendering ------------------------------------------------------------------------


def render(spec: FigureSpec) -> str:
    """Draw the requested figure and return the written path.

    The gap-scaling kind also prints the fitted exponent to stdout.
    """
    spec.validate()
    if spec.kind == "rewards":
        _render_rewards(spec)
    elif spec.kind == "comparison":
        _render_comparison(spec)
    else:
        _render_gap_scaling(spec)
    return spec.out


def _default_labels(spec: FigureSpec) -> tuple:
    if spec.labels is not None:
        return spec.labels
    return tuple(os.path.splitext(os.path.basename(p))[0] for p in spec.inputs)


def _render_rewards(spec: FigureSpec) -> None:
    series = rewards_series(spec.inputs, spec.window)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for agent, (episodes, smoothed) in series.items():
        ax.plot(episodes, smoothed, label=f"agent {agent}", linewidth=1.4)
    ax.set_xlabel("episode")
    ax.set_ylabel("raw return (moving average)")
    n_runs = len(spec.inputs)
    ax.set_title(f"per-agent reward, {n_runs} run{'s' if n_runs > 1 else ''}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)


def _render_comparison(spec: FigureSpec) -> None:
    labels = _default_labels(spec)
    series = comparison_series(spec.inputs, labels, spec.window)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label in labels:
        episodes, joint = series[label]
        ax.plot(episodes, joint, label=label, linewidth=1.4)
    ax.set_xlabel("episode")
    ax.set_ylabel("joint raw return (moving average)")
    ax.set_title("algorithm comparison")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)


def _render_gap_scaling(spec: FigureSpec) -> None:
    if len(spec.inputs) != 1:
        raise ValueError("gap-scaling takes exactly one sweep summary csv")
    ks, gaps = read_sweep(spec.inputs[0])
    slope, scale = fit_exponent(ks, gaps)
    print(f"fitted_exponent = {slope!r}")
    grid = np.geomspace(ks[0], ks[-1], 64)
    fig, ax = plt.subplots(figsize=(6.2, 4.4))
    ax.loglog(ks, gaps, "o", label="median certified gap")
    ax.loglog(grid, scale * grid ** slope, "-",
              label=f"fit: K^{slope:.3f}", linewidth=1.2)
    anchor = gaps[0] / ks[0] ** REFERENCE_SLOPE
    ax.loglog(grid, anchor * grid ** REFERENCE_SLOPE, "--", color="gray",
              label=f"reference: K^{REFERENCE_SLOPE}", linewidth=1.0)
    ax.set_xlabel("episodes K")
    ax.set_ylabel("certified gap")
    ax.set_title("gap against episode budget")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)
