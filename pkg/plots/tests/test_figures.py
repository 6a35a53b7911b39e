"""Figure rendering from synthetic and real harness csv files."""

import csv
import math
import os
import shutil
import subprocess

import numpy as np
import pytest

from asvl_plots import (
    FigureSpec,
    comparison_series,
    fit_exponent,
    read_rewards,
    read_sweep,
    render,
    rewards_series,
)
from asvl_plots.cli import main


def write_rewards(path, episodes, agents=2, window=50, offset=0.0):
    """Write a schema-conforming rewards csv with deterministic values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "agent", "raw_return", f"ma{window}"])
        for k in range(1, episodes + 1):
            for i in range(agents):
                raw = offset + 10.0 + i + math.sin(k / 7.0)
                smoothed = offset + 10.0 + i + k / episodes
                writer.writerow([k, i, repr(raw), repr(smoothed)])
    return path


def write_sweep(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "median_gap"])
        for k, gap in rows:
            writer.writerow([k, repr(gap)])
    return path


# -- readers and series ---------------------------------------------------------


def test_read_rewards_parses_per_agent(tmp_path):
    path = write_rewards(tmp_path / "rewards_0.csv", episodes=20)
    parsed = read_rewards(path)
    assert sorted(parsed) == [0, 1]
    episodes, raw, smoothed = parsed[1]
    assert list(episodes) == list(range(1, 21))
    assert raw[0] == pytest.approx(11.0 + math.sin(1 / 7.0))
    assert smoothed[-1] == pytest.approx(12.0)


def test_read_rewards_names_missing_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("episode,agent,reward,ma50\n1,0,1.0,1.0\n")
    with pytest.raises(ValueError, match="missing column 'raw_return'"):
        read_rewards(bad)
    noma = tmp_path / "noma.csv"
    noma.write_text("episode,agent,raw_return,smoothed\n1,0,1.0,1.0\n")
    with pytest.raises(ValueError, match="missing column 'ma<window>'"):
        read_rewards(noma)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError, match="empty file"):
        read_rewards(empty)
    headless = tmp_path / "only_header.csv"
    headless.write_text("episode,agent,raw_return,ma50\n")
    with pytest.raises(ValueError, match="no reward rows"):
        read_rewards(headless)


def test_read_rewards_pins_window(tmp_path):
    path = write_rewards(tmp_path / "rewards_0.csv", episodes=5, window=500)
    read_rewards(path, window=500)
    with pytest.raises(ValueError, match="missing column 'ma100'"):
        read_rewards(path, window=100)


def test_rewards_series_averages_runs(tmp_path):
    a = write_rewards(tmp_path / "rewards_0.csv", episodes=10, offset=0.0)
    b = write_rewards(tmp_path / "rewards_1.csv", episodes=10, offset=2.0)
    series = rewards_series([a, b])
    episodes, smoothed = series[0]
    assert list(episodes) == list(range(1, 11))
    # mean of offsets 0 and 2 -> +1 over a single run's values
    assert smoothed[0] == pytest.approx(10.0 + 0.1 + 1.0)
    mismatched = write_rewards(tmp_path / "rewards_2.csv", episodes=12)
    with pytest.raises(ValueError, match="episode grid"):
        rewards_series([a, mismatched])


def test_comparison_series_sums_agents(tmp_path):
    a = write_rewards(tmp_path / "alg_a.csv", episodes=8)
    b = write_rewards(tmp_path / "alg_b.csv", episodes=8, offset=1.0)
    series = comparison_series([a, b], ["first", "second"])
    episodes, joint = series["first"]
    # two agents at 10+x and 11+x sum to 21+2x
    assert joint[-1] == pytest.approx(21.0 + 2.0)
    assert series["second"][1][-1] == pytest.approx(23.0 + 2.0)


def test_fit_exponent_recovers_power_law(tmp_path):
    ks = np.array([100.0, 200.0, 400.0, 800.0])
    gaps = 2.5 * ks ** -0.5
    slope, scale = fit_exponent(ks, gaps)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert scale == pytest.approx(2.5, abs=1e-12)


def test_read_sweep_schema(tmp_path):
    path = write_sweep(tmp_path / "sweep_summary.csv", [(100, 0.5), (400, 0.25)])
    ks, gaps = read_sweep(path)
    assert list(ks) == [100.0, 400.0]
    assert list(gaps) == [0.5, 0.25]
    bad = tmp_path / "bad.csv"
    bad.write_text("K,gap\n100,0.5\n")
    with pytest.raises(ValueError, match="missing columns 'K,median_gap'"):
        read_sweep(bad)
    short = write_sweep(tmp_path / "short.csv", [(100, 0.5)])
    with pytest.raises(ValueError, match="two grid points"):
        read_sweep(short)


# -- rendering -------------------------------------------------------------------


def test_spec_validation(tmp_path):
    path = write_rewards(tmp_path / "rewards_0.csv", episodes=4)
    with pytest.raises(ValueError, match="unknown figure kind"):
        FigureSpec("pie", (str(path),), "out.png").validate()
    with pytest.raises(ValueError, match="at least one input"):
        FigureSpec("rewards", (), "out.png").validate()
    with pytest.raises(ValueError, match="not found"):
        FigureSpec("rewards", (str(tmp_path / "nope.csv"),), "out.png").validate()
    with pytest.raises(ValueError, match="2 labels for 1 inputs"):
        FigureSpec("comparison", (str(path),), "out.png", labels=("a", "b")).validate()
    with pytest.raises(ValueError, match="window"):
        FigureSpec("rewards", (str(path),), "out.png", window=0).validate()


def test_render_rewards_and_comparison(tmp_path):
    a = write_rewards(tmp_path / "rewards_0.csv", episodes=30)
    b = write_rewards(tmp_path / "rewards_1.csv", episodes=30, offset=0.5)
    out = str(tmp_path / "rewards.png")
    assert render(FigureSpec("rewards", (a, b), out)) == out
    assert os.path.getsize(out) > 0

    out2 = str(tmp_path / "comparison.png")
    render(FigureSpec("comparison", (a, b), out2, labels=("ours", "baseline")))
    assert os.path.getsize(out2) > 0


def test_render_gap_scaling_prints_exponent(tmp_path, capsys):
    ks = [250, 500, 1000, 2000]
    path = write_sweep(tmp_path / "sweep_summary.csv",
                       [(k, 1.8 * k ** -0.45) for k in ks])
    out = str(tmp_path / "scaling.png")
    render(FigureSpec("gap-scaling", (path,), out))
    printed = capsys.readouterr().out
    assert printed.startswith("fitted_exponent = ")
    assert float(printed.split("=")[1]) == pytest.approx(-0.45, abs=1e-9)
    assert os.path.getsize(out) > 0
    other = write_rewards(tmp_path / "rewards_0.csv", episodes=4)
    with pytest.raises(ValueError, match="exactly one sweep summary"):
        render(FigureSpec("gap-scaling", (path, other), str(tmp_path / "x.png")))


def test_rendering_is_reproducible(tmp_path):
    path = write_rewards(tmp_path / "rewards_0.csv", episodes=25)
    out_a = str(tmp_path / "a.png")
    out_b = str(tmp_path / "b.png")
    render(FigureSpec("rewards", (path,), out_a))
    render(FigureSpec("rewards", (path,), out_b))
    with open(out_a, "rb") as fa, open(out_b, "rb") as fb:
        assert fa.read() == fb.read()


def test_cli_render_and_errors(tmp_path, capsys):
    path = write_rewards(tmp_path / "rewards_0.csv", episodes=10)
    out = str(tmp_path / "fig.png")
    assert main(["render", "--kind", "rewards", "--in", str(path),
                 "--out", out]) == 0
    assert f"wrote {out}" in capsys.readouterr().out
    assert os.path.exists(out)

    assert main(["render", "--kind", "rewards",
                 "--in", str(tmp_path / "missing.csv"), "--out", out]) == 2
    assert "not found" in capsys.readouterr().err

    assert main(["render", "--kind", "comparison", "--in", str(path),
                 "--labels", "a,b", "--out", out]) == 2
    assert "labels" in capsys.readouterr().err

    with pytest.raises(SystemExit):
        main(["render", "--kind", "donut", "--in", str(path), "--out", out])
    capsys.readouterr()


# -- end to end against the experiment harness --------------------------------------


ASVL = shutil.which("asvl")


@pytest.mark.skipif(ASVL is None, reason="experiment harness cli not installed")
def test_renders_real_harness_outputs(tmp_path, capsys):
    def harness(*args):
        subprocess.run([ASVL, *args], check=True, capture_output=True, text=True)

    harness("run", "--episodes", "400", "--seeds", "0,1", "--fluctuation", "mad",
            "--out", str(tmp_path / "ours"))
    harness("run", "--episodes", "400", "--seed", "0", "--algo", "centralized-q",
            "--out", str(tmp_path / "central"))
    harness("run", "--episodes", "400", "--seed", "0", "--algo", "independent-q",
            "--out", str(tmp_path / "indep"))
    harness("sweep", "--grid", "100,200,400,800", "--seeds", "0,1",
            "--fluctuation", "mad", "--out", str(tmp_path / "sweep"))

    render(FigureSpec("rewards",
                      (str(tmp_path / "ours/rewards_0.csv"),
                       str(tmp_path / "ours/rewards_1.csv")),
                      str(tmp_path / "rewards.png")))
    render(FigureSpec("comparison",
                      (str(tmp_path / "central/rewards_0.csv"),
                       str(tmp_path / "ours/rewards_0.csv"),
                       str(tmp_path / "indep/rewards_0.csv")),
                      str(tmp_path / "comparison.png"),
                      labels=("centralized", "ours", "independent")))
    render(FigureSpec("gap-scaling",
                      (str(tmp_path / "sweep/sweep_summary.csv"),),
                      str(tmp_path / "scaling.png")))
    printed = capsys.readouterr().out
    fitted = float(printed.split("fitted_exponent = ")[1].split()[0])

    with open(tmp_path / "sweep/sweep_fit.txt") as fh:
        harness_fit = float(fh.read().split("=")[1])
    ok = all(os.path.getsize(tmp_path / name) > 0
             for name in ("rewards.png", "comparison.png", "scaling.png"))
    ok = ok and abs(fitted - harness_fit) <= 0.05
    print(f"[{'PASS' if ok else 'FAIL'}] plot-regeneration  "
          f"(three kinds rendered, fit {fitted:.3f} vs harness {harness_fit:.3f})")
    assert ok
