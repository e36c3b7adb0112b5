"""Figure rendering for the report-producing commands.

Every reporting path that writes delimited output can also render the
matching figure next to it; all charts are simple line/errorbar plots
written as PNG files (headless backend, no display required).
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import BenchReport, EvalReport


def plot_reward_curve(metrics_csv: str | Path, out_png: str | Path) -> Path:
    """Mean episode reward (and losses, secondary axis) against timesteps."""
    steps, rewards, ploss, vloss = [], [], [], []
    with open(metrics_csv) as f:
        for rec in csv.DictReader(f):
            steps.append(int(rec["timestep"]))
            rewards.append(float(rec["mean_ep_reward"]))
            ploss.append(float(rec["policy_loss"]))
            vloss.append(float(rec["value_loss"]))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, rewards, color="tab:blue", label="mean episode reward")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode reward")
    ax2 = ax.twinx()
    ax2.plot(steps, ploss, color="tab:orange", alpha=0.6, label="policy loss")
    ax2.plot(steps, vloss, color="tab:green", alpha=0.6, label="value loss")
    ax2.set_ylabel("loss")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="best", fontsize=8)
    ax.set_title("training progress")
    fig.tight_layout()
    out_png = Path(out_png)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_bench(report: BenchReport, out_png: str | Path) -> Path:
    """Steps-per-second against batch size, one line per domain."""
    fig, ax = plt.subplots(figsize=(6, 4))
    domains = sorted({r.domain for r in report.rows})
    for domain in domains:
        rows = sorted((r for r in report.rows if r.domain == domain), key=lambda r: r.n_envs)
        ax.plot([r.n_envs for r in rows], [r.fps for r in rows], marker="o", label=domain)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("parallel environments")
    ax.set_ylabel("env steps / second")
    ax.set_title("random-action throughput")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out_png = Path(out_png)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_eval(report: EvalReport, out_png: str | Path) -> Path:
    """Mean episode reward (±std) against eval map width, one line per
    eval-shape setting."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for rand, label, color in ((False, "fixed shape", "tab:blue"), (True, "random shape", "tab:red")):
        cells = sorted((c for c in report.cells if c.eval_rand_shape == rand), key=lambda c: c.width)
        if not cells:
            continue
        ax.errorbar(
            [c.width for c in cells],
            [c.mean for c in cells],
            yerr=[c.std for c in cells],
            marker="o",
            capsize=3,
            label=label,
            color=color,
        )
    ax.set_xlabel("eval map width")
    ax.set_ylabel("episode reward")
    ax.set_title(f"{report.domain}: generalization across map sizes")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out_png = Path(out_png)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png
