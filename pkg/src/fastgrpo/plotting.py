"""Figures written next to the CSV outputs."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

TIER_COLORS = {"easy": "#2ca02c", "medium": "#ff7f0e", "hard": "#d62728"}


def plot_training_metrics(rows: Sequence[Mapping], path) -> None:
    """Per-tier mean length and accuracy against step, plus beta and theta."""
    steps = [r["step"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    ax_len, ax_acc, ax_reg = axes
    for tier, color in TIER_COLORS.items():
        ax_len.plot(steps, [r[f"mean_length_{tier}"] for r in rows], color=color, label=tier.capitalize(), lw=1.2)
        ax_acc.plot(steps, [r[f"accuracy_{tier}"] for r in rows], color=color, label=tier.capitalize(), lw=1.2)
    ax_len.plot(steps, [r["mean_length"] for r in rows], color="k", lw=1.5, label="all")
    ax_acc.plot(steps, [r["accuracy"] for r in rows], color="k", lw=1.5, label="all")
    ax_len.set_ylabel("mean response length (tokens)")
    ax_acc.set_ylabel("accuracy")
    ax_reg.plot(steps, [r["mean_beta"] for r in rows], color="#1f77b4", label="mean beta")
    ax_reg.set_ylabel("mean beta")
    twin = ax_reg.twinx()
    twin.plot(steps, [r["theta"] for r in rows], color="#7f7f7f", lw=0.8, label="theta")
    twin.set_ylabel("difficulty threshold")
    for ax in axes:
        ax.set_xlabel("step")
    ax_len.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_reward_comparison(lengths: Sequence[float], curves: Mapping[str, Sequence[float]], path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in curves.items():
        ax.plot(lengths, values, label=name, lw=1.3)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("response length L (tokens)")
    ax.set_ylabel("length reward")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
