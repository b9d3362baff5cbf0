"""Figure rendering for the experiment harness.

Each renderer consumes the same rows the CSV writers emit and saves a PNG
next to the delimited output, so every report is both machine-readable and
directly viewable.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

POWER_PARTS = ("p_ru_radio_w", "p_ru_proc_w", "p_fh_w", "p_cloud_w", "p_fh_cloud_w")
PART_LABELS = {
    "p_ru_radio_w": "O-RU radio",
    "p_ru_proc_w": "O-RU processing",
    "p_fh_w": "fronthaul (RU)",
    "p_cloud_w": "O-Cloud",
    "p_fh_cloud_w": "fronthaul (cloud)",
}


def render_sweep_figure(summary_rows: list[dict], path: str | Path):
    """Mean total power versus SE threshold, one line per controller mode."""
    fig, (ax_p, ax_v) = plt.subplots(1, 2, figsize=(9.5, 4))
    modes = sorted({row["mode"] for row in summary_rows})
    for mode in modes:
        rows = sorted((r for r in summary_rows if r["mode"] == mode), key=lambda r: r["se_thr"])
        thr = [r["se_thr"] for r in rows]
        ax_p.plot(thr, [r["mean_p_total_w"] for r in rows], marker="o", label=mode)
        ax_v.plot(thr, [r["mean_r_vio"] for r in rows], marker="o", label=mode)
    ax_p.set_xlabel("SE threshold [bit/s/Hz]")
    ax_p.set_ylabel("mean total power [W]")
    ax_v.set_xlabel("SE threshold [bit/s/Hz]")
    ax_v.set_ylabel("mean violation ratio")
    ax_v.set_ylim(bottom=0)
    ax_p.grid(alpha=0.3)
    ax_v.grid(alpha=0.3)
    ax_p.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=200)
    plt.close(fig)


def render_breakdown_figure(rows: list[dict], path: str | Path):
    """Stacked per-subsystem power bars, one bar per functional split."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    labels = [f"split {row['split']}" for row in rows]
    bottoms = [0.0] * len(rows)
    for part in POWER_PARTS:
        vals = [float(row[part]) for row in rows]
        ax.bar(labels, vals, bottom=bottoms, label=PART_LABELS[part])
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    ax.set_ylabel("power [W]")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=200)
    plt.close(fig)


def render_training_curve(curve: list[dict], path: str | Path):
    """Mean reward, violation ratio, and dual weight over training batches."""
    fig, (ax_r, ax_v) = plt.subplots(1, 2, figsize=(9.5, 4))
    epochs = [row["epoch"] for row in curve]
    ax_r.plot(epochs, [row["mean_reward"] for row in curve], color="tab:blue")
    ax_r.set_xlabel("batch")
    ax_r.set_ylabel("mean per-step reward")
    ax_r.grid(alpha=0.3)
    ax_v.plot(epochs, [row["mean_violation"] for row in curve], label="violation")
    ax_v.plot(epochs, [row["lambda"] for row in curve], label="lambda")
    ax_v.set_xlabel("batch")
    ax_v.grid(alpha=0.3)
    ax_v.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=200)
    plt.close(fig)
