"""Report rendering: delimited metrics output plus session figures.

`write_report` turns one decoded trace into a directory containing:

    metrics.csv    one metric per row (key,value)
    episodes.csv   one grasp episode per row
    timeline.png   TOF raw/filtered vs. the grasp gate, tilt vs. thresholds,
                   controller phase with command markers
    episodes.png   per-episode time-to-grasp, colored by ground-truth validity

Figures are rendered with the Agg backend so this works headless.
"""

from __future__ import annotations

import csv
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .controller import Phase
from .metrics import (
    Metrics,
    compute_metrics,
    filtered_tof_series,
    gesture_active_edges,
    session_config,
)
from .trace import TraceRecord

_PHASE_ORDER = [p.value for p in Phase]


def write_report(
    records: list[TraceRecord],
    outdir: str,
    tick_latencies_ms: Optional[list[float]] = None,
) -> Metrics:
    """Write CSVs and figures for one trace; returns the computed metrics."""
    os.makedirs(outdir, exist_ok=True)
    metrics = compute_metrics(records, tick_latencies_ms)

    with open(os.path.join(outdir, "metrics.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(metrics.as_rows())

    with open(os.path.join(outdir, "episodes.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "episode",
                "start_ms",
                "close_ms",
                "open_ms",
                "time_to_grasp_ms",
                "grasp_valid",
                "release_latency_ms",
            ]
        )
        for i, ep in enumerate(metrics.episodes):
            writer.writerow(
                [
                    i,
                    ep.start_t_ms,
                    ep.close_t_ms,
                    "" if ep.open_t_ms is None else ep.open_t_ms,
                    ep.time_to_grasp_ms,
                    "" if ep.grasp_valid is None else str(ep.grasp_valid).lower(),
                    "" if ep.release_latency_ms is None else ep.release_latency_ms,
                ]
            )

    _render_timeline(records, metrics, os.path.join(outdir, "timeline.png"))
    _render_episodes(metrics, os.path.join(outdir, "episodes.png"))
    return metrics


def _render_timeline(records: list[TraceRecord], metrics: Metrics, path: str) -> None:
    cfg = session_config(records)
    perception = cfg["perception"]

    raw_t, raw_mm = [], []
    for r in records:
        if r.kind == "tof" and r.payload["status"] == "valid":
            raw_t.append(r.t_ms / 1000.0)
            raw_mm.append(r.payload["range_mm"])
    filt = filtered_tof_series(records, cfg)
    filt_t = [t / 1000.0 for t, v in filt if v is not None]
    filt_mm = [v for _, v in filt if v is not None]

    tilt_t, tilt_deg = [], []
    for r in records:
        if r.kind == "world":
            tilt_t.append(r.t_ms / 1000.0)
            tilt_deg.append(abs(r.payload["roll"]))
    edges = [t / 1000.0 for t in gesture_active_edges(records, cfg)]

    phase_t, phase_idx = [], []
    current = Phase.SCANNING.value
    t0 = records[0].t_ms / 1000.0
    phase_t.append(t0)
    phase_idx.append(_PHASE_ORDER.index(current))
    for r in records:
        if r.kind == "state":
            phase_t.append(r.t_ms / 1000.0)
            phase_idx.append(_PHASE_ORDER.index(r.payload["to"]))
    closes = [r.t_ms / 1000.0 for r in records if r.kind == "cmd" and r.payload["action"] == "close"]
    opens = [r.t_ms / 1000.0 for r in records if r.kind == "cmd" and r.payload["action"] == "open"]
    t_end = records[-1].t_ms / 1000.0

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(10, 7.5))

    ax = axes[0]
    ax.plot(raw_t, raw_mm, ".", ms=2, color="0.6", label="TOF raw")
    ax.plot(filt_t, filt_mm, "-", lw=1.2, color="tab:blue", label="filtered (median)")
    ax.axhline(perception["d_grasp_mm"], color="tab:red", lw=1, ls="--", label="grasp gate")
    ax.set_ylabel("range [mm]")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"session timeline  (fps={metrics.achieved_fps:.2f})", fontsize=10)

    ax = axes[1]
    ax.plot(tilt_t, tilt_deg, "-", lw=1.2, color="tab:green", label="wrist tilt")
    ax.axhline(perception["tilt_thresh_deg"], color="tab:red", lw=1, ls="--", label="activate")
    ax.axhline(
        perception["tilt_thresh_deg"] - perception["tilt_hysteresis_deg"],
        color="tab:orange",
        lw=1,
        ls=":",
        label="clear",
    )
    for t in edges:
        ax.axvline(t, color="tab:purple", lw=0.8, alpha=0.6)
    ax.set_ylabel("tilt [deg]")
    ax.legend(loc="upper right", fontsize=8)

    ax = axes[2]
    ax.step(phase_t + [t_end], phase_idx + phase_idx[-1:], where="post", color="tab:blue")
    ax.set_yticks(range(len(_PHASE_ORDER)))
    ax.set_yticklabels(_PHASE_ORDER)
    for t in closes:
        ax.axvline(t, color="tab:red", lw=1.0, label="close" if t == closes[0] else None)
    for t in opens:
        ax.axvline(t, color="tab:green", lw=1.0, label="open" if t == opens[0] else None)
    if closes or opens:
        ax.legend(loc="upper right", fontsize=8)
    ax.set_ylabel("phase")
    ax.set_xlabel("time [s]")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_episodes(metrics: Metrics, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if metrics.episodes:
        xs = list(range(len(metrics.episodes)))
        heights = [ep.time_to_grasp_ms / 1000.0 for ep in metrics.episodes]
        colors = [
            "tab:green" if ep.grasp_valid else ("0.6" if ep.grasp_valid is None else "tab:red")
            for ep in metrics.episodes
        ]
        ax.bar(xs, heights, color=colors)
        ax.set_xticks(xs)
    else:
        ax.text(0.5, 0.5, "no grasp episodes", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("episode")
    ax.set_ylabel("time to grasp [s]")
    ax.set_title("grasp episodes (green=valid, red=false grasp)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
