"""Report artifacts: per-episode JSON, aggregate CSV, meta JSON.

The aggregate CSV carries one row per run with the benchmark-table
columns; distribution columns are rendered "mean ± std" with two
decimals. Pedestrian-disruption series are additionally pooled into a
histogram CSV.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import EpisodeMetrics, MetaReport

PM = "±"

SUMMARY_COLUMNS = [
    "episodes",
    "overall_success_rate",
    "failure_cases_T/PC/EC",
    "total_pedestrian_collisions",
    "avg_planning_wait_s",
    "path_length_m",
    "path_length_ratio",
    "goal_traversal_ratio",
    "path_irregularity_rad",
    "path_traversal_time_s",
    "avg_speed_mps",
    "avg_energy_j",
    "avg_acceleration_mps2",
    "avg_jerk_mps3",
    "mean_cpd_m",
    "mean_ttc_s",
]


def format_mean_std(values: Sequence[float]) -> str:
    if len(values) == 0:
        return ""
    mean = float(np.mean(values))
    std = float(np.std(values))
    return f"{mean:.2f} {PM} {std:.2f}"


def parse_mean_std(cell: str) -> Optional[tuple[float, float]]:
    if not cell:
        return None
    mean_s, std_s = cell.split(PM)
    return float(mean_s), float(std_s)


def summary_row(episode_metrics: Sequence[EpisodeMetrics],
                meta: MetaReport) -> dict[str, str]:
    def column(values):
        return format_mean_std([v for v in values if v is not None])

    return {
        "episodes": str(meta.episode_count),
        "overall_success_rate": f"{meta.successes}/{meta.episode_count}",
        "failure_cases_T/PC/EC": meta.failure_tuple_str(),
        "total_pedestrian_collisions": str(meta.total_pedestrian_collisions),
        "avg_planning_wait_s": f"{meta.avg_planning_wait_s:.4f}",
        "path_length_m": column(m.path_length_m for m in episode_metrics),
        "path_length_ratio": column(m.path_length_ratio for m in episode_metrics),
        "goal_traversal_ratio": column(
            m.goal_traversal_ratio for m in episode_metrics),
        "path_irregularity_rad": column(
            m.path_irregularity_rad for m in episode_metrics),
        "path_traversal_time_s": column(
            m.traversal_time_s for m in episode_metrics),
        "avg_speed_mps": column(m.avg_speed_mps for m in episode_metrics),
        "avg_energy_j": column(m.energy_j for m in episode_metrics),
        "avg_acceleration_mps2": column(
            m.avg_acceleration_mps2 for m in episode_metrics),
        "avg_jerk_mps3": column(m.avg_jerk_mps3 for m in episode_metrics),
        "mean_cpd_m": column(m.mean_cpd_m for m in episode_metrics),
        "mean_ttc_s": column(m.mean_ttc_s for m in episode_metrics),
    }


def render_summary_csv(episode_metrics: Sequence[EpisodeMetrics],
                       meta: MetaReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerow(summary_row(episode_metrics, meta))
    return buf.getvalue()


def histogram_csv(episode_metrics: Sequence[EpisodeMetrics],
                  bins: int = 50) -> str:
    """Pooled CPD/TTC histograms as raw bin counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series", "bin_left", "bin_right", "count"])
    for name, values, lo, hi in (
            ("cpd_m", [v for m in episode_metrics for v in m.cpd_series_m],
             -1.0, 10.0),
            ("ttc_s", [v for m in episode_metrics for v in m.ttc_series_s],
             0.0, 10.0)):
        counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
        for count, left, right in zip(counts, edges[:-1], edges[1:]):
            writer.writerow([name, f"{left:.4f}", f"{right:.4f}", int(count)])
    return buf.getvalue()


def write_reports(episode_metrics: Sequence[EpisodeMetrics], meta: MetaReport,
                  out_dir: str | Path) -> list[Path]:
    """Write `<ep>/metrics.json`, `summary.csv`, `meta.json`, histograms.

    Validates inputs before touching the filesystem so a bad call leaves
    no partial output.
    """
    if not episode_metrics:
        raise ValueError("no episode metrics to report")
    out_dir = Path(out_dir)
    summary = render_summary_csv(episode_metrics, meta)
    hist = histogram_csv(episode_metrics)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for m in episode_metrics:
        ep_dir = out_dir / m.episode
        ep_dir.mkdir(parents=True, exist_ok=True)
        path = ep_dir / "metrics.json"
        path.write_text(json.dumps(m.to_doc(), sort_keys=True, indent=2))
        written.append(path)
    (out_dir / "summary.csv").write_text(summary)
    (out_dir / "meta.json").write_text(
        json.dumps(meta.to_doc(), sort_keys=True, indent=2))
    (out_dir / "pedestrian_histograms.csv").write_text(hist)
    written += [out_dir / "summary.csv", out_dir / "meta.json",
                out_dir / "pedestrian_histograms.csv"]
    return written
