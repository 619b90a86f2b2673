"""Benchmark report files: delimited output plus rendered figures.

The deterministic payload (task counts, check counts, state entries, barriers,
output checksums) goes to ``bench.csv``; wall times and spin counts are
environment-dependent and go to ``timing.csv``; run metadata (timestamp, argv,
seed) is isolated in ``meta.json`` so repeated runs with the same inputs and
seed produce byte-identical bench.csv files.  Figures are rendered alongside
the CSVs with matplotlib.
"""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

BENCH_COLUMNS = [
    "benchmark", "mapping", "factor", "params", "mode", "workers",
    "tasks", "sync_checks", "checks_interior", "obligations",
    "state_entries", "barriers", "checksum",
]

TIMING_COLUMNS = [
    "benchmark", "mapping", "factor", "mode", "workers", "wall_time",
    "total_spins",
]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_meta(path, argv, seed, extra=None) -> None:
    meta = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "argv": list(argv),
        "seed": seed,
    }
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_bench_figures(out_dir, bench_rows, timing_rows) -> list:
    """Task-count scaling (log-log) and wall-time comparison figures."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    by_mode: dict = {}
    for row in bench_rows:
        mode = row["mode"]
        by_mode.setdefault(mode, []).append((row["factor"], row["tasks"]))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for mode, pts in sorted(by_mode.items()):
        pts = sorted(set(pts))
        ax.loglog([p[0] for p in pts], [p[1] for p in pts],
                  marker="o", label=mode)
    ax.set_xlabel("size factor")
    ax.set_ylabel("tasks spawned")
    ax.set_title("task creation vs problem size")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    p = os.path.join(out_dir, "tasks.png")
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    keys = []
    times = {}
    for row in timing_rows:
        key = (row["factor"], row["workers"])
        if key not in keys:
            keys.append(key)
        times.setdefault(row["mode"], {})[key] = row["wall_time"]
    width = 0.8 / max(1, len(times))
    for i, (mode, vals) in enumerate(sorted(times.items())):
        xs = [j + i * width for j in range(len(keys))]
        ys = [vals.get(k, 0.0) for k in keys]
        ax.bar(xs, ys, width=width, label=mode)
    ax.set_xticks([j + width * (len(times) - 1) / 2 for j in range(len(keys))])
    ax.set_xticklabels([f"f{f}/w{w}" for f, w in keys], rotation=45, fontsize=7)
    ax.set_ylabel("wall time (s)")
    ax.set_title("execution time by mode")
    ax.legend()
    fig.tight_layout()
    p = os.path.join(out_dir, "time.png")
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)
    return paths
