"""Static top-down trajectory plots from emitted CSV files."""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _load(path):
    est = defaultdict(list)
    truth = defaultdict(list)
    with open(path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            r = int(row["robot"])
            est[r].append((float(row["est_x"]), float(row["est_y"])))
            truth[r].append((float(row["true_x"]), float(row["true_y"])))
    return est, truth


def plot_run(in_dir: str, out_file: str, agent: int = 0) -> str:
    """Overlay true (solid) and estimated (dashed) xy tracks for one
    computing agent's view of the fleet; writes a static image file."""
    path = os.path.join(in_dir, f"trajectory_agent{agent}.csv")
    est, truth = _load(path)
    fig, ax = plt.subplots(figsize=(7, 7))
    colors = plt.cm.tab10.colors
    for r in sorted(truth):
        c = colors[r % len(colors)]
        tx, ty = zip(*truth[r])
        ex, ey = zip(*est[r])
        ax.plot(tx, ty, "-", color=c, linewidth=1.2, label=f"robot {r} true")
        ax.plot(ex, ey, "--", color=c, linewidth=1.0, label=f"robot {r} est")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"fleet tracks as estimated by agent {agent}")
    ax.axis("equal")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(out_file, dpi=130)
    plt.close(fig)
    return out_file
