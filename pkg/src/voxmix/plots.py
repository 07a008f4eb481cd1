"""Report figures: per-metric box plots across evaluation regions.

Rendered headlessly to files next to the delimited report output.  Each
metric gets one figure with a box per region; the mean is marked with an x
on top of the usual median line.  Undefined values are excluded per column,
mirroring how the aggregate summary treats them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import METRIC_NAMES, MetricsReport

_AXIS_LABELS = {
    "dice": "Dice",
    "sensitivity": "Sensitivity",
    "specificity": "Specificity",
    "hd95_mm": "HD95 (mm)",
}


def render_metric_boxplots(
    reports: list[MetricsReport], out_dir: Path, dpi: int = 120
) -> list[Path]:
    """One box-plot figure per metric; returns the paths actually written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not reports:
        return []
    region_names = list(reports[0].regions)
    written = []
    for metric in METRIC_NAMES:
        labels = []
        columns = []
        for region in region_names:
            values = [
                getattr(rep.regions[region], metric)
                for rep in reports
                if getattr(rep.regions[region], metric) is not None
            ]
            if values:
                labels.append(region)
                columns.append(values)
        if not columns:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.boxplot(columns, tick_labels=labels)
        for pos, values in enumerate(columns, start=1):
            ax.plot(pos, sum(values) / len(values), "x", color="black")
        ax.set_ylabel(_AXIS_LABELS[metric])
        ax.set_xlabel("region")
        ax.set_title(f"{_AXIS_LABELS[metric]} per region (n={len(reports)})")
        fig.tight_layout()
        path = out_dir / f"boxplot_{metric}.png"
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        written.append(path)
    return written
