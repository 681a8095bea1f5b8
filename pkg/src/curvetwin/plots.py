"""Figures for sweep reports: safe speeds per vehicle and condition, and the
percent deviation of each estimate from observed speeds."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata normally carries the matplotlib version; drop it so equal
# inputs give equal bytes.
_PNG_META = {"Software": None}


def _grouped(rows, key):
    vehicles = list(dict.fromkeys(r["vehicle"] for r in rows))
    conditions = list(dict.fromkeys(r["condition"] for r in rows))
    table = {(r["vehicle"], r["condition"]): r.get(key) for r in rows}
    return vehicles, conditions, table


def plot_speeds(rows, path, aashto_mph=None, title="Maximum safe curve speed"):
    """Grouped bars of simulated maximum safe speed; AASHTO as a reference line."""
    vehicles, conditions, table = _grouped(rows, "simulated_max_safe_mph")
    x = np.arange(len(vehicles))
    width = 0.8 / max(len(conditions), 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    top = max([v or 0.0 for v in table.values()] + [aashto_mph or 0.0])
    ax.set_ylim(0.0, 1.3 * top if top > 0 else 1.0)  # headroom for the legend
    for i, cond in enumerate(conditions):
        vals = [table.get((v, cond)) or 0.0 for v in vehicles]
        bars = ax.bar(x + (i - (len(conditions) - 1) / 2) * width, vals, width, label=cond)
        ax.bar_label(bars, fmt="%.0f", fontsize=8)
    if aashto_mph is not None:
        ax.axhline(aashto_mph, color="k", linestyle="--", linewidth=1,
                   label=f"AASHTO design ({aashto_mph:.1f} mph)")
    ax.set_xticks(x, vehicles)
    ax.set_ylabel("speed (mph)")
    ax.set_title(title)
    ax.legend(fontsize=8, loc="upper right", ncol=3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_deviations(rows, path, title="Deviation from observed maximum speed"):
    """Bars of percent deviation (simulated and AASHTO) per vehicle/condition cell.

    Cells without an observed speed are skipped; returns False when nothing
    is left to draw.
    """
    cells = [r for r in rows if r.get("observed_max_mph") is not None]
    if not cells:
        return False
    labels = [f"{r['vehicle']}\n{r['condition']}" for r in cells]
    x = np.arange(len(cells))
    fig, ax = plt.subplots(figsize=(max(6.4, 1.1 * len(cells)), 4.0))
    for i, (key, name) in enumerate((("deviation_simulated_pct", "simulated"),
                                     ("deviation_aashto_pct", "AASHTO"))):
        vals = [r.get(key) or 0.0 for r in cells]
        bars = ax.bar(x + (i - 0.5) * 0.38, vals, 0.38, label=name)
        ax.bar_label(bars, fmt="%.1f", fontsize=8)
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.set_xticks(x, labels)
    ax.set_ylabel("deviation (%)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return True
