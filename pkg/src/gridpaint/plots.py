"""Static figures emitted by the CLI: fan charts, quantile envelopes, forest plots."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .forecast import QuantileForecast
from .grids import SeasonFrame


def fan_chart(qf: QuantileForecast, season_so_far: SeasonFrame, reference_week: int,
              path, locations: tuple[str, ...] | None = None) -> None:
    """Observed history plus forecast quantile fan per location."""
    locations = locations or qf.locations[: min(4, len(qf.locations))]
    fig, axes = plt.subplots(len(locations), 1, figsize=(8, 2.5 * len(locations)),
                             squeeze=False, sharex=True)
    hist_weeks = np.arange(1, reference_week)
    fc_weeks = np.array([reference_week + h - 1 for h in qf.horizons])
    for ax, loc in zip(axes[:, 0], locations):
        col = season_so_far.location_codes.index(loc)
        ax.plot(hist_weeks, season_so_far.values[: reference_week - 1, col],
                color="black", lw=1.2, label="observed")
        li = qf.locations.index(loc)
        levels = np.asarray(qf.levels)
        for lo_i in range(len(levels) // 2):
            ax.fill_between(fc_weeks, qf.values[li, :, lo_i], qf.values[li, :, -(lo_i + 1)],
                            color="tab:blue", alpha=0.08, lw=0)
        ax.plot(fc_weeks, qf.values[li, :, len(levels) // 2], color="tab:blue",
                lw=1.5, label="median forecast")
        ax.axvline(reference_week, color="tab:red", ls="--", lw=0.8)
        ax.set_ylabel(loc)
    axes[0, 0].legend(loc="upper left", fontsize=8)
    axes[-1, 0].set_xlabel("week")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def quantile_envelope(frames: list[SeasonFrame], path,
                      locations: tuple[str, ...] | None = None) -> None:
    """Envelope of generated trajectories per location."""
    codes = frames[0].location_codes
    locations = locations or codes[: min(4, len(codes))]
    stack = np.stack([f.values for f in frames])
    weeks = np.arange(1, stack.shape[1] + 1)
    fig, axes = plt.subplots(len(locations), 1, figsize=(8, 2.5 * len(locations)),
                             squeeze=False, sharex=True)
    for ax, loc in zip(axes[:, 0], locations):
        col = codes.index(loc)
        for q_lo, q_hi, a in ((0.025, 0.975, 0.15), (0.25, 0.75, 0.3)):
            ax.fill_between(weeks, np.quantile(stack[:, :, col], q_lo, axis=0),
                            np.quantile(stack[:, :, col], q_hi, axis=0),
                            color="tab:green", alpha=a, lw=0)
        ax.plot(weeks, np.median(stack[:, :, col], axis=0), color="tab:green", lw=1.5)
        ax.set_ylabel(loc)
    axes[-1, 0].set_xlabel("week")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def forest_plot(report: pd.DataFrame, path) -> None:
    """Percent WIS change per variant, grouped; the ablation summary figure."""
    df = report[report["name"] != "baseline"]
    fig, ax = plt.subplots(figsize=(7, 0.45 * max(len(df), 4) + 1))
    ypos = np.arange(len(df))[::-1]
    colors = {g: c for g, c in zip(df["group"].unique(), plt.cm.tab10.colors)}
    ax.scatter(df["delta_wis_pct"], ypos, c=[colors[g] for g in df["group"]], zorder=3)
    ax.axvline(0, color="grey", lw=0.8)
    ax.set_yticks(ypos)
    ax.set_yticklabels(df["name"] + "  [" + df["group"] + "]")
    ax.set_xlabel("WIS change vs baseline (%)  (positive = better)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
