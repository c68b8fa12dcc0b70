"""Deterministic SVG line plots of trajectory channels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {
    "energy_X2": r"$\|U\|^2_{X^2}$",
    "energy_M1": r"$\|\Phi\|^2_{M^1}$",
    "dissipation": r"$\langle T\Phi,\Phi\rangle_{M^1}$",
    "V1_norm": r"$\|U\|_{V^1}$",
    "energy": r"$E = \|U\|^2_{X^2} + \|\Phi\|^2_{M^1}$",
}

# fixed ids, no timestamps, text kept as text so output bytes depend only on data
_RC = {
    "svg.hashsalt": "cogur",
    "svg.fonttype": "none",
    "figure.figsize": (5.0, 3.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "font.size": 9,
}


def channel_values(traj, name: str) -> np.ndarray:
    if name == "energy":
        return traj.energy
    return np.asarray(traj.channels.get(name, np.empty(0)))


def plot_channel(times, values, name: str, path) -> Path:
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(times, values, color="k")
        if name == "dissipation":
            ax.axhline(0.0, color="0.5", lw=0.8, ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel(LABELS.get(name, name))
        ax.set_title(name)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return path


def emit_plots(traj, channels, directory) -> tuple[list[Path], list[str]]:
    """One SVG per channel; returns written files and notes on skipped channels."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written, notes = [], []
    for name in channels:
        vals = channel_values(traj, name)
        if vals.size == 0 or traj.times.size == 0:
            notes.append(f"{name}: empty channel, plot skipped")
            continue
        written.append(plot_channel(traj.times, vals, name, directory / f"{name}.svg"))
    return written, notes
