"""SVG figures: residual curves, trigger instants and the privacy audit.

Figures are written with a fixed hash salt and no date stamp so repeated
invocations produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "gne-mesh",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def residual_figure(curves: dict[str, tuple[np.ndarray, np.ndarray]], path: Path, T: int) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for name, (mean, se) in curves.items():
            if mean.size < 2:
                continue
            k = np.arange(1, mean.size)
            line = ax.plot(k, mean[1:], label=name)[0]
            ax.fill_between(k, np.maximum(mean[1:] - se[1:], 1e-12), mean[1:] + se[1:],
                            color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_yscale("log")
        ax.set_xlabel("iteration k")
        ax.set_ylabel(f"windowed residual (T = {T})")
        if ax.lines:
            ax.legend(frameon=False)
        return _save(fig, path)


def trigger_figure(fired: np.ndarray, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.6))
        rounds = max(fired.shape[0] - 1, 1)
        for i in range(fired.shape[1]):
            ks = np.flatnonzero(fired[:rounds, i])
            ax.scatter(ks, np.full(ks.size, i + 1), s=6, marker="|")
        ax.set_yticks(range(1, fired.shape[1] + 1))
        ax.set_xlabel("iteration k")
        ax.set_ylabel("player")
        return _save(fig, path)


def privacy_figure(k, dy, bound, tight, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        m = np.asarray(k) >= 1
        ax.plot(k[m], dy[m], label="observed ||dy||")
        ax.plot(k[m], bound[m], label="2 L t ln k")
        ax.plot(k[m], tight[m], "--", label="2 L sum gamma")
        ax.set_yscale("symlog", linthresh=1e-3)
        ax.set_xlabel("iteration k")
        ax.legend(frameon=False)
        return _save(fig, path)
