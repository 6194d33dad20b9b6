"""PNG renderings of the plot-data series (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

__all__ = ["render_suite"]

STYLE = {"figure.figsize": (5.0, 3.6), "axes.grid": True, "grid.alpha": 0.3,
         "font.size": 9, "legend.fontsize": 8, "savefig.dpi": 120}


def _loglog(ax, xy, label, marker="o"):
    xy = np.asarray(xy, dtype=float)
    keep = np.all(np.isfinite(xy), axis=1) & np.all(xy > 0, axis=1)
    if np.any(keep):
        ax.loglog(xy[keep, 0], xy[keep, 1], marker=marker, label=label)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def render_suite(result, outdir) -> list[Path]:
    """Draw every plot series of one suite result; returns the written files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    with plt.rc_context(STYLE):
        if result.suite == "sharpness":
            fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
            for name, xy in result.plots.items():
                label = name[len(result.block) + 1:].replace("_window", "")
                ax = axes[1] if name.endswith("_window") else axes[0]
                _loglog(ax, xy, label)
            axes[0].set_title("sup |D^2 u_h| over the grid")
            axes[1].set_title("sup |D^2 u_h| near the degenerate point")
            for ax in axes:
                ax.set_xlabel("1/h")
                ax.legend()
            files.append(_save(fig, outdir / f"{result.block}.png"))
        elif result.suite == "solve":
            err = result.plots.get(f"{result.block}_error")
            if err is not None and len(err) > 1:
                fig, ax = plt.subplots()
                _loglog(ax, err, "max-norm error")
                ref = err[0, 1] * (err[0, 0] / err[:, 0]) ** 2
                ax.loglog(err[:, 0], ref, "k--", lw=0.8, label="slope -2")
                ax.set_xlabel("1/h")
                ax.set_ylabel("error")
                ax.legend()
                files.append(_save(fig, outdir / f"{result.block}_error.png"))
        elif result.suite == "probe" and result.plots:
            fig, ax = plt.subplots()
            for name, xy in result.plots.items():
                _loglog(ax, xy, name[len(result.block) + 1:])
            ax.set_xlabel("1/collar")
            ax.set_ylabel("sup |grad g|^2 / g")
            ax.legend()
            files.append(_save(fig, outdir / f"{result.block}.png"))
    return files
