"""Figures written next to the reports (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["save", "plot_field", "plot_load", "plot_history", "plot_scaling", "plot_embedding", "plot_samples"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "image.cmap": "viridis",
}


def save(fig, path) -> Path:
    # no timestamp or version in the metadata, so reruns give identical files
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _extent(grid):
    x1a, x1b, x2a, x2b = grid.bounds
    return [x1a, x1b, x2a, x2b]


def plot_field(grid, values, path, title="", label=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3.4))
        im = ax.imshow(np.asarray(values).T, origin="lower", extent=_extent(grid), aspect="equal")
        fig.colorbar(im, ax=ax, label=label)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_title(title)
        fig.tight_layout()
        return save(fig, path)


def plot_load(grid, f, path):
    """Normal component as a heat map with the in-plane part as arrows."""
    f = np.asarray(f)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3.4))
        im = ax.imshow(f[..., 2].T, origin="lower", extent=_extent(grid), aspect="equal")
        fig.colorbar(im, ax=ax, label="$f_3$")
        step = max(1, grid.n1 // 12)
        X1, X2 = grid.coords
        if np.any(f[..., :2]):
            ax.quiver(X1[::step, ::step], X2[::step, ::step], f[::step, ::step, 0], f[::step, ::step, 1], color="w")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_title("load")
        fig.tight_layout()
        return save(fig, path)


def plot_history(values, path, title="energy history"):
    values = np.asarray(values, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        if values.size:
            ax.plot(np.arange(1, values.size + 1), values, lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("total energy")
        ax.set_title(title)
        fig.tight_layout()
        return save(fig, path)


def plot_scaling(h, energy, slope, intercept, path, title=""):
    h = np.asarray(h, dtype=float)
    energy = np.asarray(energy, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.loglog(h, energy, "o", ms=4, label="$E_h$")
        ax.loglog(h, np.exp(intercept) * h**slope, "-", lw=1, label=f"slope {slope:.3f}")
        ax.set_xlabel("$h$")
        ax.set_ylabel("energy")
        ax.legend()
        ax.set_title(title)
        fig.tight_layout()
        return save(fig, path)


def plot_embedding(grid, y, residual_map, path):
    y = np.asarray(y)
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(7, 3.2))
        ax = fig.add_subplot(1, 2, 1, projection="3d")
        ax.plot_surface(y[..., 0], y[..., 1], y[..., 2], rstride=max(1, grid.n1 // 32),
                        cstride=max(1, grid.n2 // 32), linewidth=0, antialiased=False)
        ax.set_title("embedded surface")
        ax2 = fig.add_subplot(1, 2, 2)
        im = ax2.imshow(np.asarray(residual_map).T, origin="lower", extent=_extent(grid), aspect="equal")
        fig.colorbar(im, ax=ax2, label="metric residual")
        ax2.set_xlabel("$x_1$")
        ax2.set_ylabel("$x_2$")
        fig.tight_layout()
        return save(fig, path)


def plot_samples(values, path, title="sampled total energies"):
    values = np.sort(np.asarray(values, dtype=float))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(values, ".", ms=3)
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("sample (sorted)")
        ax.set_ylabel("J")
        ax.set_title(title)
        fig.tight_layout()
        return save(fig, path)
