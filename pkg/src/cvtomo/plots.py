"""Matplotlib figure rendering for the report outputs.

Each report CSV written by the analyze path gets a PNG rendered next to it.
Figures are file-only (Agg backend); nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fock import WignerGrid

__all__ = [
    "render_wigner",
    "render_fidelity_curve",
    "render_diagnostics",
    "render_cat_fit",
]


def render_wigner(grid: WignerGrid, path, title: str = "Wigner function") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    vmax = np.abs(grid.values).max()
    im = ax.pcolormesh(
        grid.xs, grid.ps, grid.values.T, cmap="RdBu_r", vmin=-vmax, vmax=vmax, shading="auto"
    )
    fig.colorbar(im, ax=ax, label="W(x, p)")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fidelity_curve(rows: list[dict], path, title: str = "Fidelity scaling") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ks = [r["K"] for r in rows]
    means = [r["fid_mean"] for r in rows]
    stds = [r["fid_std"] for r in rows]
    ax.errorbar(ks, means, yerr=stds, fmt="o-", capsize=3)
    ax.set_xscale("symlog", linthresh=1)
    ax.set_xlabel("measurements K")
    ax.set_ylabel("fidelity")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_diagnostics(
    steps, acceptance, lls, running_mean, running_std, path, title: str = "Chain diagnostics"
) -> None:
    fig, axes = plt.subplots(2, 1, figsize=(5.5, 5.0), sharex=True)
    axes[0].plot(steps, lls, lw=0.6)
    axes[0].set_ylabel("log likelihood")
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(steps, running_mean, label="running mean")
    band_lo = np.asarray(running_mean) - np.asarray(running_std)
    band_hi = np.asarray(running_mean) + np.asarray(running_std)
    axes[1].fill_between(steps, band_lo, band_hi, alpha=0.25, label="running std")
    ax2 = axes[1].twinx()
    ax2.plot(steps, acceptance, color="tab:red", lw=0.8, alpha=0.7)
    ax2.set_ylabel("acceptance", color="tab:red")
    axes[1].set_xlabel("chain step")
    axes[1].set_ylabel("functional")
    axes[1].legend(loc="lower right", fontsize=8)
    axes[1].grid(True, alpha=0.3)
    axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_cat_fit(alphas_abs, fids, path, title: str = "Nearest-cat posterior") -> None:
    fig, axes = plt.subplots(1, 2, figsize=(7.0, 3.2))
    axes[0].hist(alphas_abs, bins=40, color="tab:blue", alpha=0.8)
    axes[0].set_xlabel("|alpha|")
    axes[0].set_ylabel("samples")
    axes[1].hist(fids, bins=40, color="tab:orange", alpha=0.8)
    axes[1].set_xlabel("cat fidelity")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
