"""SVG line charts for the sweep outputs (matplotlib, imported lazily)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("plotting needs matplotlib; install the 'plot' extra") from exc
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
    return plt


def gains_chart(sweep, path) -> Path:
    """Every first-stage gain entry against ``T``, one panel per player."""
    plt = _pyplot()
    T = np.array(sweep.horizons)
    N = len(sweep.gains[T[0]].K)
    fig, axes = plt.subplots(1, N, figsize=(5 * N, 3.6), squeeze=False)
    for i, ax in enumerate(axes[0]):
        K = np.array([sweep.gains[t].K[i].ravel() for t in T])
        L = np.array([sweep.gains[t].L[i].ravel() for t in T])
        for k in range(K.shape[1]):
            ax.plot(T, K[:, k], lw=1, label=f"K[{k + 1}]")
        for k in range(L.shape[1]):
            ax.plot(T, L[:, k], "k--", lw=1.5, label="L" if L.shape[1] == 1 else f"L[{k + 1}]")
        ax.set_title(f"player {i + 1}")
        ax.set_xlabel("T")
        ax.grid(alpha=0.3)
    axes[0][-1].legend(fontsize=7, ncol=2, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def costs_chart(sweep, path) -> Path:
    """Receding-horizon cost per player against ``T`` with the oracle level dashed."""
    plt = _pyplot()
    T = np.array(sweep.horizons)
    N = sweep.costs.shape[1]
    fig, axes = plt.subplots(1, N, figsize=(5 * N, 3.6), squeeze=False)
    for i, ax in enumerate(axes[0]):
        ax.plot(T, sweep.costs[:, i], "o-", ms=3, lw=1, label=f"J~ player {i + 1}")
        if sweep.oracle_costs is not None and np.isfinite(sweep.oracle_costs[i]):
            ax.axhline(sweep.oracle_costs[i], color="k", ls="--", lw=1, label="oracle")
        ax.set_xlabel("T")
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
