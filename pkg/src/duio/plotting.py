"""Static figures for the report command (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from duio.sim import TraceSet  # noqa: E402


def plot_error_norms(trace: TraceSet, path: str | Path, title: str = "") -> Path:
    """Per-node estimation error norm against time, log scale."""
    t = np.arange(trace.horizon) * trace.step_time
    fig, ax = plt.subplots(figsize=(7, 4))
    # floor keeps exact zeros off a log axis
    err = np.maximum(trace.err_norm, np.finfo(float).tiny)
    for i in range(trace.node_count):
        ax.semilogy(t, err[:, i], lw=1.0, label=f"node {i + 1}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel(r"$\|e_i(k)\|_2$")
    ax.set_title(title or "estimation error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_states(trace: TraceSet, path: str | Path, title: str = "") -> Path:
    t = np.arange(trace.horizon) * trace.step_time
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(trace.x.shape[1]):
        ax.plot(t, trace.x[:, j], lw=1.0, label=f"$x_{{{j + 1}}}$")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("state")
    ax.set_title(title or "plant state")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small", ncol=3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
