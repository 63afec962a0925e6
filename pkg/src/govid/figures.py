"""Matplotlib renderers for the report path.

Every function writes a PNG next to the delimited output and returns the
path.  The Agg backend is forced so the CLI works headless; PNG metadata is
stripped for reproducible bytes.
"""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def fit_overlay(time, measured, simulated, path, label="output", title=None):
    """Measured vs simulated trajectory with the residual underneath."""
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5),
                                   height_ratios=[3, 1])
    ax1.plot(time, measured, lw=0.8, label="measured")
    ax1.plot(time, simulated, lw=0.8, ls="--", label="simulated")
    ax1.set_ylabel(f"{label} (pu)")
    ax1.legend(loc="best", fontsize=8)
    if title:
        ax1.set_title(title, fontsize=10)
    ax2.plot(time, np.asarray(measured) - np.asarray(simulated), lw=0.6, color="gray")
    ax2.set_ylabel("residual")
    ax2.set_xlabel("time (s)")
    return _finish(fig, path)


def autocorr_plot(whiteness, path, title=None):
    """Residual autocorrelation per lag with the +-beta*R(0)/sqrt(N) band."""
    r = whiteness.autocorr
    lags = np.arange(len(r))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.stem(lags[1:], r[1:], basefmt=" ")
    ax.axhline(whiteness.band, color="red", ls="--", lw=0.8, label="confidence band")
    ax.axhline(-whiteness.band, color="red", ls="--", lw=0.8)
    ax.axhline(0.0, color="black", lw=0.5)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    verdict = "pass" if whiteness.passed else "fail"
    ax.set_title(title or f"residual autocorrelation ({verdict})", fontsize=10)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def convergence_plot(histories, path, title=None):
    """Best objective value per generation, one line per restart round."""
    fig, ax = plt.subplots(figsize=(7, 4))
    offset = 0
    for k, hist in enumerate(histories):
        gens = np.arange(len(hist)) + offset
        ax.semilogy(gens, np.maximum(hist, 1e-30), lw=1.0, label=f"round {k + 1}")
        offset += len(hist)
    ax.set_xlabel("generation")
    ax.set_ylabel("best objective (MSE)")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def comparison_plot(indices, path, title=None):
    """Grouped bars of validation error index per subsystem per optimizer."""
    optimizers = list(indices)
    subsystems = sorted({s for table in indices.values() for s in table})
    width = 0.8 / max(len(optimizers), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(subsystems), dtype=float)
    for i, opt in enumerate(optimizers):
        vals = [indices[opt].get(s, np.nan) for s in subsystems]
        ax.bar(x + i * width, vals, width, label=opt)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([f"({s})" for s in subsystems])
    ax.set_xlabel("subsystem")
    ax.set_ylabel("validation error index (%)")
    ax.set_yscale("log")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    return _finish(fig, path)
