"""Delimited output and figure rendering for the command-line reports.

CSV files carry a header row, '.' decimal separator and floats at 17
significant digits; every file is written atomically (temp + rename).
Figures are rendered headless to PNG next to the delimited output.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .system import atomic_write_text

FIGSIZE = (6.4, 4.0)
DPI = 150


def fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_text(path, text):
    atomic_write_text(path, text)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_sigma(sigma, path, title="singular values"):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    idx = np.arange(1, len(sigma) + 1)
    ax.semilogy(idx, sigma, "o-", ms=4)
    ax.set_xlabel("index")
    ax.set_ylabel(r"$\sigma_i$")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    _save(fig, path)


def plot_sweep(rows, path, title="bound vs. error"):
    """rows: (kind, r_state, bound_or_None, err_lo, err_hi)."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    kinds = sorted({row[0] for row in rows})
    markers = {"I": "o", "II": "s"}
    for kind in kinds:
        sel = [row for row in rows if row[0] == kind]
        r = [row[1] for row in sel]
        err = [0.5 * (row[3] + row[4]) for row in sel]
        ax.semilogy(r, err, markers.get(kind, "x") + "-", label=f"type {kind} error")
        bnd = [(row[1], row[2]) for row in sel if row[2] is not None]
        if bnd:
            ax.semilogy(
                [b[0] for b in bnd],
                [b[1] for b in bnd],
                markers.get(kind, "x") + "--",
                label=f"type {kind} bound",
            )
    ax.set_xlabel("reduced order r")
    ax.set_ylabel("H-infinity error / bound")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    _save(fig, path)


def plot_trajectory(t, mean_err, q05, q95, path, title="output error"):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(t, mean_err, label=r"mean $\|y - y_r\|$")
    ax.fill_between(t, q05, q95, alpha=0.25, label="5-95% band")
    ax.set_xlabel("t")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, path)
