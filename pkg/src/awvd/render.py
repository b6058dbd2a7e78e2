"""Matplotlib rendering: diagram SVG and report figures.

SVG output is byte-reproducible: a fixed hash salt pins the generated
element ids and the date metadata is suppressed.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .errors import OutOfRange

_GOLDEN = 0.6180339887498949


def _label_color(label: int, n: int):
    hue = (label * _GOLDEN) % 1.0
    sat = 0.55 if label < n else 0.12
    val = 0.92
    return plt.matplotlib.colors.hsv_to_rgb((hue, sat, val))


def _fresh_figure():
    plt.rcParams["svg.hashsalt"] = "awvd"
    return plt.figure(figsize=(8.0, 8.0), dpi=100)


def render_svg(diagram, path) -> int:
    """Write the d=2 diagram as an SVG: one rectangle per tree cell
    (ancestors first, so deeper cells paint over their parents) plus one
    marker per site scaled by its weight.  Returns the rectangle count."""
    grid = diagram.grid
    if grid.d != 2:
        raise OutOfRange(f"rendering needs d=2, got d={grid.d}")
    sites = diagram.sites
    n = sites.n
    fig = _fresh_figure()
    try:
        ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
        ax.set_axis_off()
        ax.set_aspect("equal")
        count = 0
        for node in diagram.tree.nodes:  # z-order: parents precede children
            lo, hi = grid.cube_bounds(node.cube)
            ax.add_patch(
                Rectangle(
                    lo,
                    hi[0] - lo[0],
                    hi[1] - lo[1],
                    facecolor=_label_color(node.label, n),
                    edgecolor="black",
                    linewidth=0.2,
                )
            )
            count += 1
        weights = sites.weights
        ax.scatter(
            sites.coords[:, 0],
            sites.coords[:, 1],
            s=18.0 * (weights / weights.max()) ** 2 * 4 + 4,
            c="black",
            marker="o",
            zorder=5,
        )
        lo, hi = sites.bbox()
        center = (lo + hi) / 2.0
        half = np.maximum((hi - lo) / 2.0, 1e-3) * 1.5
        ax.set_xlim(center[0] - half[0], center[0] + half[0])
        ax.set_ylim(center[1] - half[1], center[1] + half[1])
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return count


def save_ratio_histogram(ratios, eps: float, path) -> None:
    """Histogram of approximation ratios with the (1 + eps) bound marked."""
    fig = _fresh_figure()
    try:
        ax = fig.add_subplot(111)
        finite = np.asarray(ratios)[np.isfinite(ratios)]
        ax.hist(finite, bins=60, color="#4878cf", edgecolor="black", linewidth=0.3)
        ax.axvline(1.0 + eps, color="red", linestyle="--", label=f"1 + eps = {1 + eps:g}")
        ax.set_xlabel("answer distance / exact distance")
        ax.set_ylabel("queries")
        ax.set_yscale("log")
        ax.legend()
        fig.savefig(path, metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)


def save_scaling_plot(inv_eps, totals, exponent: float, path) -> None:
    """Log-log plot of total cube count against 1/eps with the fitted slope."""
    fig = _fresh_figure()
    try:
        ax = fig.add_subplot(111)
        ax.loglog(inv_eps, totals, "o-", label="measured")
        anchor = totals[0] / inv_eps[0] ** exponent
        ax.loglog(
            inv_eps,
            [anchor * x**exponent for x in inv_eps],
            "--",
            label=f"slope {exponent:.2f}",
        )
        ax.set_xlabel("1 / eps")
        ax.set_ylabel("total cubes")
        ax.legend()
        fig.savefig(path, metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)
