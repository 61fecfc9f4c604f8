"""Quick-look SVG charts of key-rate curves.

These are inspection aids; the CSV files are the data product.  Output is
byte-stable: the SVG hash salt is pinned and no creation date is embedded.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 8,
    "axes.linewidth": 0.6,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "sicqkd",
    "svg.fonttype": "none",
}


def plot_curves(curves, path, title: str = "", boundaries=None):
    """Log-scale key rate versus distance for one or more :class:`RateCurve`.

    ``boundaries`` maps a curve label to ``(b12, b23)`` and draws dashed
    markers at the region edges.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for curve in curves:
            d, r = curve.distances, curve.skr
            mask = r > 0
            ax.semilogy(d[mask], r[mask], label=curve.label)
        if boundaries:
            for label, edges in sorted(boundaries.items()):
                for b in edges:
                    if b is not None:
                        ax.axvline(b, color="0.6", linestyle="--", linewidth=0.6)
        ax.set_xlabel("distance (km)")
        ax.set_ylabel("secure key rate (bit/s)")
        if title:
            ax.set_title(title)
        if any(np.any(c.skr > 0) for c in curves):
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
