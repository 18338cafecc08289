"""SVG line plots for the CLI reports.  The CSV tables remain the record;
these renderings are a convenience."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_SVG_METADATA = {"Date": None, "Creator": "covprep"}


def line_plot(path, x, series: Mapping[str, np.ndarray], *, xlabel: str, ylabel: str,
              title: str = "", logy: bool = False, markers: bool = True) -> Path:
    """Plot each named series against ``x`` and save as SVG."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = np.asarray(x)
    for label, y in series.items():
        y = np.asarray(y, dtype=float)
        if logy:
            # log axes cannot show exact zeros; clip to the smallest positive double
            y = np.clip(y, np.finfo(float).tiny, None)
        ax.plot(x[: y.size], y, marker="o" if markers else None, markersize=3, linewidth=1.2, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "covprep"
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def eigenvalue_plot(path, q_desc, r_shifted) -> Path:
    j = np.arange(len(q_desc))
    return line_plot(path, j, {"covariance q": q_desc, "ensemble density r": r_shifted},
                     xlabel="j", ylabel="eigenvalue", title="Paired eigenvalues", logy=True)


def overlap_plot(path, overlaps) -> Path:
    j = np.arange(len(overlaps))
    return line_plot(path, j, {"overlap": overlaps}, xlabel="j", ylabel="squared overlap",
                     title="Principal component overlap")


def eigenvector_error_plot(path, errors: Mapping[str, np.ndarray]) -> Path:
    first = next(iter(errors.values()))
    return line_plot(path, np.arange(len(first)), errors, xlabel="j", ylabel="eigenvector error",
                     title="Eigenvector error", logy=True)


def curve_plot(path, n_values, curves: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> Path:
    series = {}
    for source, (median, p90) in curves.items():
        series[f"{source} median"] = median
        series[f"{source} 90th percentile"] = p90
    return line_plot(path, n_values, series, xlabel="number of components n", ylabel="infidelity",
                     title="Compression curve", logy=True)


def trace_plot(path, costs, estimates=None) -> Path:
    series = {"exact cost": costs}
    if estimates is not None and len(estimates):
        series["sampled estimate"] = np.concatenate([[np.nan], estimates])
    return line_plot(path, np.arange(len(costs)), series, xlabel="sweep", ylabel="cost",
                     title="Optimization trace", logy=True, markers=False)
