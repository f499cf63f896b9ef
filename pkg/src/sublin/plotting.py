"""SVG figures for experiment reports.

Figures are built on the Agg-free SVG canvas with a fixed hash salt and no
date stamp, so the same data always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

_RC = {"svg.hashsalt": "sublin", "svg.fonttype": "none", "font.size": 9}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasSVG(fig)
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def _figure(**kw) -> Figure:
    with matplotlib.rc_context(_RC):
        return Figure(figsize=kw.get("figsize", (5.0, 3.4)), layout="constrained")


def convergence_plot(path, ns, gaps, errors, tolerance: float | None = None) -> Path:
    """|value - target| against n, with the numerical error bound as a band."""
    fig = _figure()
    ax = fig.add_subplot()
    ns, gaps, errors = map(np.asarray, (ns, gaps, errors))
    ax.fill_between(ns, np.maximum(gaps - errors, 1e-6), gaps + errors, alpha=0.25, label="error bound")
    ax.plot(ns, gaps, "o-", label="|value - target|")
    if tolerance is not None:
        ax.axhline(tolerance, color="k", ls="--", lw=0.8, label=f"tolerance {tolerance:g}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("gap")
    ax.legend()
    return _save(fig, path)


def path_fan(path, checkpoints, running_means, bands=(), max_paths: int = 60, title: str = "") -> Path:
    """Running means S_k/k for a subset of paths on a log step axis."""
    fig = _figure()
    ax = fig.add_subplot()
    rm = np.asarray(running_means)
    for row in rm[:max_paths]:
        ax.plot(checkpoints, row, lw=0.5, alpha=0.5, color="C0")
    for level in bands:
        ax.axhline(level, color="k", ls="--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("S_k / k")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def capacity_plot(path, ns, series: dict, thresholds: dict | None = None) -> Path:
    """Capacity bounds against n; ``series`` maps a label to its values."""
    fig = _figure()
    ax = fig.add_subplot()
    for label, ys in series.items():
        ax.plot(ns, ys, "o-", label=label)
    for label, level in (thresholds or {}).items():
        ax.axhline(level, ls="--", lw=0.8, color="k")
        ax.annotate(label, (ns[0], level), fontsize=7, va="bottom")
    ax.set_xscale("log", base=2)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("n")
    ax.set_ylabel("capacity")
    ax.legend()
    return _save(fig, path)


def resolution_plot(path, dxs, errors: dict) -> Path:
    """Max-norm error against grid spacing, one line per terminal function."""
    fig = _figure()
    ax = fig.add_subplot()
    for label, errs in errors.items():
        ax.plot(dxs, np.maximum(np.asarray(errs), 1e-17), "o-", label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("dx")
    ax.set_ylabel("max error")
    ax.legend()
    return _save(fig, path)


def heatmap(path, t, x, V, title: str = "") -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    mesh = ax.pcolormesh(x, t, V, shading="auto", rasterized=False)
    fig.colorbar(mesh, ax=ax, label="V")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    if title:
        ax.set_title(title)
    return _save(fig, path)
