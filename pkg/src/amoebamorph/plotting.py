"""PNG figures for amplification sweeps, contours and diagnostics.

Figures are drawn on the Agg canvas without pyplot, so no global state or
display is touched; PNG metadata is stripped so repeated runs give identical
bytes.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .contours import Contour
from .grid import Image

_PNG_META = {"Software": None}


def _figure(size=(5.0, 3.6)):
    fig = Figure(figsize=size, dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path) -> None:
    fig.savefig(path, format="png", metadata=_PNG_META)


def plot_amplification(k: Sequence[float], numeric: Sequence[float], path,
                       analytic: Sequence[float] | None = None,
                       continuum: Sequence[float] | None = None, title: str = "") -> None:
    """Amplification factor against frequency, one marker series per source."""
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    k = np.asarray(k, dtype=float)
    order = np.argsort(k)
    ax.plot(k[order], np.asarray(numeric, dtype=float)[order], "o-", label="numeric")
    for vals, style, lab in ((analytic, "s--", "closed form"), (continuum, "^:", "continuum")):
        if vals is None:
            continue
        v = np.asarray(vals, dtype=float)[order]
        if np.all(np.isnan(v)):
            continue
        ax.plot(k[order], v, style, label=lab)
    ax.axhline(1.0, color="0.6", lw=0.8)
    ax.axhline(0.0, color="0.8", lw=0.8)
    ax.set_xlabel("frequency k")
    ax.set_ylabel("amplification")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_contour(img: Image, contour: Contour, path, truth: np.ndarray | None = None,
                 title: str = "") -> None:
    """Image in grey with the contour polylines (and an optional reference point set) on top."""
    fig = _figure((4.5, 4.5 * img.height / max(img.width, 1)))
    ax = fig.add_subplot(1, 1, 1)
    ax.imshow(img.data, cmap="gray", interpolation="nearest")
    for poly in contour.polylines:
        q = np.vstack([poly, poly[:1]])
        ax.plot(q[:, 0], q[:, 1], "r-", lw=1.0)
    if truth is not None and len(truth):
        ax.plot(truth[:, 0], truth[:, 1], ",", color="c")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_series(values: Sequence[float], path, ylabel: str, xlabel: str = "iteration",
                title: str = "") -> None:
    """Single line plot, e.g. enclosed area or max/min per step."""
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(np.arange(len(values)), np.asarray(values, dtype=float), "-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_map(img: Image, path, title: str = "") -> None:
    """Scalar map with a colour bar."""
    fig = _figure((4.8, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    im = ax.imshow(img.data, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
