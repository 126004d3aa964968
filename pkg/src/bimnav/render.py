"""ASCII and matplotlib renderings of grids, potentials, and paths."""

from __future__ import annotations

import io
from typing import Sequence

import numpy as np

from .field import ScalarField
from .gridmap import Grid

Cell = tuple[int, int]

# low potential blue, high potential red
CMAP = "jet"


def ascii_render(grid: Grid, path: Sequence[Cell] = (), start: Cell | None = None, goal: Cell | None = None) -> str:
    """One character per cell, north (highest row) first.

    ``.`` walkable, ``#`` blocked, ``*`` path, ``S``/``G`` endpoints.
    """
    canvas = np.where(grid.walkable, ".", "#").astype("<U1")
    for c, r in path:
        canvas[r, c] = "*"
    if start is None and path:
        start = path[0]
    if goal is None and path:
        goal = path[-1]
    if start is not None:
        canvas[start[1], start[0]] = "S"
    if goal is not None:
        canvas[goal[1], goal[0]] = "G"
    return "".join("".join(row) + "\n" for row in canvas[::-1])


def heatmap_rgba(field: ScalarField, cmap: str = CMAP) -> np.ndarray:
    """Per-cell RGBA for ``field``; a constant field maps to one color."""
    from matplotlib import colormaps

    v = field.values
    finite = np.isfinite(v)
    lo = v[finite].min() if finite.any() else 0.0
    hi = v[finite].max() if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros_like(v) if span == 0 else (np.where(finite, v, hi) - lo) / span
    return colormaps[cmap](scaled)


def _figure(grid: Grid, field: ScalarField | None, paths: dict[str, Sequence[Cell]], title: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "bimnav"
    plt.rcParams["svg.fonttype"] = "none"
    ox, oy = grid.origin
    extent = (ox, ox + grid.cols * grid.resolution, oy, oy + grid.rows * grid.resolution)
    fig, ax = plt.subplots(figsize=(6.4, 6.4 * grid.rows / grid.cols + 0.6))
    if field is not None:
        img = heatmap_rgba(field)
    else:
        img = np.ones((grid.rows, grid.cols, 4))
    img[~grid.walkable] = (0.15, 0.15, 0.15, 1.0)
    ax.imshow(img, origin="lower", extent=extent, interpolation="nearest")
    colors = ("white", "black", "magenta", "lime", "orange")
    for k, (label, path) in enumerate(paths.items()):
        if not path:
            continue
        pts = np.array([grid.cell_center(c) for c in path])
        ax.plot(pts[:, 0], pts[:, 1], color=colors[k % len(colors)], lw=1.6, label=label)
        ax.plot(*pts[0], marker="o", color="lime", ms=6)
        ax.plot(*pts[-1], marker="*", color="yellow", ms=10)
    if paths:
        ax.legend(loc="upper right", fontsize=7, framealpha=0.8)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    return fig


def render_figure(
    grid: Grid,
    field: ScalarField | None = None,
    paths: dict[str, Sequence[Cell]] | None = None,
    fmt: str = "svg",
    title: str = "",
) -> bytes:
    """Heatmap of ``field`` (blue low, red high) with obstacles and paths drawn over it."""
    import matplotlib.pyplot as plt

    fig = _figure(grid, field, paths or {}, title)
    buf = io.BytesIO()
    metadata = {"Date": None} if fmt == "svg" else {"Software": None}
    fig.savefig(buf, format=fmt, metadata=metadata)
    plt.close(fig)
    return buf.getvalue()
