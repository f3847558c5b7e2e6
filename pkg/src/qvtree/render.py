"""Static images of grids, beliefs and paths (binary PPM or SVG)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FREE = np.array([255, 255, 255], dtype=np.float64)
WALL = np.array([60, 60, 60], dtype=np.float64)
BELIEF = np.array([0, 150, 170], dtype=np.float64)
PATH = np.array([20, 20, 20], dtype=np.uint8)
START = np.array([30, 160, 40], dtype=np.uint8)
GOAL = np.array([200, 30, 30], dtype=np.uint8)


@dataclass(frozen=True)
class RenderSpec:
    cell_size: int = 12
    occupancy: bool = True
    belief: bool = True
    path: bool = True
    markers: bool = True
    fmt: str = "ppm"

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell size must be >= 1")
        if self.fmt not in ("ppm", "svg"):
            raise ValueError(f"unknown image format {self.fmt!r}")


def belief_intensity(belief):
    """Per-cell overlay strength in [0, 1], relative to the most likely cell."""
    belief = np.asarray(belief, dtype=np.float64)
    peak = belief.max()
    return belief / peak if peak > 0 else np.zeros_like(belief)


def cell_colors(grid, belief=None, spec=RenderSpec()):
    """RGB colour per cell before markers and paths are drawn."""
    colors = np.tile(FREE, (grid.num_cells, 1))
    if spec.occupancy:
        colors[grid.cells == 1] = WALL
    if spec.belief and belief is not None:
        t = belief_intensity(belief)[:, None]
        free = grid.cells == 0
        colors[free] = (1 - t[free]) * colors[free] + t[free] * BELIEF
    return np.rint(colors).astype(np.uint8)


def _center(grid, cell, px):
    r, c = grid.rc(cell)
    return r * px + px // 2, c * px + px // 2


def _line(img, p0, p1, color):
    (r0, c0), (r1, c1) = p0, p1
    n = max(abs(r1 - r0), abs(c1 - c0), 1)
    for i in range(n + 1):
        r = r0 + (r1 - r0) * i // n
        c = c0 + (c1 - c0) * i // n
        img[r, c] = color


def _marker(img, grid, cell, px, color):
    r, c = grid.rc(cell)
    m = max(px // 4, 0)
    img[r * px + m: (r + 1) * px - m, c * px + m: (c + 1) * px - m] = color


def render_raster(grid, belief=None, path=(), start=None, spec=RenderSpec()):
    px = spec.cell_size
    colors = cell_colors(grid, belief, spec).reshape(grid.height, grid.width, 3)
    img = np.repeat(np.repeat(colors, px, axis=0), px, axis=1)
    if spec.path and len(path) > 1:
        for a, b in zip(path[:-1], path[1:]):
            _line(img, _center(grid, a, px), _center(grid, b, px), PATH)
    if spec.markers:
        if start is not None:
            _marker(img, grid, start, px, START)
        _marker(img, grid, grid.goal, px, GOAL)
    return img


def write_ppm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def render_svg(grid, belief=None, path=(), start=None, spec=RenderSpec()):
    px = spec.cell_size
    colors = cell_colors(grid, belief, spec)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{grid.width * px}" '
           f'height="{grid.height * px}" shape-rendering="crispEdges">']
    for cell in range(grid.num_cells):
        r, c = grid.rc(cell)
        rgb = "#%02x%02x%02x" % tuple(colors[cell])
        out.append(f'<rect x="{c * px}" y="{r * px}" width="{px}" height="{px}" fill="{rgb}"/>')
    if spec.path and len(path) > 1:
        pts = " ".join(f"{c * px + px / 2:g},{r * px + px / 2:g}" for r, c in (grid.rc(p) for p in path))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#141414" stroke-width="{max(px / 6, 1):g}"/>')
    if spec.markers:
        for cell, rgb in ((start, "#1ea028"), (grid.goal, "#c81e1e")):
            if cell is None:
                continue
            r, c = grid.rc(cell)
            out.append(f'<circle cx="{c * px + px / 2:g}" cy="{r * px + px / 2:g}" r="{px / 3:g}" fill="{rgb}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_image(path, grid, belief=None, trajectory=(), start=None, spec=RenderSpec()):
    if spec.fmt == "svg":
        with open(path, "w") as fh:
            fh.write(render_svg(grid, belief, trajectory, start, spec))
    else:
        write_ppm(path, render_raster(grid, belief, trajectory, start, spec))
