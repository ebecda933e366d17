"""Software rasteriser for egocentric and full-arena RGB frames."""
from __future__ import annotations

import numpy as np

from .physics import AGENT, DISTRACTOR, ArenaState

FLOOR = (40, 40, 40)
WALL = (128, 128, 128)
GOAL = (30, 170, 60)
AGENT_COLOR = (0, 128, 160)
DISTRACTOR_COLOR = (235, 235, 225)
OBJECT_COLORS = (
    (220, 40, 40),
    (235, 210, 30),
    (60, 80, 240),
    (200, 60, 200),
    (250, 130, 20),
)
SHAPES = ("circle", "square", "triangle", "diamond", "cross")


def shape_mask(shape: str, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
    """Pixel coverage in body-local coordinates (y up)."""
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        s = 0.8 * r
        return (np.abs(dx) <= s) & (np.abs(dy) <= s)
    if shape == "triangle":
        return (dy >= -0.5 * r) & (np.abs(dx) <= (r - dy) * 0.57735)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if shape == "cross":
        ax, ay = np.abs(dx), np.abs(dy)
        return ((ax <= 0.3 * r) & (ay <= r)) | ((ay <= 0.3 * r) & (ax <= r))
    raise ValueError(f"unknown shape {shape!r}")


def _draw_body(img, xs, ys, cx, cy, r, shape, color):
    """``xs`` (W,) and ``ys`` (H,) are world coordinates of pixel centres."""
    cols = np.flatnonzero((xs >= cx - r) & (xs <= cx + r))
    rows = np.flatnonzero((ys >= cy - r) & (ys <= cy + r))
    if not len(cols) or not len(rows):
        return
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    dx = xs[None, c0:c1] - cx
    dy = ys[r0:r1, None] - cy
    mask = shape_mask(shape, dx, dy, r)
    img[r0:r1, c0:c1][mask] = color


def rasterize(state: ArenaState, x0, y0, x1, y1, resolution) -> np.ndarray:
    """Render the world rectangle [x0, x1] x [y0, y1] to (res, res, 3) uint8."""
    res = resolution
    xs = x0 + (np.arange(res) + 0.5) * (x1 - x0) / res
    ys = y1 - (np.arange(res) + 0.5) * (y1 - y0) / res
    img = np.empty((res, res, 3), dtype=np.uint8)
    img[:] = WALL
    inside_x = (xs >= 0) & (xs <= state.width)
    inside_y = (ys >= 0) & (ys <= state.height)
    img[np.ix_(inside_y, inside_x)] = FLOOR
    gx0, gy0, gx1, gy1 = state.goal
    gxm = (xs >= gx0) & (xs <= gx1)
    gym = (ys >= gy0) & (ys <= gy1)
    img[np.ix_(gym, gxm)] = GOAL
    for k in range(state.n):
        if not state.active[k] or state.kind[k] == AGENT:
            continue
        cx, cy = state.pos[k]
        r = state.radius[k]
        if state.kind[k] == DISTRACTOR:
            _draw_body(img, xs, ys, cx, cy, r, "triangle", DISTRACTOR_COLOR)
        else:
            _draw_body(img, xs, ys, cx, cy, r, SHAPES[state.shape[k]],
                       OBJECT_COLORS[state.color[k]])
    ax, ay = state.pos[0]
    _draw_body(img, xs, ys, ax, ay, state.radius[0], "circle", AGENT_COLOR)
    return img


def view_rect(state: ArenaState, view_size: float):
    ax, ay = state.pos[0]
    h = view_size / 2
    return ax - h, ay - h, ax + h, ay + h


def render_partial(state: ArenaState, resolution: int, view_size: float) -> np.ndarray:
    """Egocentric crop centred on the agent; outside the arena is wall colour."""
    return rasterize(state, *view_rect(state, view_size), resolution)


def render_full(state: ArenaState, resolution: int) -> np.ndarray:
    side = max(state.width, state.height)
    return rasterize(state, 0.0, 0.0, side, side, resolution)
