"""Arrow annotations: turn an inverse-mapped flow field into rasterized overlays.

Arrows are sampled on a canvas lattice, filtered by magnitude, carried back
to frame coordinates through the mesh, and drawn as Bresenham segments with
two 30-degree head strokes. The flow FILE always stores unscaled vectors;
the display scale only stretches what is drawn (micro-movements are
sub-pixel and invisible unscaled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .facemesh import CanonicalModel, FaceMesh
from .optflow import FlowField
from .warp import DegenerateTriangleError, OutOfMeshError, map_vector_to_original

# Angle between the shaft and each head stroke.
_HEAD_ANGLE = math.pi / 6


@dataclass(frozen=True)
class OverlayStyle:
    grid_step: int = 8
    scale: float = 4.0
    min_magnitude: float = 0.15
    head_length: float = 3.0
    color: tuple = (0, 255, 0)
    thickness: int = 1

    def __post_init__(self):
        if self.grid_step < 1:
            raise ValueError(f"grid_step must be >= 1, got {self.grid_step}")
        if not (self.scale > 0):
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if self.min_magnitude < 0:
            raise ValueError(f"min_magnitude must be >= 0, got {self.min_magnitude}")
        if self.thickness < 1:
            raise ValueError(f"thickness must be >= 1, got {self.thickness}")
        if len(self.color) != 3 or any(not (0 <= v <= 255) for v in self.color):
            raise ValueError(f"color must be an RGB triple in 0..255, got {self.color}")


@dataclass(frozen=True, eq=False)
class Arrow:
    """One displayed arrow in frame coordinates.

    magnitude is the unscaled canonical-pixel |d| that produced the arrow.
    """

    base: np.ndarray
    tip: np.ndarray
    magnitude: float

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=np.float64).reshape(2))
        object.__setattr__(self, "tip", np.asarray(self.tip, dtype=np.float64).reshape(2))


def select_arrows(field: FlowField, style: OverlayStyle,
                  model: CanonicalModel, mesh: FaceMesh) -> list:
    """Pick lattice sites worth drawing and map them into frame coordinates.

    Keeps valid sites on the grid_step lattice with |d| >= min_magnitude;
    sites outside the mesh (or in a collapsed frame triangle) are dropped.
    """
    arrows = []
    xs = field.site_x()
    ys = field.site_y()
    for r in range(field.rows):
        y = int(ys[r])
        if y % style.grid_step:
            continue
        for c in range(field.cols):
            x = int(xs[c])
            if x % style.grid_step or not field.valid[r, c]:
                continue
            d = field.d[r, c]
            mag = float(np.hypot(d[0], d[1]))
            if mag < style.min_magnitude:
                continue
            try:
                base, vec = map_vector_to_original((x, y), d, model, mesh)
            except (OutOfMeshError, DegenerateTriangleError):
                continue
            arrows.append(Arrow(base=base, tip=base + style.scale * vec, magnitude=mag))
    return arrows


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list:
    """Integer pixels of the line segment from (x0, y0) to (x1, y1), inclusive."""
    pixels = []
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        pixels.append((x, y))
        if x == x1 and y == y1:
            return pixels
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def arrow_pixels(arrow: Arrow, style: OverlayStyle) -> list:
    """Raster of one arrow: shaft plus two head strokes; zero-length arrows
    collapse to a single pixel."""
    bx, by = (int(v) for v in np.rint(arrow.base))
    tx, ty = (int(v) for v in np.rint(arrow.tip))
    pixels = bresenham_line(bx, by, tx, ty)
    vx, vy = arrow.tip - arrow.base
    length = math.hypot(vx, vy)
    if length > 1e-12:
        theta = math.atan2(vy, vx)
        for side in (-1, 1):
            phi = theta + math.pi + side * _HEAD_ANGLE
            hx = int(round(tx + style.head_length * math.cos(phi)))
            hy = int(round(ty + style.head_length * math.sin(phi)))
            pixels.extend(bresenham_line(tx, ty, hx, hy))
    return pixels


def render_arrows(frame_rgb: np.ndarray, arrows, style: OverlayStyle = OverlayStyle()) -> np.ndarray:
    """Draw arrows onto a copy of an RGB frame; out-of-frame pixels clip.

    Deterministic: arrows draw in list order, later arrows overwrite.
    """
    img = np.array(frame_rgb, dtype=np.uint8, copy=True)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"frame must be (H, W, 3) RGB, got {img.shape}")
    h, w = img.shape[:2]
    color = np.array(style.color, dtype=np.uint8)
    t0 = -(style.thickness // 2)
    offsets = range(t0, t0 + style.thickness)
    for arrow in arrows:
        for x, y in arrow_pixels(arrow, style):
            for ox in offsets:
                for oy in offsets:
                    px, py = x + ox, y + oy
                    if 0 <= px < w and 0 <= py < h:
                        img[py, px] = color
    return img


def coverage_fraction(original: np.ndarray, annotated: np.ndarray) -> float:
    """Fraction of pixels whose RGB differs between the two images."""
    a = np.asarray(original)
    b = np.asarray(annotated)
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch: {a.shape} vs {b.shape}")
    return float(np.any(a != b, axis=-1).mean())
