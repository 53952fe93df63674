"""Grid resampling helpers shared by the warp, flow, and synthesis stages."""

from __future__ import annotations

import numpy as np


def bilinear_sample(grid: np.ndarray, x, y) -> np.ndarray:
    """Sample a 2D grid at fractional (x, y) positions with clamp-to-edge.

    Coordinates follow the pixel-center convention: (0, 0) is the center of
    the top-left pixel. Positions outside the grid clamp to the nearest edge
    pixel, which avoids manufacturing artificial dark borders.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = grid.shape

    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0

    top = grid[y0, x0] * (1.0 - fx) + grid[y0, x1] * fx
    bot = grid[y1, x0] * (1.0 - fx) + grid[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def box_downsample2(grid: np.ndarray) -> np.ndarray:
    """Halve a grid by 2x2 box averaging; trailing odd row/column is dropped."""
    h2, w2 = grid.shape[0] // 2, grid.shape[1] // 2
    g = grid[:2 * h2, :2 * w2]
    return 0.25 * (g[0::2, 0::2] + g[0::2, 1::2] + g[1::2, 0::2] + g[1::2, 1::2])


def mask_downsample2(mask: np.ndarray) -> np.ndarray:
    """Halve a boolean mask; a coarse cell is true only if all 4 pixels are."""
    h2, w2 = mask.shape[0] // 2, mask.shape[1] // 2
    m = mask[:2 * h2, :2 * w2]
    return m[0::2, 0::2] & m[0::2, 1::2] & m[1::2, 0::2] & m[1::2, 1::2]


def resize_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize a grid with bilinear sampling, pixel centers aligned."""
    sy = grid.shape[0] / height
    sx = grid.shape[1] / width
    xs = (np.arange(width) + 0.5) * sx - 0.5
    ys = (np.arange(height) + 0.5) * sy - 0.5
    return bilinear_sample(grid, xs[None, :], ys[:, None])
