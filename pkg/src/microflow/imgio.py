"""Frame-directory image I/O: numbered PNG/PGM frames in, PNG/PGM out.

RGB inputs convert to grayscale with Rec. 601 luma; grayscale is stored in
[0, 1] and written back with round(v * 255) quantization.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .facemesh import ValidationError

_FRAME_FILE = re.compile(r"^frame_(\d{6})\.(png|pgm)$")

# Rec. 601 luma weights for RGB -> grayscale.
_LUMA = np.array([0.299, 0.587, 0.114])


def list_frame_files(frames_dir) -> list:
    """Frame files named frame_%06d.png/.pgm, ordered and contiguous from 0."""
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"frame directory not found: {frames_dir}")
    found = {}
    for entry in frames_dir.iterdir():
        m = _FRAME_FILE.match(entry.name)
        if m:
            found[int(m.group(1))] = entry
    if not found:
        raise ValidationError(f"no frame_%06d.png/.pgm files in {frames_dir}")
    missing = [i for i in range(max(found) + 1) if i not in found]
    if missing:
        raise ValidationError([f"missing frame file for index {i}" for i in missing])
    return [found[i] for i in range(len(found))]


def read_frame(path):
    """Read one frame; returns (gray float64 in [0, 1], rgb uint8 (H, W, 3))."""
    with Image.open(path) as img:
        if img.mode == "L":
            gray8 = np.asarray(img, dtype=np.uint8)
            rgb = np.repeat(gray8[:, :, None], 3, axis=2)
            return gray8 / 255.0, rgb
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    gray = (rgb / 255.0) @ _LUMA
    return np.clip(gray, 0.0, 1.0), rgb


def write_gray_png(path, grid: np.ndarray) -> None:
    Image.fromarray(quantize(grid), mode="L").save(path, format="PNG")


def write_rgb_png(path, rgb: np.ndarray) -> None:
    arr = np.asarray(rgb, dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def write_pgm(path, grid: np.ndarray) -> None:
    """Binary 8-bit PGM (P5)."""
    data = quantize(grid)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def quantize(grid: np.ndarray) -> np.ndarray:
    """round(v * 255) as uint8."""
    return np.clip(np.rint(np.asarray(grid, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
