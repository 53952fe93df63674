"""Thin adapter between a face-mesh detector and the microflow file schemas.

Runs a detector over a numbered frame directory and writes the two JSON
files the analysis pipeline consumes:

* landmark sequence: {"triangles":[[a,b,c],...],"frames":[{"index":0,"landmarks":[[x,y],...]},...]}
* canonical model:   {"canvas":[W,H],"landmarks":[[u,v],...],"triangles":[[a,b,c],...]}

Coordinates are printed with 9 significant digits; frames where detection
fails are omitted and reported in a `.warnings.json` sidecar (a miss on
frame 0 is fatal because it is the flow reference).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .detectors import BACKENDS, DetectorUnavailableError, make_backend

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "DetectorUnavailableError",
    "BACKENDS",
    "extract_landmarks",
    "export_canonical",
    "make_backend",
]

_FRAME_FILE = re.compile(r"^frame_(\d{6})\.(png|pgm)$")


class AdapterError(ValueError):
    """Bad configuration or a fatal detection failure."""


@dataclass(frozen=True)
class AdapterConfig:
    frames_dir: str
    out_landmarks: str
    out_canonical: str
    canvas: tuple = (512, 512)
    min_detection_confidence: float = 0.5

    def __post_init__(self):
        w, h = self.canvas
        if int(w) < 1 or int(h) < 1:
            raise AdapterError(f"canvas must be positive, got {self.canvas}")
        if not (0.0 < self.min_detection_confidence < 1.0):
            raise AdapterError(
                f"min_detection_confidence must be in (0, 1), got {self.min_detection_confidence}")
        object.__setattr__(self, "canvas", (int(w), int(h)))


def _round9(value: float) -> float:
    """Quantize to 9 significant digits so the printed form is lossless."""
    return float(f"{value:.9g}")


def _frame_files(frames_dir) -> list:
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"frame directory not found: {frames_dir}")
    found = {}
    for entry in frames_dir.iterdir():
        m = _FRAME_FILE.match(entry.name)
        if m:
            found[int(m.group(1))] = entry
    if not found:
        raise AdapterError(f"no frame_%06d.png/.pgm files in {frames_dir}")
    missing = [i for i in range(max(found) + 1) if i not in found]
    if missing:
        raise AdapterError(f"missing frame files for indices {missing}")
    return [found[i] for i in range(len(found))]


def _read_frame(path):
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    gray = rgb @ np.array([0.299, 0.587, 0.114]) / 255.0
    return gray, rgb


def extract_landmarks(config: AdapterConfig, backend) -> dict:
    """Detect landmarks over the frame directory and write the sequence JSON.

    Returns a summary: frames seen, frames detected, gap warnings, and the
    sidecar path when any frame was missed.
    """
    files = _frame_files(config.frames_dir)
    entries = []
    warnings = []
    for i, path in enumerate(files):
        gray, rgb = _read_frame(path)
        landmarks = backend.detect(gray, rgb)
        if landmarks is None:
            if i == 0:
                raise AdapterError(
                    f"no face detected in frame 0 ({path.name}); "
                    "the reference frame must contain a detectable face")
            warnings.append({"frame": i, "file": path.name, "reason": "no face detected"})
            continue
        if len(landmarks) != backend.landmark_count:
            raise AdapterError(
                f"frame {i}: detector returned {len(landmarks)} landmarks, "
                f"expected {backend.landmark_count}")
        entries.append({
            "index": i,
            "landmarks": [[_round9(x), _round9(y)] for x, y in np.asarray(landmarks)],
        })

    doc = {
        "triangles": [[int(a), int(b), int(c)] for a, b, c in backend.triangles],
        "frames": entries,
    }
    out = Path(config.out_landmarks)
    out.write_text(json.dumps(doc) + "\n", encoding="utf-8")

    sidecar = None
    if warnings:
        sidecar = out.with_suffix(".warnings.json")
        sidecar.write_text(json.dumps(warnings, indent=2) + "\n", encoding="utf-8")
    return {
        "frames": len(files),
        "detected": len(entries),
        "gaps": [w["frame"] for w in warnings],
        "warnings_path": str(sidecar) if sidecar else None,
    }


def export_canonical(config: AdapterConfig, backend) -> dict:
    """Write the backend's canonical layout scaled to the configured canvas."""
    w, h = config.canvas
    unit = np.asarray(backend.canonical_unit, dtype=np.float64)
    scaled = unit * (w - 1, h - 1)
    doc = {
        "canvas": [w, h],
        "landmarks": [[_round9(x), _round9(y)] for x, y in scaled],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in backend.triangles],
    }
    Path(config.out_canonical).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return {"canvas": [w, h], "landmarks": len(scaled), "triangles": len(backend.triangles)}
