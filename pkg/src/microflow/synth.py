"""Synthetic sequences with known ground truth.

Three kinds:

* still  - identical frames under a static mesh; every flow should vanish.
* rigid  - one global affine (default: 3 px/frame translation) moves mesh and
           texture together; canonical flow should vanish while raw-frame
           flow sees the full motion.
* deform - the texture deforms as if one landmark moved, but the emitted
           landmarks stay fixed, so the motion is visible only as flow inside
           the triangles incident to that landmark.

Frames render from an analytic band-limited cosine texture, so ground truth
is exact up to 8-bit quantization. Every sequence writes frames/, the two
mesh JSON files, and a truth.json sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .facemesh import CanonicalModel, save_canonical_model, save_landmark_sequence, triangle_index_map
from .warp import TriangleAffine, apply_affine, invert_affine, solve_affine

DEFAULT_CANVAS = (160, 160)
DEFAULT_FRAME_SIZE = (256, 256)
DEFAULT_MESH_POINTS = (5, 5)

KINDS = ("still", "rigid", "deform")


@dataclass(frozen=True, eq=False)
class CosineTexture:
    """Sum of random-direction cosine waves: smooth, band-limited, analytic.

    Values stay inside [0.5 - amplitude, 0.5 + amplitude]; multiple wave
    directions per scale keep local gradients two-dimensional so patch
    solves are well conditioned almost everywhere.
    """

    amplitudes: np.ndarray
    freq_x: np.ndarray
    freq_y: np.ndarray
    phases: np.ndarray

    def sample(self, x, y):
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        waves = np.cos(2.0 * np.pi * (self.freq_x * x + self.freq_y * y) + self.phases)
        return 0.5 + (waves * self.amplitudes).sum(axis=-1)

    def grid(self, width: int, height: int) -> np.ndarray:
        xs, ys = np.meshgrid(np.arange(width), np.arange(height))
        return self.sample(xs, ys)


def cosine_texture(seed: int = 0, wavelengths=(48.0, 24.0, 12.0),
                   amplitude: float = 0.42, waves_per_scale: int = 4) -> CosineTexture:
    rng = np.random.default_rng(seed)
    n = len(wavelengths) * waves_per_scale
    amps, fxs, fys, phs = [], [], [], []
    for lam in wavelengths:
        base = rng.uniform(0, np.pi)
        for j in range(waves_per_scale):
            ang = base + j * np.pi / waves_per_scale + rng.uniform(-0.2, 0.2)
            fxs.append(np.cos(ang) / lam)
            fys.append(np.sin(ang) / lam)
            phs.append(rng.uniform(0, 2 * np.pi))
            amps.append(amplitude / n)
    return CosineTexture(amplitudes=np.array(amps), freq_x=np.array(fxs),
                         freq_y=np.array(fys), phases=np.array(phs))


def lattice_model(canvas=DEFAULT_CANVAS, points=DEFAULT_MESH_POINTS, margin: float = 8.0) -> CanonicalModel:
    """Regular landmark lattice over the canvas, each cell split into 2 triangles."""
    w, h = canvas
    cols, rows = points
    xs = np.linspace(margin, w - 1 - margin, cols)
    ys = np.linspace(margin, h - 1 - margin, rows)
    landmarks = np.array([[x, y] for y in ys for x in xs])
    tris = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            b = a + 1
            d = a + cols
            e = d + 1
            tris.append([a, b, d])
            tris.append([b, e, d])
    return CanonicalModel(canvas_width=w, canvas_height=h,
                          landmarks=landmarks, triangles=np.array(tris))


def _placement(frame_size, canvas, offset, velocity, rotation_deg, scale, i: int) -> TriangleAffine:
    """Canvas -> frame map for frame i: rotate/scale about the canvas center,
    then translate by offset + i * velocity."""
    cw, ch = canvas
    center = np.array([(cw - 1) / 2.0, (ch - 1) / 2.0])
    theta = np.deg2rad(rotation_deg) * i
    s = scale ** i
    rot = s * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    t = center - rot @ center + np.asarray(offset, dtype=np.float64) + i * np.asarray(velocity, dtype=np.float64)
    return TriangleAffine(m=np.column_stack([rot, t]))


def _render_plain(tex: CosineTexture, placement: TriangleAffine, frame_size) -> np.ndarray:
    """Frame pixels pulled from canvas texture space through the placement map."""
    w, h = frame_size
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inv = invert_affine(placement).m
    cx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    cy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return np.clip(tex.sample(cx, cy), 0.0, 1.0)


def _render_deformed(tex: CosineTexture, model: CanonicalModel, placement: TriangleAffine,
                     deformed_landmarks: np.ndarray, frame_size) -> np.ndarray:
    """Frame whose content follows a deformed mesh while outside pixels keep
    the undeformed placement."""
    w, h = frame_size
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inv = invert_affine(placement).m
    cx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    cy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    idx = triangle_index_map(deformed_landmarks, model.triangles, w, h)
    for k in range(model.triangle_count):
        sel = idx == k
        if not sel.any():
            continue
        to_canvas = solve_affine(deformed_landmarks[model.triangles[k]],
                                 model.landmarks[model.triangles[k]], k=k).m
        px, py = xs[sel], ys[sel]
        cx[sel] = to_canvas[0, 0] * px + to_canvas[0, 1] * py + to_canvas[0, 2]
        cy[sel] = to_canvas[1, 0] * px + to_canvas[1, 1] * py + to_canvas[1, 2]
    return np.clip(tex.sample(cx, cy), 0.0, 1.0)


def generate_sequence(kind: str, out_dir, frames: int = 8, seed: int = 0,
                      frame_size=DEFAULT_FRAME_SIZE, canvas=DEFAULT_CANVAS,
                      mesh_points=DEFAULT_MESH_POINTS, offset=(40.0, 40.0),
                      velocity=(3.0, 0.0), rotation_deg: float = 0.0, scale: float = 1.0,
                      deform_landmark: int | None = None, deform_offset=(2.0, 0.0),
                      wavelengths=(48.0, 24.0, 12.0)) -> dict:
    """Write one synthetic sequence and its ground-truth sidecar; returns the truth dict."""
    if kind not in KINDS:
        raise ValueError(f"unknown sequence kind {kind!r}; expected one of {KINDS}")
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")

    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    model = lattice_model(canvas=canvas, points=mesh_points)
    tex = cosine_texture(seed=seed, wavelengths=wavelengths)
    if kind == "still":
        velocity = (0.0, 0.0)
        rotation_deg = 0.0
        scale = 1.0

    mesh_landmarks = []
    truth: dict = {"kind": kind, "frames": frames, "seed": seed,
                   "frame_size": list(frame_size), "canvas": list(canvas),
                   "offset": list(map(float, offset))}

    if kind in ("still", "rigid"):
        placements = []
        for i in range(frames):
            placement = _placement(frame_size, canvas, offset, velocity, rotation_deg, scale, i)
            placements.append(placement.m.tolist())
            grid = _render_plain(tex, placement, frame_size)
            imgio.write_gray_png(frames_dir / f"frame_{i:06d}.png", grid)
            mesh_landmarks.append(apply_affine(placement, model.landmarks))
        truth.update({
            "velocity": list(map(float, velocity)),
            "rotation_deg_per_frame": float(rotation_deg),
            "scale_per_frame": float(scale),
            "placements": placements,
            "expected_canonical_motion_px": 0.0,
        })
    else:
        cols, rows = mesh_points
        landmark = deform_landmark if deform_landmark is not None else (rows // 2) * cols + cols // 2
        if not (0 <= landmark < model.landmark_count):
            raise ValueError(f"deform landmark {landmark} out of range [0, {model.landmark_count})")
        placement = _placement(frame_size, canvas, offset, (0.0, 0.0), 0.0, 1.0, 0)
        base_landmarks = apply_affine(placement, model.landmarks)
        deformed = base_landmarks.copy()
        deformed[landmark] += np.asarray(deform_offset, dtype=np.float64)
        for i in range(frames):
            if i == 0:
                grid = _render_plain(tex, placement, frame_size)
            else:
                grid = _render_deformed(tex, model, placement, deformed, frame_size)
            imgio.write_gray_png(frames_dir / f"frame_{i:06d}.png", grid)
            mesh_landmarks.append(base_landmarks)
        incident = [int(k) for k in range(model.triangle_count)
                    if landmark in model.triangles[k]]
        truth.update({
            "landmark": int(landmark),
            "deform_offset": list(map(float, deform_offset)),
            "incident_triangles": incident,
            "placement": placement.m.tolist(),
        })

    save_canonical_model(model, out_dir / "canonical.json")
    save_landmark_sequence(out_dir / "landmarks.json", model.triangles, mesh_landmarks)
    (out_dir / "truth.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return truth
