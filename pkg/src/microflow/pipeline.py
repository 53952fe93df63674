"""End-to-end orchestration over a frame directory.

For every frame: embed on the canonical canvas, measure flow against the
reference embedding (frame 0) or the previous one, carry the vectors back
to frame coordinates, and rasterize arrow overlays. Emits canonical PNGs,
MFLW/CSV flow files, overlay PNGs, and a JSON summary.

Everything downstream of ingestion is pure and per-frame independent given
the reference embedding, so frames could be processed concurrently; this
implementation stays sequential and byte-deterministic.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .facemesh import (
    CanonicalModel,
    Frame,
    FrameSequence,
    ValidationError,
    load_canonical_model,
    load_landmark_sequence,
)
from .optflow import FlowField, FlowParams, compute_flow, write_flow, write_flow_csv
from .overlay import OverlayStyle, coverage_fraction, render_arrows, select_arrows
from .warp import CanonicalFrame, warp_to_canonical

MODES = ("reference", "consecutive")
EMIT_KINDS = frozenset({"canonical", "flow", "overlay", "csv"})


@dataclass(frozen=True)
class PipelineConfig:
    frames_dir: str
    landmarks_path: str
    canonical_path: str
    out_dir: str
    mode: str = "reference"
    flow: FlowParams = FlowParams()
    style: OverlayStyle = OverlayStyle()
    emit: frozenset = EMIT_KINDS

    def __post_init__(self):
        for name in ("frames_dir", "landmarks_path", "canonical_path", "out_dir"):
            if not str(getattr(self, name)):
                raise ValidationError(f"config: {name} must be a non-empty path")
        if self.mode not in MODES:
            raise ValidationError(f"config: mode must be one of {MODES}, got {self.mode!r}")
        emit = frozenset(self.emit)
        unknown = emit - EMIT_KINDS
        if unknown:
            raise ValidationError(f"config: unknown emit kinds {sorted(unknown)}")
        object.__setattr__(self, "emit", emit)


@dataclass(frozen=True, eq=False)
class FrameResult:
    frame_index: int
    canonical: CanonicalFrame
    flow: FlowField | None
    arrows: list
    annotated: np.ndarray
    stats: dict


def _flow_stats(flow: FlowField | None) -> dict:
    if flow is None:
        return {"valid_sites": 0, "mean_d": 0.0, "median_d": 0.0, "max_d": 0.0}
    mags = flow.magnitudes()
    if mags.size == 0:
        return {"valid_sites": 0, "mean_d": 0.0, "median_d": 0.0, "max_d": 0.0}
    return {
        "valid_sites": int(mags.size),
        "mean_d": float(mags.mean()),
        "median_d": float(np.median(mags)),
        "max_d": float(mags.max()),
    }


def run_pipeline(config: PipelineConfig):
    """Run the four analysis steps over one sequence.

    Returns (results, summary); the summary is also written to
    out_dir/summary.json. Ingestion/validation failures raise with a
    frame-indexed diagnostic; degenerate triangles only warn.
    """
    t0 = time.perf_counter()
    warnings: list = []

    model = load_canonical_model(config.canonical_path)
    meshes, topology = load_landmark_sequence(config.landmarks_path)
    files = imgio.list_frame_files(config.frames_dir)
    if len(files) != len(meshes):
        raise ValidationError(
            f"frame count mismatch: {len(files)} image frames vs {len(meshes)} landmark frames")
    if meshes[0].landmark_count != model.landmark_count:
        raise ValidationError(
            f"landmark count mismatch: sequence has {meshes[0].landmark_count}, "
            f"model has {model.landmark_count}")
    if topology.shape != model.triangles.shape or np.any(topology != model.triangles):
        raise ValidationError("topology mismatch: landmark sequence and canonical model differ")

    grays, rgbs = [], []
    for path in files:
        gray, rgb = imgio.read_frame(path)
        grays.append(gray)
        rgbs.append(rgb)
    sequence = FrameSequence(frames=tuple(Frame(g) for g in grays))
    p = len(sequence)
    if p < 2:
        warnings.append("p < 2: no flow fields computed")

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    canonicals = []
    for i in range(p):
        cf = warp_to_canonical(sequence.frames[i], meshes[i], model)
        if cf.degenerate_triangles:
            warnings.append(
                f"frame {i}: skipped {len(cf.degenerate_triangles)} degenerate triangle(s)")
        canonicals.append(cf)

    results = []
    for i in range(p):
        if i == 0:
            flow = None
        else:
            ref = canonicals[0] if config.mode == "reference" else canonicals[i - 1]
            flow = compute_flow(ref, canonicals[i], config.flow)
        arrows = [] if flow is None else select_arrows(flow, config.style, model, meshes[i])
        annotated = render_arrows(rgbs[i], arrows, config.style)
        stats = _flow_stats(flow)
        stats["degenerate_triangles"] = len(canonicals[i].degenerate_triangles)
        stats["arrows"] = len(arrows)
        stats["coverage_fraction"] = coverage_fraction(rgbs[i], annotated)
        results.append(FrameResult(frame_index=i, canonical=canonicals[i], flow=flow,
                                   arrows=arrows, annotated=annotated, stats=stats))

        if "canonical" in config.emit:
            imgio.write_gray_png(out_dir / f"canonical_{i:06d}.png", canonicals[i].intensity)
        if "overlay" in config.emit:
            imgio.write_rgb_png(out_dir / f"overlay_{i:06d}.png", annotated)
        if flow is not None and "flow" in config.emit:
            write_flow(out_dir / f"flow_{i:06d}.mflw", flow)
        if flow is not None and "csv" in config.emit:
            write_flow_csv(out_dir / f"flow_{i:06d}.csv", flow)

    summary = summarize(results, config=config, warnings=warnings,
                        wall_time_s=time.perf_counter() - t0)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return results, summary


def summarize(results, config: PipelineConfig | None = None, warnings=(), wall_time_s=None) -> dict:
    """Aggregate per-frame stats into the run summary."""
    if not results:
        raise ValidationError("cannot summarize an empty result list")
    pooled = np.concatenate([r.flow.magnitudes() for r in results if r.flow is not None]
                            or [np.zeros(0)])
    frames = [{"index": r.frame_index, **r.stats} for r in results]
    summary = {
        "frames": len(results),
        "flow_fields": sum(1 for r in results if r.flow is not None),
        "mean_coverage_fraction": float(np.mean([r.stats["coverage_fraction"] for r in results])),
        "median_flow_px": float(np.median(pooled)) if pooled.size else 0.0,
        "total_valid_sites": int(pooled.size),
        "per_frame": frames,
        "warnings": list(warnings),
    }
    if config is not None:
        cfg = dataclasses.asdict(config)
        cfg["emit"] = sorted(cfg["emit"])
        for key in ("frames_dir", "landmarks_path", "canonical_path", "out_dir"):
            cfg[key] = str(cfg[key])
        summary["config"] = cfg
    if wall_time_s is not None:
        summary["wall_time_s"] = float(wall_time_s)
    return summary
